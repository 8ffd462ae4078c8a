use thiserror::Error;

use crate::tree::NodeId;

#[derive(Debug, Error)]
pub enum TtnError {
    #[error("degenerate shape {0:?}: every dimension must be at least 1")]
    DegenerateShape(Vec<usize>),

    #[error("shape {shape:?} holds {expected} entries but {actual} were supplied")]
    EntryCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("invalid permutation {perm:?} for a degree-{degree} tensor")]
    InvalidPermutation { perm: Vec<usize>, degree: usize },

    #[error("cannot reshape {from:?} into {to:?}")]
    InvalidReshape { from: Vec<usize>, to: Vec<usize> },

    #[error(
        "dimension mismatch: leg {leg_a} of the first tensor has dimension {dim_a}, \
         leg {leg_b} of the second has dimension {dim_b}"
    )]
    DimensionMismatch {
        leg_a: usize,
        dim_a: usize,
        leg_b: usize,
        dim_b: usize,
    },

    #[error("leg index {leg} out of range for a degree-{degree} tensor")]
    LegOutOfRange { leg: usize, degree: usize },

    #[error("invalid leg partition: {0}")]
    InvalidPartition(String),

    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),

    #[error("duplicate node `{0}`")]
    DuplicateNode(NodeId),

    #[error("nodes `{0}` and `{1}` are not adjacent")]
    NotAdjacent(NodeId, NodeId),

    #[error("edge ({0}, {1}) is not incident to `{2}`")]
    EdgeNotIncident(NodeId, NodeId, NodeId),

    #[error("invalid tree structure: {0}")]
    InvalidTree(String),

    #[error("leg {leg} of node `{node}` is not an open leg")]
    LegNotOpen { node: NodeId, leg: usize },

    #[error("no orthogonality centre is set; call canonical_form first")]
    NoOrthogonalityCenter,

    #[error("invalid leg specification: {0}")]
    InvalidLegSpecification(String),

    #[error("unknown operator symbol `{0}`")]
    UnknownSymbol(String),

    #[error("operator error: {0}")]
    Operator(String),

    #[error("dense size {size} exceeds the cap {cap}; use the tensor network route instead")]
    CapExceeded { size: usize, cap: usize },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TtnError>;
