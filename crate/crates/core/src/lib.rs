pub mod error;
pub mod evolution;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod tensor;
pub mod tree;
pub mod ttn;
pub mod ttno;
pub mod ttns;

pub use error::{Result, TtnError};
pub use tensor::{DenseTensor, C64};
pub use tree::{NodeId, TreeTopology};
pub use ttn::{LegSpecification, Node, TreeTensorNetwork};
pub use ttno::{StateDiagram, Ttno};
pub use ttns::Ttns;
