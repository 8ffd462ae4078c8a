//! Tree tensor network operators.
//!
//! Every node carries its virtual legs (parent, children) followed by an
//! output leg and an input leg of equal dimension.

mod diagram;
mod svd;

use indexmap::IndexMap;
use nalgebra::DMatrix;

pub use diagram::{Hyperedge, LabelledTerm, StateDiagram};
pub use svd::{ttno_from_dense, NUMERIC_RANK_TOL};

use crate::error::{Result, TtnError};
use crate::operators::{Hamiltonian, SiteDims, SymbolTable};
use crate::tensor::{DenseTensor, C64};
use crate::tree::{NodeId, TreeTopology};
use crate::ttn::TreeTensorNetwork;

#[derive(Clone, Debug, PartialEq)]
pub struct Ttno {
    network: TreeTensorNetwork,
}

impl Ttno {
    /// Wraps a network after checking that every node has an (out, in) pair
    /// of open legs with equal dimensions.
    pub fn from_network(network: TreeTensorNetwork) -> Result<Self> {
        for n in network.node_ids() {
            let dims = network.open_dims(n)?;
            if dims.len() != 2 || dims[0] != dims[1] {
                return Err(TtnError::Incompatible(format!(
                    "operator node `{n}` needs one output and one input leg of equal size, found {dims:?}"
                )));
            }
        }
        Ok(Self { network })
    }

    /// Compiles a symbolic Hamiltonian through a compressed state diagram.
    pub fn from_hamiltonian(h: &Hamiltonian, tree: &TreeTopology, dims: &SiteDims) -> Result<Self> {
        let d = StateDiagram::from_hamiltonian(h, tree, dims)?;
        Self::from_state_diagram(&d, &h.symbols, dims)
    }

    /// Reads the node tensors off a state diagram: every hyperedge adds its
    /// coefficient times its label's matrix to the block addressed by its
    /// vertex indices. An empty diagram yields the zero operator with unit
    /// bonds.
    pub fn from_state_diagram(d: &StateDiagram, symbols: &SymbolTable, dims: &SiteDims) -> Result<Self> {
        let tree = d.tree();
        let counts = d.vertex_counts();
        let bond = |a: &NodeId, b: &NodeId| -> usize {
            let n = counts
                .get(&(a.clone(), b.clone()))
                .or_else(|| counts.get(&(b.clone(), a.clone())))
                .copied()
                .unwrap_or(0);
            n.max(1)
        };
        let mut tensors = IndexMap::new();
        for n in tree.nodes() {
            let phys = *dims
                .get(n)
                .ok_or_else(|| TtnError::Operator(format!("no physical dimension given for `{n}`")))?;
            let neighbours = tree.neighbours(n)?;
            let mut shape: Vec<usize> = neighbours.iter().map(|m| bond(n, m)).collect();
            shape.extend([phys, phys]);
            let mut t = DenseTensor::zeros(&shape);
            let strides = t.strides();
            let nv = neighbours.len();
            for h in d.hyperedges(n)? {
                let m = symbols.get(&h.label)?;
                if m.dim(0) != phys {
                    return Err(TtnError::Operator(format!(
                        "symbol `{}` has dimension {} but site `{n}` has {phys}",
                        h.label,
                        m.dim(0)
                    )));
                }
                let base: usize = neighbours
                    .iter()
                    .enumerate()
                    .map(|(k, nb)| h.vertices[nb] * strides[k])
                    .sum();
                let data = t.data_mut();
                for i in 0..phys {
                    for j in 0..phys {
                        data[base + i * strides[nv] + j] += h.coeff * m.get(&[i, j]);
                    }
                }
            }
            tensors.insert(n.clone(), t);
        }
        Self::from_network(TreeTensorNetwork::from_parts(tree.clone(), tensors)?)
    }

    pub fn network(&self) -> &TreeTensorNetwork {
        &self.network
    }

    pub fn into_network(self) -> TreeTensorNetwork {
        self.network
    }

    pub fn topology(&self) -> &TreeTopology {
        self.network.topology()
    }

    pub fn tensor(&self, id: &NodeId) -> Result<&DenseTensor> {
        self.network.tensor(id)
    }

    pub fn bond_dims(&self) -> IndexMap<(NodeId, NodeId), usize> {
        self.network.bond_dims()
    }

    pub fn total_entries(&self) -> usize {
        self.network.total_entries()
    }

    pub fn physical_dims(&self) -> SiteDims {
        self.network
            .node_ids()
            .map(|n| (n.clone(), self.network.open_dims(n).expect("exists")[0]))
            .collect()
    }

    /// Dense matrix of the operator. Rows and columns enumerate the sites in
    /// `site_order`, the first site being the most significant index.
    pub fn to_dense(&self, site_order: &[NodeId], cap: usize) -> Result<DMatrix<C64>> {
        let dims = self.physical_dims();
        if site_order.len() != dims.len() || site_order.iter().any(|n| !dims.contains_key(n)) {
            return Err(TtnError::Incompatible(
                "site order must list every operator node once".into(),
            ));
        }
        let size: usize = site_order.iter().map(|n| dims[n]).product();
        if size > cap {
            return Err(TtnError::CapExceeded { size, cap });
        }
        let full = self.network.completely_contract_tree()?;
        let pos: IndexMap<NodeId, usize> = self
            .topology()
            .pre_order()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let rows: Vec<usize> = site_order.iter().map(|n| 2 * pos[n]).collect();
        let cols: Vec<usize> = site_order.iter().map(|n| 2 * pos[n] + 1).collect();
        full.to_matrix(&rows, &cols)
    }
}
