//! Benchmark models: the three-armed tree, the transverse-field Ising
//! Hamiltonian on it, its initial state and magnetisation, plus a dense
//! reference integrator.

mod exact;
mod two_qubit;

pub use exact::{dense_expectation_series, error_series, exact_evolution, loglog_slope, EXACT_EIGH_CAP};
pub use two_qubit::{SplittingOrder, TwoQubitModel};

use indexmap::IndexMap;

use crate::error::{Result, TtnError};
use crate::evolution::{TrotterSplitting, TrotterStep};
use crate::operators::{pauli_library, Hamiltonian, SiteDims, TensorProduct};
use crate::tensor::{C64, ONE};
use crate::tree::{NodeId, TreeTopology};
use crate::ttns::Ttns;

/// Number of chains attached to the root.
pub const ARMS: usize = 3;

/// Id of the node at `depth` (zero-based) on `chain`: `"ck"` for chains of
/// length at most 10, `"c.k"` above so that ids stay unambiguous.
pub fn q_tree_node(chain: usize, depth: usize, l: usize) -> NodeId {
    if l > 10 {
        NodeId::new(format!("{chain}.{depth}"))
    } else {
        NodeId::new(format!("{chain}{depth}"))
    }
}

pub fn q_tree_root() -> NodeId {
    NodeId::new("0")
}

/// Root `"0"` with three chains of length `l`, every site a qubit.
pub fn build_q_tree(l: usize) -> Result<(TreeTopology, SiteDims)> {
    if l == 0 {
        return Err(TtnError::InvalidTree("chain length must be at least 1".into()));
    }
    let mut tree = TreeTopology::with_root(q_tree_root());
    for c in 0..ARMS {
        let mut parent = q_tree_root();
        for k in 0..l {
            let id = q_tree_node(c, k, l);
            tree.add_child(parent, id.clone())?;
            parent = id;
        }
    }
    let dims = tree.nodes().map(|n| (n.clone(), 2)).collect();
    Ok((tree, dims))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfiSpec {
    pub l: usize,
    pub j: f64,
    pub g: f64,
    /// Adds `Z Z Z Z` on the root and its three neighbours.
    pub four_site: bool,
}

impl TfiSpec {
    pub fn new(l: usize, j: f64, g: f64) -> Self {
        Self {
            l,
            j,
            g,
            four_site: false,
        }
    }

    pub fn with_four_site(mut self, on: bool) -> Self {
        self.four_site = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(TtnError::InvalidTree("chain length must be at least 1".into()));
        }
        if !(self.j.is_finite() && self.g.is_finite()) {
            return Err(TtnError::NonFinite("TFI couplings".into()));
        }
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        ARMS * self.l + 1
    }

    fn zz_terms(&self) -> Vec<TensorProduct> {
        let mut out = Vec::with_capacity(ARMS * self.l);
        for c in 0..ARMS {
            let mut prev = q_tree_root();
            for k in 0..self.l {
                let id = q_tree_node(c, k, self.l);
                out.push(TensorProduct::new().with(prev, "Z").with(id.clone(), "Z"));
                prev = id;
            }
        }
        out
    }

    fn sites(&self) -> Vec<NodeId> {
        std::iter::once(q_tree_root())
            .chain((0..ARMS).flat_map(|c| (0..self.l).map(move |k| q_tree_node(c, k, self.l))))
            .collect()
    }

    fn four_site_term(&self) -> TensorProduct {
        (0..ARMS).fold(TensorProduct::new().with(q_tree_root(), "Z"), |tp, c| {
            tp.with(q_tree_node(c, 0, self.l), "Z")
        })
    }
}

/// `-J sum ZZ` over tree edges, `-g sum X` over sites, and optionally `+ZZZZ`
/// around the root. Terms appear in that order.
pub fn tfi_hamiltonian(spec: &TfiSpec) -> Result<Hamiltonian> {
    spec.validate()?;
    let mut h = Hamiltonian::new(pauli_library());
    for tp in spec.zz_terms() {
        h.add_term(C64::from(-spec.j), tp);
    }
    for s in spec.sites() {
        h.add_term(C64::from(-spec.g), TensorProduct::new().with(s, "X"));
    }
    if spec.four_site {
        h.add_term(ONE, spec.four_site_term());
    }
    Ok(h)
}

/// Strang-ordered TEBD program: the edge `ZZ` gates at half step, the site
/// `X` gates at full step, then the edge gates again in reverse order.
pub fn tfi_strang_splitting(spec: &TfiSpec) -> Result<TrotterSplitting> {
    spec.validate()?;
    if spec.four_site {
        return Err(TtnError::Unsupported(
            "the four-site term has no nearest-neighbour TEBD splitting; use a TDVP method".into(),
        ));
    }
    let zz = spec.zz_terms().into_iter().map(|tp| TrotterStep::new(tp, -spec.j)).collect();
    let x = spec
        .sites()
        .into_iter()
        .map(|s| TrotterStep::new(TensorProduct::new().with(s, "X"), -spec.g))
        .collect();
    Ok(TrotterSplitting::strang(&[zz, x]))
}

/// Product state with every site flipped relative to its parent, the root in
/// `|0>`.
pub fn neel_like_initial_state(l: usize) -> Result<Ttns> {
    let (tree, dims) = build_q_tree(l)?;
    let root = q_tree_root();
    let levels: IndexMap<NodeId, usize> = tree
        .nodes()
        .map(|n| Ok((n.clone(), tree.distance(n, &root)? % 2)))
        .collect::<Result<_>>()?;
    Ttns::basis_state(&tree, &dims, &levels)
}

/// The tensor product of `Z` over every site.
pub fn total_magnetisation(l: usize) -> TensorProduct {
    let spec = TfiSpec::new(l, 0.0, 0.0);
    spec.sites().into_iter().fold(TensorProduct::new(), |tp, s| tp.with(s, "Z"))
}

/// Closed form quoted for the initial magnetisation,
/// `(-1)^(3 (floor(L/2) + 1))`.
pub fn initial_magnetisation_formula(l: usize) -> f64 {
    if (3 * (l / 2 + 1)).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Initial magnetisation counted directly: one factor of `-1` per site at
/// odd distance from the root, of which there are `3 ceil(L/2)`.
pub fn initial_magnetisation_by_counting(l: usize) -> f64 {
    if (ARMS * l.div_ceil(2)).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
