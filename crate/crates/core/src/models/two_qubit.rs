//! Two qubits under `H = A1 (x) A2 + B1 (x) B2`, the smallest system on
//! which Trotter splittings differ from the exact propagator.

use indexmap::IndexMap;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::exact::exact_evolution;
use crate::error::{Result, TtnError};
use crate::evolution::{exponentiate_splitting, tebd_step, TrotterSplitting, TrotterStep};
use crate::operators::{pauli_library, Hamiltonian, SiteDims, SymbolTable, TensorProduct, DEFAULT_DENSE_CAP};
use crate::tensor::{DenseTensor, SvdParameters, C64, ONE, ZERO};
use crate::tree::{NodeId, TreeTopology};
use crate::ttn::TreeTensorNetwork;
use crate::ttns::Ttns;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplittingOrder {
    /// `e^{-iA dt} e^{-iB dt}`.
    First,
    /// `e^{-iA dt/2} e^{-iB dt} e^{-iA dt/2}`.
    Strang,
}

impl SplittingOrder {
    pub fn name(self) -> &'static str {
        match self {
            SplittingOrder::First => "first",
            SplittingOrder::Strang => "strang",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitModel {
    pub a: [DenseTensor; 2],
    pub b: [DenseTensor; 2],
}

const SITES: [&str; 2] = ["0", "1"];

impl TwoQubitModel {
    /// Each factor is `(G + G^dagger) / 2` for a complex Gaussian `G`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut herm = || {
            let g: Vec<C64> = (0..4)
                .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            DenseTensor::from_fn(&[2, 2], |ix| (g[ix[0] * 2 + ix[1]] + g[ix[1] * 2 + ix[0]].conj()) * 0.5)
        };
        Self {
            a: [herm(), herm()],
            b: [herm(), herm()],
        }
    }

    pub fn tree() -> TreeTopology {
        let mut t = TreeTopology::with_root(SITES[0]);
        t.add_child(SITES[0], SITES[1]).expect("fresh tree");
        t
    }

    pub fn site_order() -> Vec<NodeId> {
        SITES.iter().map(|s| NodeId::new(*s)).collect()
    }

    pub fn dims() -> SiteDims {
        Self::site_order().into_iter().map(|n| (n, 2)).collect()
    }

    pub fn symbols(&self) -> SymbolTable {
        let mut s = pauli_library();
        for (name, m) in [("A1", &self.a[0]), ("A2", &self.a[1]), ("B1", &self.b[0]), ("B2", &self.b[1])] {
            s.insert(name, m.clone()).expect("new symbol");
        }
        s
    }

    fn term(first: &str, second: &str) -> TensorProduct {
        TensorProduct::from_symbols([(SITES[0], first), (SITES[1], second)])
    }

    pub fn hamiltonian(&self) -> Hamiltonian {
        Hamiltonian::new(self.symbols())
            .with_term(ONE, Self::term("A1", "A2"))
            .with_term(ONE, Self::term("B1", "B2"))
    }

    pub fn splitting(&self, order: SplittingOrder) -> TrotterSplitting {
        let a = TrotterStep::new(Self::term("A1", "A2"), 1.0);
        let b = TrotterStep::new(Self::term("B1", "B2"), 1.0);
        match order {
            SplittingOrder::First => TrotterSplitting::new([a, b]),
            SplittingOrder::Strang => TrotterSplitting::strang(&[vec![a], vec![b]]),
        }
    }

    /// The computational basis followed by the four Bell states.
    pub fn reference_states() -> Vec<(String, DVector<C64>)> {
        let r = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        let mut out: Vec<(String, DVector<C64>)> = (0..4)
            .map(|i| {
                let mut v = DVector::from_element(4, ZERO);
                v[i] = ONE;
                (format!("|{}{}>", i / 2, i % 2), v)
            })
            .collect();
        for (name, amp) in [
            ("phi+", [r, ZERO, ZERO, r]),
            ("phi-", [r, ZERO, ZERO, -r]),
            ("psi+", [ZERO, r, r, ZERO]),
            ("psi-", [ZERO, r, -r, ZERO]),
        ] {
            out.push((name.to_string(), DVector::from_row_slice(&amp)));
        }
        out
    }

    /// An exact two-node network for a dense two-qubit vector: the root
    /// carries the amplitudes, the child is the identity on its bond.
    pub fn state_to_ttns(v: &DVector<C64>) -> Result<Ttns> {
        if v.len() != 4 {
            return Err(TtnError::Incompatible(format!("expected 4 amplitudes, got {}", v.len())));
        }
        let root = DenseTensor::from_fn(&[2, 2], |ix| v[2 * ix[1] + ix[0]]);
        let mut tensors = IndexMap::new();
        tensors.insert(NodeId::new(SITES[0]), root);
        tensors.insert(NodeId::new(SITES[1]), DenseTensor::identity(2));
        Ttns::from_network(TreeTensorNetwork::from_parts(Self::tree(), tensors)?)
    }

    /// `|| U(T) psi0 - (split step)^n psi0 ||` with the split dynamics run as
    /// an untruncated TEBD on the two-node network.
    pub fn final_error(&self, psi0: &DVector<C64>, dt: f64, final_time: f64, order: SplittingOrder) -> Result<f64> {
        let order_ids = Self::site_order();
        let dims = Self::dims();
        let reference = exact_evolution(&self.hamiltonian(), &order_ids, &dims, psi0, dt, final_time)?;
        let steps = reference.len() - 1;
        let program = exponentiate_splitting(&self.splitting(order), dt, &self.symbols())?;
        let mut psi = Self::state_to_ttns(psi0)?;
        psi.canonical_form(&order_ids[0])?;
        let params = SvdParameters::default();
        for _ in 0..steps {
            tebd_step(&mut psi, &program, &params)?;
        }
        let split = psi.to_dense(&order_ids, DEFAULT_DENSE_CAP)?;
        Ok((&reference[steps] - split).norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_are_hermitian() {
        let m = TwoQubitModel::random(3);
        for f in m.a.iter().chain(&m.b) {
            let mat = f.as_matrix().unwrap();
            assert!((&mat - mat.adjoint()).camax() < 1e-15);
        }
    }

    #[test]
    fn network_reproduces_vectors() {
        for (name, v) in TwoQubitModel::reference_states() {
            let psi = TwoQubitModel::state_to_ttns(&v).unwrap();
            let back = psi.to_dense(&TwoQubitModel::site_order(), DEFAULT_DENSE_CAP).unwrap();
            assert!((back - &v).norm() < 1e-15, "{name}");
        }
    }

    #[test]
    fn commuting_terms_split_exactly() {
        let mut m = TwoQubitModel::random(1);
        m.b = [m.a[0].scale(C64::from(0.5)), m.a[1].clone()];
        for (_, v) in TwoQubitModel::reference_states() {
            for o in [SplittingOrder::First, SplittingOrder::Strang] {
                assert!(m.final_error(&v, 0.1, 1.0, o).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn strang_beats_first_order() {
        let m = TwoQubitModel::random(7);
        let v = &TwoQubitModel::reference_states()[4].1;
        let e1 = m.final_error(v, 0.05, 1.0, SplittingOrder::First).unwrap();
        let e2 = m.final_error(v, 0.05, 1.0, SplittingOrder::Strang).unwrap();
        assert!(e2 < e1);
    }
}
