//! Splitting a time step into exponentials of few-site operators.

use crate::error::{Result, TtnError};
use crate::operators::{exp_local, Hamiltonian, LocalGate, SymbolTable, TensorProduct};
use crate::tensor::{DenseTensor, C64};
use crate::tree::NodeId;

/// Largest number of sites a single exponentiated step may act on.
pub const GATE_SITE_CAP: usize = 4;

/// One exponential `exp(-i dt factor operator)` of a splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct TrotterStep {
    pub operator: TensorProduct,
    pub factor: C64,
}

impl TrotterStep {
    pub fn new(operator: TensorProduct, factor: impl Into<C64>) -> Self {
        Self {
            operator,
            factor: factor.into(),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            operator: self.operator.clone(),
            factor: self.factor * s,
        }
    }
}

/// Ordered pairs of neighbouring nodes whose physical sites are exchanged.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SwapList(pub Vec<(NodeId, NodeId)>);

impl SwapList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, a: impl Into<NodeId>, b: impl Into<NodeId>) -> Self {
        self.0.push((a.into(), b.into()));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.0.iter()
    }

    /// The same swaps in reverse order, which undoes this list.
    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().cloned().collect())
    }
}

/// A step together with the swaps applied around it. The operator's sites
/// refer to node positions after `swaps_before` has been applied.
#[derive(Clone, Debug, PartialEq)]
pub struct SplittingEntry {
    pub step: TrotterStep,
    pub swaps_before: SwapList,
    pub swaps_after: SwapList,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrotterSplitting {
    entries: Vec<SplittingEntry>,
}

impl TrotterSplitting {
    pub fn new(steps: impl IntoIterator<Item = TrotterStep>) -> Self {
        let mut s = Self::default();
        for step in steps {
            s.push(step);
        }
        s
    }

    pub fn push(&mut self, step: TrotterStep) {
        self.push_with_swaps(step, SwapList::new(), SwapList::new());
    }

    pub fn push_with_swaps(&mut self, step: TrotterStep, swaps_before: SwapList, swaps_after: SwapList) {
        self.entries.push(SplittingEntry {
            step,
            swaps_before,
            swaps_after,
        });
    }

    pub fn entries(&self) -> &[SplittingEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One step per Hamiltonian term, in term order, each with the term's
    /// coefficient as factor.
    pub fn first_order(h: &Hamiltonian) -> Self {
        Self::new(h.terms.iter().map(|(c, tp)| TrotterStep::new(tp.clone(), *c)))
    }

    /// Symmetric splitting of a sum of groups `G_1 + ... + G_k`: the groups
    /// `G_1..G_{k-1}` at half factor, `G_k` at full factor, then
    /// `G_{k-1}..G_1` at half factor with the steps inside each group
    /// reversed.
    pub fn strang(groups: &[Vec<TrotterStep>]) -> Self {
        let mut s = Self::default();
        let Some((last, head)) = groups.split_last() else {
            return s;
        };
        for g in head {
            for step in g {
                s.push(step.scaled(0.5));
            }
        }
        for step in last {
            s.push(step.clone());
        }
        for g in head.iter().rev() {
            for step in g.iter().rev() {
                s.push(step.scaled(0.5));
            }
        }
        s
    }
}

/// One entry of an exponentiated splitting. A gate without sites is a
/// global phase held as a scalar tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GateStep {
    pub swaps_before: SwapList,
    pub gate: LocalGate,
    pub swaps_after: SwapList,
}

/// Exponentiates every step of a splitting for the time step `dt`: the gate
/// of a step is `exp(-i dt factor operator)`. Identity factors are dropped
/// from the gate; a step made only of identities becomes a global phase.
pub fn exponentiate_splitting(s: &TrotterSplitting, dt: f64, symbols: &SymbolTable) -> Result<Vec<GateStep>> {
    if !dt.is_finite() {
        return Err(TtnError::NonFinite(format!("time step {dt}")));
    }
    let mut out = Vec::with_capacity(s.len());
    for e in s.entries() {
        let f = e.step.factor;
        if !(f.re.is_finite() && f.im.is_finite()) {
            return Err(TtnError::NonFinite(format!("step factor {f}")));
        }
        let a = C64::new(0.0, -dt) * f;
        let support = e.step.operator.support(symbols)?;
        if support.len() > GATE_SITE_CAP {
            return Err(TtnError::Unsupported(format!(
                "a Trotter step acts on {} sites but gates are limited to {GATE_SITE_CAP}; \
                 use TDVP for operators with wide support",
                support.len()
            )));
        }
        let gate = if support.is_empty() {
            LocalGate {
                sites: Vec::new(),
                tensor: DenseTensor::scalar(a.exp()),
            }
        } else {
            let mut reduced = TensorProduct::new();
            for n in &support {
                reduced.insert(n.clone(), e.step.operator.get(n).expect("in support").clone());
            }
            exp_local(&reduced, a, symbols)?
        };
        out.push(GateStep {
            swaps_before: e.swaps_before.clone(),
            gate,
            swaps_after: e.swaps_after.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm;
    use crate::operators::pauli_library;
    use nalgebra::DMatrix;

    fn step(pairs: &[(&str, &str)], f: f64) -> TrotterStep {
        TrotterStep::new(TensorProduct::from_symbols(pairs.iter().copied()), f)
    }

    #[test]
    fn first_order_gates_are_plain_exponentials() {
        let s = TrotterSplitting::new([step(&[("a", "X"), ("b", "X")], 1.0), step(&[("a", "Z")], 0.5)]);
        let dt = 0.01;
        let gates = exponentiate_splitting(&s, dt, &pauli_library()).unwrap();
        assert_eq!(gates.len(), 2);
        let x = pauli_library().get("X").unwrap().as_matrix().unwrap();
        let xx = x.kronecker(&x);
        let want = expm(&(xx * C64::new(0.0, -dt))).unwrap();
        assert!((gates[0].gate.matrix().unwrap() - want).camax() < 1e-14);
        assert_eq!(gates[1].gate.sites, vec![NodeId::from("a")]);
    }

    #[test]
    fn strang_halves_outer_groups() {
        let a = step(&[("a", "X"), ("b", "X")], 1.0);
        let b = step(&[("a", "Z")], 1.0);
        let s = TrotterSplitting::strang(&[vec![a.clone()], vec![b.clone()]]);
        let f: Vec<f64> = s.entries().iter().map(|e| e.step.factor.re).collect();
        assert_eq!(f, vec![0.5, 1.0, 0.5]);
        assert_eq!(s.entries()[0].step.operator, a.operator);
        assert_eq!(s.entries()[2].step.operator, a.operator);
    }

    #[test]
    fn zero_step_gives_identities() {
        let s = TrotterSplitting::new([step(&[("a", "X"), ("b", "Y")], 2.0), step(&[("a", "Z")], 1.0)]);
        for g in exponentiate_splitting(&s, 0.0, &pauli_library()).unwrap() {
            let m = g.gate.matrix().unwrap();
            assert!((m.clone() - DMatrix::identity(m.nrows(), m.ncols())).camax() < 1e-15);
        }
    }

    #[test]
    fn identity_only_step_is_a_phase() {
        let s = TrotterSplitting::new([step(&[("a", "I2")], 1.0)]);
        let g = exponentiate_splitting(&s, 0.3, &pauli_library()).unwrap();
        assert!(g[0].gate.sites.is_empty());
        assert!((g[0].gate.tensor.scalar_value() - C64::new(0.0, -0.3).exp()).norm() < 1e-15);
    }

    #[test]
    fn wide_steps_are_rejected() {
        let s = TrotterSplitting::new([step(&[("a", "Z"), ("b", "Z"), ("c", "Z"), ("d", "Z"), ("e", "Z")], 1.0)]);
        assert!(matches!(
            exponentiate_splitting(&s, 0.1, &pauli_library()),
            Err(TtnError::Unsupported(_))
        ));
    }
}
