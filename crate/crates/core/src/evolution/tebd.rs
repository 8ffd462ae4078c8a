//! Gate application on tree states.

use nalgebra::DMatrix;

use super::trotter::GateStep;
use crate::error::{Result, TtnError};
use crate::operators::LocalGate;
use crate::tensor::split::{scale_first_leg, scale_last_leg};
use crate::tensor::{truncated_svd, DenseTensor, SvdParameters, C64};
use crate::tree::NodeId;
use crate::ttn::{move_leg, SplitInfo};
use crate::ttns::Ttns;

const UNITARY_TOL: f64 = 1e-12;

/// Which of the two updated nodes keeps the singular values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Absorb {
    First,
    Second,
}

/// The joint tensor of two neighbouring nodes: `a`'s legs without the
/// shared bond (physical leg last of this part, at `pa`), then `b`'s legs
/// without the shared bond (physical leg last, at `pb`).
pub(crate) struct Pair {
    pub theta: DenseTensor,
    pub pa: usize,
    pub pb: usize,
}

pub(crate) fn contract_pair(psi: &Ttns, a: &NodeId, b: &NodeId) -> Result<Pair> {
    if a == b || !psi.topology().are_adjacent(a, b) {
        return Err(TtnError::NotAdjacent(a.clone(), b.clone()));
    }
    let la = psi.neighbour_index(a, b)?;
    let lb = psi.neighbour_index(b, a)?;
    let ta = psi.tensor(a)?;
    let tb = psi.tensor(b)?;
    let (da, db) = (ta.degree(), tb.degree());
    Ok(Pair {
        theta: DenseTensor::contract(ta, tb, &[la], &[lb])?,
        pa: da - 2,
        pb: da + db - 3,
    })
}

/// Splits a joint tensor laid out as in [`contract_pair`] back into `a`
/// and `b` by a truncated SVD. The node receiving the singular values
/// becomes the orthogonality centre.
pub(crate) fn split_pair(
    psi: &mut Ttns,
    a: &NodeId,
    b: &NodeId,
    pair: &Pair,
    params: &SvdParameters,
    absorb: Absorb,
) -> Result<SplitInfo> {
    let la = psi.neighbour_index(a, b)?;
    let lb = psi.neighbour_index(b, a)?;
    let na = pair.pa + 1;
    let u_legs: Vec<usize> = (0..na).collect();
    let v_legs: Vec<usize> = (na..=pair.pb).collect();
    let svd = truncated_svd(&pair.theta, &u_legs, &v_legs, params)?;
    let info = SplitInfo {
        bond_dim: svd.s.len(),
        discarded: svd.discarded.clone(),
        all_truncated: svd.all_truncated,
    };
    let (u, v) = match absorb {
        Absorb::First => (scale_last_leg(svd.u, &svd.s), svd.v),
        Absorb::Second => (svd.u, scale_first_leg(svd.v, &svd.s)),
    };
    let u = move_leg(&u, na, la)?;
    let v = move_leg(&v, 0, lb)?;
    let net = psi.network_mut();
    net.set_tensor(a, u);
    net.set_tensor(b, v);
    net.set_orthogonality_center(Some(match absorb {
        Absorb::First => a.clone(),
        Absorb::Second => b.clone(),
    }));
    Ok(info)
}

/// Moves the centre to `a`, contracts `a` with `b`, lets `update` act on
/// the joint tensor and splits it again.
fn two_site_update<F>(psi: &mut Ttns, a: &NodeId, b: &NodeId, params: &SvdParameters, absorb: Absorb, update: F) -> Result<SplitInfo>
where
    F: FnOnce(DenseTensor, usize, usize) -> Result<DenseTensor>,
{
    if a == b || !psi.topology().are_adjacent(a, b) {
        return Err(TtnError::NotAdjacent(a.clone(), b.clone()));
    }
    psi.ensure_center(a)?;
    let Pair { theta, pa, pb } = contract_pair(psi, a, b)?;
    let pair = Pair {
        theta: update(theta, pa, pb)?,
        pa,
        pb,
    };
    split_pair(psi, a, b, &pair, params, absorb)
}

/// Exchanges the physical sites of the neighbouring nodes `a` and `b`.
pub fn apply_swap(psi: &mut Ttns, a: &NodeId, b: &NodeId, params: &SvdParameters) -> Result<SplitInfo> {
    swap_with(psi, a, b, params, Absorb::Second)
}

fn swap_with(psi: &mut Ttns, a: &NodeId, b: &NodeId, params: &SvdParameters, absorb: Absorb) -> Result<SplitInfo> {
    let da = *psi.open_dims(a)?.first().ok_or_else(|| TtnError::UnknownNode(a.clone()))?;
    let db = *psi.open_dims(b)?.first().ok_or_else(|| TtnError::UnknownNode(b.clone()))?;
    if da != db {
        return Err(TtnError::Incompatible(format!(
            "cannot swap sites of dimensions {da} (`{a}`) and {db} (`{b}`)"
        )));
    }
    two_site_update(psi, a, b, params, absorb, |theta, pa, pb| {
        let mut perm: Vec<usize> = (0..theta.degree()).collect();
        perm.swap(pa, pb);
        theta.transpose(&perm)
    })
}

/// Applies a gate acting on no site (a phase), one site, or two
/// neighbouring sites. Two-site gates are split back with `params` and the
/// singular values go to the second site of the gate.
pub fn apply_gate(psi: &mut Ttns, gate: &LocalGate, params: &SvdParameters) -> Result<Option<SplitInfo>> {
    apply_gate_with(psi, gate, params, Absorb::Second)
}

fn apply_gate_with(psi: &mut Ttns, gate: &LocalGate, params: &SvdParameters, absorb: Absorb) -> Result<Option<SplitInfo>> {
    match gate.sites.as_slice() {
        [] => {
            psi.scale(gate.tensor.scalar_value())?;
            Ok(None)
        }
        [s] => {
            apply_single_site(psi, s, gate)?;
            Ok(None)
        }
        [a, b] => {
            check_gate_dims(psi, gate)?;
            let info = two_site_update(psi, a, b, params, absorb, |theta, pa, pb| {
                // gate legs: (out_a, out_b, in_a, in_b)
                let t = DenseTensor::contract(&gate.tensor, &theta, &[2, 3], &[pa, pb])?;
                // t: (out_a, out_b, remaining legs of theta in order)
                let mut rest = 2..;
                let perm: Vec<usize> = (0..t.degree())
                    .map(|f| match f {
                        f if f == pa => 0,
                        f if f == pb => 1,
                        _ => rest.next().expect("unbounded"),
                    })
                    .collect();
                t.transpose(&perm)
            })?;
            Ok(Some(info))
        }
        sites => Err(TtnError::Unsupported(format!(
            "gate on {} sites; TEBD applies gates on at most two neighbouring sites, \
             bring the sites together with swaps or use TDVP",
            sites.len()
        ))),
    }
}

fn check_gate_dims(psi: &Ttns, gate: &LocalGate) -> Result<()> {
    for (k, s) in gate.sites.iter().enumerate() {
        let d = psi.open_dims(s)?[0];
        if gate.tensor.dim(k) != d {
            return Err(TtnError::Operator(format!(
                "gate leg for `{s}` has dimension {} but the site has {d}",
                gate.tensor.dim(k)
            )));
        }
    }
    Ok(())
}

fn is_unitary(m: &DMatrix<C64>) -> bool {
    let g = m.adjoint() * m;
    (g - DMatrix::identity(m.nrows(), m.ncols())).camax() < UNITARY_TOL
}

fn apply_single_site(psi: &mut Ttns, s: &NodeId, gate: &LocalGate) -> Result<()> {
    check_gate_dims(psi, gate)?;
    // a unitary keeps a non-centre isometry an isometry; anything else is
    // applied at the centre so the canonical form stays valid
    if psi.orthogonality_center().is_some_and(|c| c != s) && !is_unitary(&gate.matrix()?) {
        psi.move_orthogonalization_center(s)?;
    }
    let t = psi.tensor(s)?;
    let p = t.degree() - 1;
    let out = DenseTensor::contract(t, &gate.tensor, &[p], &[1])?;
    psi.network_mut().set_tensor(s, out);
    Ok(())
}

/// A two-site operation of a program in application order.
enum Action<'a> {
    Swap(&'a NodeId, &'a NodeId),
    Gate(&'a LocalGate),
}

impl Action<'_> {
    fn sites(&self) -> Vec<&NodeId> {
        match self {
            Action::Swap(a, b) => vec![a, b],
            Action::Gate(g) => g.sites.iter().collect(),
        }
    }
}

/// Applies one time step of a gate program: for every entry the swaps
/// before, the gate, then the swaps after. After a two-site operation the
/// singular values go to whichever of its nodes is closer to the next
/// two-site operation (the second node on a tie).
pub fn tebd_step(psi: &mut Ttns, program: &[GateStep], params: &SvdParameters) -> Result<()> {
    let mut actions = Vec::new();
    for g in program {
        actions.extend(g.swaps_before.iter().map(|(a, b)| Action::Swap(a, b)));
        actions.push(Action::Gate(&g.gate));
        actions.extend(g.swaps_after.iter().map(|(a, b)| Action::Swap(a, b)));
    }
    for (i, act) in actions.iter().enumerate() {
        let sites = act.sites();
        let absorb = if sites.len() == 2 {
            let next = actions[i + 1..].iter().map(|a| a.sites()).find(|s| s.len() == 2);
            choose_absorb(psi, sites[0], sites[1], next.as_deref())?
        } else {
            Absorb::Second
        };
        match act {
            Action::Swap(a, b) => {
                swap_with(psi, a, b, params, absorb)?;
            }
            Action::Gate(g) => {
                apply_gate_with(psi, g, params, absorb)?;
            }
        }
    }
    Ok(())
}

fn choose_absorb(psi: &Ttns, a: &NodeId, b: &NodeId, next: Option<&[&NodeId]>) -> Result<Absorb> {
    let Some(next) = next else {
        return Ok(Absorb::Second);
    };
    let tree = psi.topology();
    let dist = |x: &NodeId| -> Result<usize> {
        let mut best = usize::MAX;
        for n in next {
            best = best.min(tree.distance(x, n)?);
        }
        Ok(best)
    };
    Ok(if dist(a)? < dist(b)? { Absorb::First } else { Absorb::Second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::trotter::{exponentiate_splitting, SwapList, TrotterSplitting, TrotterStep};
    use crate::operators::{pauli_library, SiteDims, TensorProduct, DEFAULT_DENSE_CAP};
    use crate::tensor::ONE;
    use crate::tree::tests::three_chain_tree;
    use crate::tree::TreeTopology;
    use indexmap::IndexMap;
    use nalgebra::DVector;

    fn qubits(tree: &TreeTopology) -> SiteDims {
        tree.nodes().map(|n| (n.clone(), 2)).collect()
    }

    fn id(s: &str) -> NodeId {
        NodeId::from(s)
    }

    /// Dense oracle: the state vector with the entries of sites `i` and `j`
    /// of `order` exchanged.
    fn permuted(v: &DVector<C64>, n: usize, i: usize, j: usize) -> DVector<C64> {
        let mut out = DVector::zeros(v.len());
        for k in 0..v.len() {
            let bi = (k >> (n - 1 - i)) & 1;
            let bj = (k >> (n - 1 - j)) & 1;
            let mut m = k & !(1 << (n - 1 - i)) & !(1 << (n - 1 - j));
            m |= bj << (n - 1 - i);
            m |= bi << (n - 1 - j);
            out[m] = v[k];
        }
        out
    }

    #[test]
    fn swap_matches_permutation_oracle() {
        let tree = three_chain_tree();
        let order = tree.pre_order();
        let psi0 = Ttns::random(&tree, &qubits(&tree), 3, 7).unwrap();
        let v0 = psi0.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        for (a, b) in [("0", "00"), ("00", "01"), ("20", "0")] {
            let mut psi = psi0.clone();
            apply_swap(&mut psi, &id(a), &id(b), &SvdParameters::default()).unwrap();
            let i = order.iter().position(|n| n.as_str() == a).unwrap();
            let j = order.iter().position(|n| n.as_str() == b).unwrap();
            let want = permuted(&v0, order.len(), i, j);
            let got = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
            assert!((got - want).camax() < 1e-12, "{a}-{b}");
            assert!(psi.is_canonical(1e-10).unwrap());
        }
    }

    #[test]
    fn swap_is_an_involution() {
        let tree = three_chain_tree();
        let order = tree.pre_order();
        let psi0 = Ttns::random(&tree, &qubits(&tree), 2, 3).unwrap();
        let v0 = psi0.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        let swaps = SwapList::new().with("01", "00").with("00", "0").with("0", "10");
        let mut psi = psi0.clone();
        for (a, b) in swaps.iter().chain(swaps.reversed().iter()) {
            apply_swap(&mut psi, a, b, &SvdParameters::default()).unwrap();
        }
        let v = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        assert!((v - v0).camax() < 1e-12);
    }

    #[test]
    fn swap_of_product_state_exchanges_local_vectors() {
        let tree = three_chain_tree();
        let mut levels = IndexMap::new();
        levels.insert(id("0"), 1);
        let mut psi = Ttns::basis_state(&tree, &qubits(&tree), &levels).unwrap();
        apply_swap(&mut psi, &id("0"), &id("10"), &SvdParameters::default()).unwrap();
        let z = TensorProduct::from_symbols([("10", "Z")]);
        let e = psi.expectation_value(&z, &pauli_library()).unwrap();
        assert!((e - C64::new(-1.0, 0.0)).norm() < 1e-12);
        let z = TensorProduct::from_symbols([("0", "Z")]);
        let e = psi.expectation_value(&z, &pauli_library()).unwrap();
        assert!((e - ONE).norm() < 1e-12);
    }

    #[test]
    fn non_adjacent_swap_is_rejected() {
        let tree = three_chain_tree();
        let mut psi = Ttns::random(&tree, &qubits(&tree), 2, 3).unwrap();
        assert!(matches!(
            apply_swap(&mut psi, &id("00"), &id("10"), &SvdParameters::default()),
            Err(TtnError::NotAdjacent(..))
        ));
    }

    fn program(dt: f64) -> Vec<GateStep> {
        let steps = [
            TrotterStep::new(TensorProduct::from_symbols([("0", "Z"), ("00", "Z")]), 1.0),
            TrotterStep::new(TensorProduct::from_symbols([("01", "X"), ("00", "Y")]), 0.7),
            TrotterStep::new(TensorProduct::from_symbols([("10", "X")]), -0.4),
            TrotterStep::new(TensorProduct::from_symbols([("20", "Y"), ("0", "X")]), 0.3),
        ];
        exponentiate_splitting(&TrotterSplitting::new(steps), dt, &pauli_library()).unwrap()
    }

    #[test]
    fn identity_program_leaves_state_unchanged() {
        let tree = three_chain_tree();
        let order = tree.pre_order();
        let psi0 = Ttns::random(&tree, &qubits(&tree), 2, 11).unwrap();
        let mut psi = psi0.clone();
        tebd_step(&mut psi, &program(0.0), &SvdParameters::default()).unwrap();
        let a = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        let b = psi0.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        assert!((a - b).camax() < 1e-12);
    }

    #[test]
    fn gates_match_dense_application_and_keep_norm() {
        let tree = three_chain_tree();
        let order = tree.pre_order();
        let dims = qubits(&tree);
        let mut psi = Ttns::random(&tree, &dims, 2, 5).unwrap();
        let mut v = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        let prog = program(0.1);
        for _ in 0..100 {
            tebd_step(&mut psi, &prog, &SvdParameters::default()).unwrap();
        }
        for _ in 0..100 {
            for g in &prog {
                v = dense_gate(&v, &g.gate, &order);
            }
        }
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        assert!(psi.is_canonical(1e-10).unwrap());
        let got = psi.to_dense(&order, DEFAULT_DENSE_CAP).unwrap();
        assert!((got - v).camax() < 1e-10);
    }

    /// Dense oracle for a gate embedded by explicit index arithmetic.
    fn dense_gate(v: &DVector<C64>, g: &LocalGate, order: &[NodeId]) -> DVector<C64> {
        let n = order.len();
        let pos: Vec<usize> = g.sites.iter().map(|s| order.iter().position(|o| o == s).unwrap()).collect();
        let k = pos.len();
        let m = g.matrix().unwrap();
        let mut out = DVector::zeros(v.len());
        for idx in 0..v.len() {
            let local_in: usize = pos.iter().fold(0, |acc, &p| (acc << 1) | ((idx >> (n - 1 - p)) & 1));
            for local_out in 0..(1 << k) {
                let mut j = idx;
                for (q, &p) in pos.iter().enumerate() {
                    let bit = (local_out >> (k - 1 - q)) & 1;
                    j = (j & !(1 << (n - 1 - p))) | (bit << (n - 1 - p));
                }
                out[j] += m[(local_out, local_in)] * v[idx];
            }
        }
        out
    }

    #[test]
    fn wide_gate_is_rejected() {
        let tree = three_chain_tree();
        let mut psi = Ttns::random(&tree, &qubits(&tree), 2, 5).unwrap();
        let s = TrotterSplitting::new([TrotterStep::new(
            TensorProduct::from_symbols([("0", "Z"), ("00", "Z"), ("10", "Z")]),
            1.0,
        )]);
        let prog = exponentiate_splitting(&s, 0.1, &pauli_library()).unwrap();
        assert!(matches!(
            tebd_step(&mut psi, &prog, &SvdParameters::default()),
            Err(TtnError::Unsupported(_))
        ));
    }
}
