//! Environment blocks of a bra-operator-ket sandwich and the effective
//! Hamiltonians assembled from them.
//!
//! The block `(x, y)` is the contraction of everything on `x`'s side of the
//! edge `(x, y)`. Its legs are (ket, operator, bra) on that edge.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TtnError};
use crate::linalg::{expm, expm_krylov, hermitian_eigh, KrylovOptions};
use crate::tensor::{DenseTensor, C64, ZERO};
use crate::tree::NodeId;
use crate::ttno::Ttno;
use crate::ttns::{check_same_tree, SandwichNode, Ttns};

/// Local problems up to this dimension are exponentiated densely; larger
/// ones go through the Krylov approximation.
pub const DENSE_LOCAL_DIM: usize = 256;

#[derive(Clone, Debug, Default)]
pub struct EffectiveHamiltonianCache {
    blocks: HashMap<(NodeId, NodeId), DenseTensor>,
}

impl EffectiveHamiltonianCache {
    /// An empty cache; blocks are computed on first use.
    pub fn new() -> Self {
        Self::default()
    }

    /// A cache holding the blocks of every edge in both directions.
    pub fn build(psi: &Ttns, h: &Ttno) -> Result<Self> {
        check_operator(psi, h)?;
        let mut cache = Self::new();
        for (p, c) in psi.topology().edges() {
            cache.ensure(psi, h, &c, &p)?;
            cache.ensure(psi, h, &p, &c)?;
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, from: &NodeId, to: &NodeId) -> Option<&DenseTensor> {
        self.blocks.get(&(from.clone(), to.clone()))
    }

    /// Computes the block `(from, to)` and everything it depends on unless
    /// already cached.
    pub fn ensure(&mut self, psi: &Ttns, h: &Ttno, from: &NodeId, to: &NodeId) -> Result<()> {
        let key = (from.clone(), to.clone());
        if self.blocks.contains_key(&key) {
            return Ok(());
        }
        if !psi.topology().are_adjacent(from, to) {
            return Err(TtnError::NotAdjacent(from.clone(), to.clone()));
        }
        // iterative post-order over the subtree behind `from`
        let mut stack = vec![(from.clone(), to.clone(), false)];
        while let Some((x, y, expanded)) = stack.pop() {
            if self.blocks.contains_key(&(x.clone(), y.clone())) {
                continue;
            }
            let inner: Vec<NodeId> = psi.topology().neighbours(&x)?.into_iter().filter(|m| *m != y).collect();
            if !expanded {
                stack.push((x.clone(), y.clone(), true));
                for m in inner {
                    if !self.blocks.contains_key(&(m.clone(), x.clone())) {
                        stack.push((m, x.clone(), false));
                    }
                }
                continue;
            }
            let b = self.contract_block(psi, h, &x, &y)?;
            self.blocks.insert((x, y), b);
        }
        Ok(())
    }

    pub fn block(&mut self, psi: &Ttns, h: &Ttno, from: &NodeId, to: &NodeId) -> Result<&DenseTensor> {
        self.ensure(psi, h, from, to)?;
        Ok(&self.blocks[&(from.clone(), to.clone())])
    }

    fn contract_block(&self, psi: &Ttns, h: &Ttno, x: &NodeId, y: &NodeId) -> Result<DenseTensor> {
        let (neighbours, node) = SandwichNode::gather(psi.network(), h.network(), psi.network(), x)?;
        let target = neighbours.iter().position(|m| m == y);
        let incoming = neighbours
            .iter()
            .filter(|m| *m != y)
            .map(|m| {
                self.get(m, x)
                    .ok_or_else(|| TtnError::Incompatible(format!("missing environment block ({m}, {x})")))
            })
            .collect::<Result<Vec<_>>>()?;
        node.contract(target, &incoming)
    }

    /// Drops every block whose subtree contains `updated`.
    pub fn invalidate(&mut self, psi: &Ttns, updated: &NodeId) {
        let tree = psi.topology();
        self.blocks.retain(|(x, y), _| {
            if y == updated {
                return true;
            }
            tree.next_toward(y, updated).ok().flatten().as_ref() != Some(x)
        });
    }

    /// Largest deviation of the blocks pointing at `node` from a contraction
    /// done from scratch. Missing blocks are skipped.
    pub fn deviation_at(&self, psi: &Ttns, h: &Ttno, node: &NodeId) -> Result<f64> {
        let mut worst = 0.0f64;
        for m in psi.topology().neighbours(node)? {
            if let Some(b) = self.get(&m, node) {
                worst = worst.max(b.max_abs_diff(&from_scratch_block(psi, h, &m, node)?));
            }
        }
        Ok(worst)
    }

    fn site_operator<'a>(&'a mut self, psi: &'a Ttns, h: &'a Ttno, s: &NodeId) -> Result<SiteOperator<'a>> {
        let neighbours = psi.topology().neighbours(s)?;
        for m in &neighbours {
            self.ensure(psi, h, m, s)?;
        }
        let (order, node) = SandwichNode::gather(psi.network(), h.network(), psi.network(), s)?;
        let blocks = order.iter().map(|m| &self.blocks[&(m.clone(), s.clone())]).collect();
        Ok(SiteOperator {
            node,
            blocks,
            shape: psi.tensor(s)?.shape().to_vec(),
        })
    }

    /// Effective Hamiltonian of site `s`, acting on the row-major
    /// vectorisation of `s`'s tensor.
    pub fn site_hamiltonian(&mut self, psi: &Ttns, h: &Ttno, s: &NodeId) -> Result<DMatrix<C64>> {
        self.site_operator(psi, h, s)?.matrix()
    }

    /// `exp(factor H_s) N_s` for the current tensor `N_s` of site `s`.
    pub fn evolve_site(&mut self, psi: &Ttns, h: &Ttno, s: &NodeId, factor: C64) -> Result<DenseTensor> {
        let t = psi.tensor(s)?.clone();
        self.site_operator(psi, h, s)?.exp_apply(&t, factor)
    }

    fn link_operator<'a>(&'a mut self, psi: &Ttns, h: &Ttno, x: &NodeId, y: &NodeId) -> Result<LinkOperator<'a>> {
        self.ensure(psi, h, x, y)?;
        self.ensure(psi, h, y, x)?;
        Ok(LinkOperator {
            ex: &self.blocks[&(x.clone(), y.clone())],
            ey: &self.blocks[&(y.clone(), x.clone())],
        })
    }

    /// Effective Hamiltonian of a bond matrix with legs (toward `x`,
    /// toward `y`), for a state whose tensor at `x` has had that matrix
    /// split off.
    pub fn link_hamiltonian(&mut self, psi: &Ttns, h: &Ttno, x: &NodeId, y: &NodeId) -> Result<DMatrix<C64>> {
        let dims = [psi.bond_dim(x, y)?, psi.bond_dim(y, x)?];
        let op = self.link_operator(psi, h, x, y)?;
        dense_from_apply(dims[0] * dims[1], |v| {
            let r = DenseTensor::new(dims.to_vec(), v.to_vec())?;
            Ok(op.apply(&r)?.into_data())
        })
    }

    /// `exp(factor H_link) R` for a bond matrix with legs (toward `x`,
    /// toward `y`).
    pub fn evolve_link(&mut self, psi: &Ttns, h: &Ttno, x: &NodeId, y: &NodeId, r: &DenseTensor, factor: C64) -> Result<DenseTensor> {
        let op = self.link_operator(psi, h, x, y)?;
        let shape = r.shape().to_vec();
        let out = expm_apply(
            |v| {
                let t = DenseTensor::new(shape.clone(), v.to_vec())?;
                Ok(op.apply(&t)?.into_data())
            },
            r.data(),
            factor,
        )?;
        DenseTensor::new(shape, out)
    }

    fn pair_operator<'a>(&'a mut self, psi: &'a Ttns, h: &'a Ttno, a: &NodeId, b: &NodeId) -> Result<PairOperator<'a>> {
        if !psi.topology().are_adjacent(a, b) {
            return Err(TtnError::NotAdjacent(a.clone(), b.clone()));
        }
        let na: Vec<NodeId> = psi.node(a)?.neighbours().into_iter().filter(|m| m != b).collect();
        let nb: Vec<NodeId> = psi.node(b)?.neighbours().into_iter().filter(|m| m != a).collect();
        for m in &na {
            self.ensure(psi, h, m, a)?;
        }
        for m in &nb {
            self.ensure(psi, h, m, b)?;
        }
        // operator tensors of a and b joined over their shared bond:
        // (a's other bonds, out_a, in_a, b's other bonds, out_b, in_b)
        let net = h.network();
        let legs = |n: &NodeId, list: &[NodeId]| -> Result<Vec<usize>> {
            list.iter().map(|m| net.neighbour_index(n, m)).collect()
        };
        let (oa, ob) = (net.tensor(a)?, net.tensor(b)?);
        let mut pa = legs(a, &na)?;
        pa.push(net.neighbour_index(a, b)?);
        pa.extend([oa.degree() - 2, oa.degree() - 1]);
        let mut pb = vec![net.neighbour_index(b, a)?];
        pb.extend(legs(b, &nb)?);
        pb.extend([ob.degree() - 2, ob.degree() - 1]);
        let oa = oa.transpose(&pa)?;
        let ob = ob.transpose(&pb)?;
        let w = DenseTensor::contract(&oa, &ob, &[na.len()], &[0])?;
        let blocks_a = na.iter().map(|m| &self.blocks[&(m.clone(), a.clone())]).collect();
        let blocks_b = nb.iter().map(|m| &self.blocks[&(m.clone(), b.clone())]).collect();
        Ok(PairOperator {
            w,
            blocks_a,
            blocks_b,
        })
    }

    /// Effective Hamiltonian of the joint tensor of the neighbours `a` and
    /// `b`, laid out as `a`'s legs without the shared bond (physical last)
    /// followed by `b`'s legs without the shared bond (physical last).
    pub fn two_site_hamiltonian(&mut self, psi: &Ttns, h: &Ttno, a: &NodeId, b: &NodeId) -> Result<DMatrix<C64>> {
        let shape = pair_shape(psi, a, b)?;
        let op = self.pair_operator(psi, h, a, b)?;
        let n = shape.iter().product();
        dense_from_apply(n, |v| {
            let t = DenseTensor::new(shape.clone(), v.to_vec())?;
            Ok(op.apply(&t)?.into_data())
        })
    }

    /// `exp(factor H_ab) theta` for a joint tensor of `a` and `b`.
    pub fn evolve_pair(&mut self, psi: &Ttns, h: &Ttno, a: &NodeId, b: &NodeId, theta: &DenseTensor, factor: C64) -> Result<DenseTensor> {
        let shape = theta.shape().to_vec();
        let op = self.pair_operator(psi, h, a, b)?;
        let out = expm_apply(
            |v| {
                let t = DenseTensor::new(shape.clone(), v.to_vec())?;
                Ok(op.apply(&t)?.into_data())
            },
            theta.data(),
            factor,
        )?;
        DenseTensor::new(shape, out)
    }
}

fn check_operator(psi: &Ttns, h: &Ttno) -> Result<()> {
    check_same_tree(psi.network(), h.network())?;
    let dims = h.physical_dims();
    for (n, d) in psi.physical_dims() {
        if dims.get(&n) != Some(&d) {
            return Err(TtnError::Incompatible(format!(
                "operator and state disagree on the physical dimension of `{n}`"
            )));
        }
    }
    Ok(())
}

fn pair_shape(psi: &Ttns, a: &NodeId, b: &NodeId) -> Result<Vec<usize>> {
    let la = psi.neighbour_index(a, b)?;
    let lb = psi.neighbour_index(b, a)?;
    let ta = psi.tensor(a)?.shape();
    let tb = psi.tensor(b)?.shape();
    Ok(ta
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != la)
        .chain(tb.iter().enumerate().filter(|(l, _)| *l != lb))
        .map(|(_, &d)| d)
        .collect())
}

/// The block `(from, to)` contracted without any cache.
pub fn from_scratch_block(psi: &Ttns, h: &Ttno, from: &NodeId, to: &NodeId) -> Result<DenseTensor> {
    check_operator(psi, h)?;
    let mut fresh = EffectiveHamiltonianCache::new();
    fresh.ensure(psi, h, from, to)?;
    Ok(fresh.blocks.remove(&(from.clone(), to.clone())).expect("computed"))
}

struct SiteOperator<'a> {
    node: SandwichNode<'a>,
    blocks: Vec<&'a DenseTensor>,
    shape: Vec<usize>,
}

impl SiteOperator<'_> {
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let x = DenseTensor::new(self.shape.clone(), v.to_vec())?;
        Ok(self.node.apply(&x, &self.blocks)?.into_data())
    }

    fn matrix(&self) -> Result<DMatrix<C64>> {
        dense_from_apply(self.shape.iter().product(), |v| self.apply(v))
    }

    fn exp_apply(&self, t: &DenseTensor, factor: C64) -> Result<DenseTensor> {
        let out = expm_apply(|v| self.apply(v), t.data(), factor)?;
        DenseTensor::new(self.shape.clone(), out)
    }
}

struct LinkOperator<'a> {
    ex: &'a DenseTensor,
    ey: &'a DenseTensor,
}

impl LinkOperator<'_> {
    fn apply(&self, r: &DenseTensor) -> Result<DenseTensor> {
        // (ket_x, op, bra_x) x (ket_x, ket_y) -> (op, bra_x, ket_y)
        let t = DenseTensor::contract(self.ex, r, &[0], &[0])?;
        // contract op and ket_y with the y block -> (bra_x, bra_y)
        DenseTensor::contract(&t, self.ey, &[0, 2], &[1, 0])
    }
}

struct PairOperator<'a> {
    w: DenseTensor,
    blocks_a: Vec<&'a DenseTensor>,
    blocks_b: Vec<&'a DenseTensor>,
}

impl PairOperator<'_> {
    fn apply(&self, theta: &DenseTensor) -> Result<DenseTensor> {
        let (ka, kb) = (self.blocks_a.len(), self.blocks_b.len());
        let mut t = theta.clone();
        // every contraction consumes the leading ket leg and appends
        // (op, bra) at the end
        for b in &self.blocks_a {
            t = DenseTensor::contract(&t, b, &[0], &[0])?;
        }
        for b in &self.blocks_b {
            t = DenseTensor::contract(&t, b, &[1], &[0])?;
        }
        // t: (phys_a, phys_b, (op, bra) of a's blocks, (op, bra) of b's blocks)
        // w: (a bonds, out_a, in_a, b bonds, out_b, in_b)
        let mut t_legs = vec![0, 1];
        let mut w_legs = vec![ka + 1, ka + 2 + kb + 1];
        for i in 0..ka {
            t_legs.push(2 + 2 * i);
            w_legs.push(i);
        }
        for j in 0..kb {
            t_legs.push(2 + 2 * ka + 2 * j);
            w_legs.push(ka + 2 + j);
        }
        let t = DenseTensor::contract(&t, &self.w, &t_legs, &w_legs)?;
        // t: (bra of a's blocks, bra of b's blocks, out_a, out_b)
        let mut perm: Vec<usize> = (0..ka).collect();
        perm.push(ka + kb);
        perm.extend(ka..ka + kb);
        perm.push(ka + kb + 1);
        t.transpose(&perm)
    }
}

fn dense_from_apply<F>(n: usize, mut apply: F) -> Result<DMatrix<C64>>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    let mut m = DMatrix::from_element(n, n, ZERO);
    let mut e = vec![ZERO; n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = apply(&e)?;
        e[j] = ZERO;
        for (i, z) in col.into_iter().enumerate() {
            m[(i, j)] = z;
        }
    }
    Ok(m)
}

/// `exp(factor H) v` with `H` given by its action: dense exponentiation up
/// to [`DENSE_LOCAL_DIM`], Krylov above.
fn expm_apply<F>(mut apply: F, v: &[C64], factor: C64) -> Result<Vec<C64>>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    check_finite(v, factor)?;
    if factor == ZERO {
        return Ok(v.to_vec());
    }
    let out = if v.len() <= DENSE_LOCAL_DIM {
        let m = dense_from_apply(v.len(), &mut apply)?;
        dense_expm_apply(&m, v, factor)?
    } else {
        expm_krylov(apply, v, factor, KrylovOptions::default())?
    };
    check_finite(&out, factor)?;
    Ok(out)
}

/// Hermitian matrices are exponentiated through their eigendecomposition,
/// which is much cheaper than Padé at the sizes met here; anything else
/// falls back to the general dense exponential.
fn dense_expm_apply(m: &DMatrix<C64>, v: &[C64], factor: C64) -> Result<Vec<C64>> {
    let scale = m.camax();
    let v = DVector::from_column_slice(v);
    if scale > 0.0 && (m - m.adjoint()).camax() <= 1e-12 * scale {
        let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let (vals, vecs) = hermitian_eigh(&herm)?;
        let mut c = vecs.ad_mul(&v);
        for (ck, lam) in c.iter_mut().zip(vals) {
            *ck *= (factor * lam).exp();
        }
        return Ok((vecs * c).as_slice().to_vec());
    }
    Ok((expm(&(m * factor))? * v).as_slice().to_vec())
}

fn check_finite(v: &[C64], factor: C64) -> Result<()> {
    if !(factor.re.is_finite() && factor.im.is_finite()) {
        return Err(TtnError::NonFinite(format!("exponential factor {factor}")));
    }
    if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(TtnError::NonFinite("local tensor".into()));
    }
    Ok(())
}

/// `exp(factor heff) v`, densely up to [`DENSE_LOCAL_DIM`] and by Krylov
/// iteration above.
pub fn local_expm_apply(heff: &DMatrix<C64>, v: &[C64], factor: C64) -> Result<Vec<C64>> {
    if !heff.is_square() || heff.nrows() != v.len() {
        return Err(TtnError::Incompatible(format!(
            "effective Hamiltonian of shape {:?} cannot act on a vector of length {}",
            heff.shape(),
            v.len()
        )));
    }
    if heff.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(TtnError::NonFinite("effective Hamiltonian".into()));
    }
    expm_apply(
        |x| Ok((heff * DVector::from_column_slice(x)).as_slice().to_vec()),
        v,
        factor,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigh;
    use crate::operators::{random_pauli_hamiltonian, SiteDims, DEFAULT_DENSE_CAP};
    use crate::tree::tests::three_chain_tree;
    use crate::tree::TreeTopology;
    use crate::ttns::identity_operator_network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qubits(tree: &TreeTopology) -> SiteDims {
        tree.nodes().map(|n| (n.clone(), 2)).collect()
    }

    fn id(s: &str) -> NodeId {
        NodeId::from(s)
    }

    fn random_setup(seed: u64) -> (Ttns, Ttno) {
        let tree = three_chain_tree();
        let dims = qubits(&tree);
        let sites: Vec<NodeId> = tree.nodes().cloned().collect();
        let h = random_pauli_hamiltonian(&sites, 12, seed);
        let ttno = Ttno::from_hamiltonian(&h, &tree, &dims).unwrap();
        (Ttns::random(&tree, &dims, 3, seed).unwrap(), ttno)
    }

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DenseTensor::random_with(&[n, n], &mut rng).as_matrix().unwrap();
        (a.clone() + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn built_blocks_match_fresh_contractions() {
        let (psi, h) = random_setup(1);
        let cache = EffectiveHamiltonianCache::build(&psi, &h).unwrap();
        assert_eq!(cache.len(), 2 * (psi.len() - 1));
        for (p, c) in psi.topology().edges() {
            for (x, y) in [(&p, &c), (&c, &p)] {
                let fresh = from_scratch_block(&psi, &h, x, y).unwrap();
                assert!(cache.get(x, y).unwrap().max_abs_diff(&fresh) < 1e-12);
            }
        }
    }

    #[test]
    fn block_of_three_node_chain_matches_dense_contraction() {
        let mut tree = TreeTopology::with_root("a");
        tree.add_child("a", "b").unwrap();
        tree.add_child("b", "c").unwrap();
        let dims = qubits(&tree);
        let psi = Ttns::random(&tree, &dims, 2, 4).unwrap();
        let h = Ttno::from_hamiltonian(&random_pauli_hamiltonian(&[id("a"), id("b"), id("c")], 5, 9), &tree, &dims)
            .unwrap();
        // block (b, a): sum over the b-c subtree, leaving the (a, b) bond legs
        let got = from_scratch_block(&psi, &h, &id("b"), &id("a")).unwrap();
        let (kb, kc) = (psi.tensor(&id("b")).unwrap(), psi.tensor(&id("c")).unwrap());
        let (ob, oc) = (h.tensor(&id("b")).unwrap(), h.tensor(&id("c")).unwrap());
        let dk = kb.dim(0);
        let dop = ob.dim(0);
        let mut want = DenseTensor::zeros(&[dk, dop, dk]);
        let (e, w, f) = (kb.dim(1), ob.dim(1), 2usize);
        for k in 0..dk {
            for o in 0..dop {
                for q in 0..dk {
                    let mut acc = ZERO;
                    for k2 in 0..e {
                        for q2 in 0..e {
                            for o2 in 0..w {
                                for sb in 0..f {
                                    for tb in 0..f {
                                        for sc in 0..f {
                                            for tc in 0..f {
                                                acc += kb.get(&[k, k2, sb])
                                                    * kc.get(&[k2, sc])
                                                    * ob.get(&[o, o2, tb, sb])
                                                    * oc.get(&[o2, tc, sc])
                                                    * kb.get(&[q, q2, tb]).conj()
                                                    * kc.get(&[q2, tc]).conj();
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    want.set(&[k, o, q], acc);
                }
            }
        }
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn invalidation_then_rebuild_matches_fresh_build() {
        let (mut psi, h) = random_setup(2);
        let mut cache = EffectiveHamiltonianCache::build(&psi, &h).unwrap();
        let s = id("10");
        let t = DenseTensor::random(psi.tensor(&s).unwrap().shape(), 77).unwrap();
        psi.replace_tensor(&s, t).unwrap();
        cache.invalidate(&psi, &s);
        // blocks not containing the updated node survive
        assert!(cache.get(&id("00"), &id("0")).is_some());
        assert!(cache.get(&id("10"), &id("0")).is_none());
        assert!(cache.get(&id("0"), &id("20")).is_none());
        assert!(cache.get(&id("0"), &id("10")).is_some());
        for (p, c) in psi.topology().edges() {
            for (x, y) in [(&p, &c), (&c, &p)] {
                let fresh = from_scratch_block(&psi, &h, x, y).unwrap();
                assert!(cache.block(&psi, &h, x, y).unwrap().max_abs_diff(&fresh) < 1e-12);
            }
        }
    }

    #[test]
    fn identity_operator_gives_identity_at_centre() {
        let tree = three_chain_tree();
        let dims = qubits(&tree);
        let mut psi = Ttns::random(&tree, &dims, 2, 3).unwrap();
        let c = id("10");
        psi.move_orthogonalization_center(&c).unwrap();
        let h = Ttno::from_network(identity_operator_network(&tree, &dims).unwrap()).unwrap();
        let mut cache = EffectiveHamiltonianCache::build(&psi, &h).unwrap();
        let blk = cache.block(&psi, &h, &id("0"), &c).unwrap().clone();
        let d = blk.dim(0);
        assert!(blk.reshape(&[d, d]).unwrap().max_abs_diff(&DenseTensor::identity(d)) < 1e-12);
        let m = cache.site_hamiltonian(&psi, &h, &c).unwrap();
        assert!((m.clone() - DMatrix::identity(m.nrows(), m.ncols())).camax() < 1e-12);
    }

    #[test]
    fn effective_hamiltonians_are_hermitian() {
        let (mut psi, h) = random_setup(3);
        let c = id("00");
        psi.move_orthogonalization_center(&c).unwrap();
        let mut cache = EffectiveHamiltonianCache::new();
        let m = cache.site_hamiltonian(&psi, &h, &c).unwrap();
        assert!((m.clone() - m.adjoint()).camax() < 1e-10);
        let m = cache.two_site_hamiltonian(&psi, &h, &c, &id("01")).unwrap();
        assert!((m.clone() - m.adjoint()).camax() < 1e-10);
        let _r = psi_split(&mut psi, &c, &id("0"));
        cache.invalidate(&psi, &c);
        let m = cache.link_hamiltonian(&psi, &h, &c, &id("0")).unwrap();
        assert!((m.clone() - m.adjoint()).camax() < 1e-10);
    }

    fn psi_split(psi: &mut Ttns, a: &NodeId, b: &NodeId) -> DenseTensor {
        psi.network_mut().split_off_bond(a, b).unwrap()
    }

    fn two_qubits() -> (TreeTopology, SiteDims) {
        let mut tree = TreeTopology::with_root("0");
        tree.add_child("0", "1").unwrap();
        let dims = qubits(&tree);
        (tree, dims)
    }

    #[test]
    fn full_rank_site_hamiltonian_has_the_dense_spectrum() {
        let (tree, dims) = two_qubits();
        let order = tree.pre_order();
        for seed in 0..5 {
            let hs = random_pauli_hamiltonian(&order, 6, seed);
            let h = Ttno::from_hamiltonian(&hs, &tree, &dims).unwrap();
            let mut psi = Ttns::random(&tree, &dims, 2, seed).unwrap();
            for c in ["0", "1"] {
                psi.move_orthogonalization_center(&id(c)).unwrap();
                let mut cache = EffectiveHamiltonianCache::new();
                let m = cache.site_hamiltonian(&psi, &h, &id(c)).unwrap();
                let (ev, _) = hermitian_eigh(&m).unwrap();
                let dense = hs.to_dense(&order, &dims, DEFAULT_DENSE_CAP).unwrap();
                let (want, _) = hermitian_eigh(&dense).unwrap();
                for (a, b) in ev.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn link_hamiltonian_matches_dense_assembly() {
        let (tree, dims) = two_qubits();
        let order = tree.pre_order();
        let hs = random_pauli_hamiltonian(&order, 6, 21);
        let h = Ttno::from_hamiltonian(&hs, &tree, &dims).unwrap();
        let mut psi = Ttns::random(&tree, &dims, 2, 8).unwrap();
        let (a, b) = (id("0"), id("1"));
        psi.move_orthogonalization_center(&a).unwrap();
        psi_split(&mut psi, &a, &b);
        let mut cache = EffectiveHamiltonianCache::new();
        let m = cache.link_hamiltonian(&psi, &h, &a, &b).unwrap();
        // dense oracle: columns are the states obtained by inserting each
        // basis bond matrix, H_link = B^dagger H B
        let dense = hs.to_dense(&order, &dims, DEFAULT_DENSE_CAP).unwrap();
        let (d0, d1) = (psi.bond_dim(&a, &b).unwrap(), psi.bond_dim(&b, &a).unwrap());
        let mut basis = DMatrix::from_element(4, d0 * d1, ZERO);
        for j in 0..d0 * d1 {
            let mut r = DenseTensor::zeros(&[d0, d1]);
            r.data_mut()[j] = C64::new(1.0, 0.0);
            let mut s = psi.clone();
            s.network_mut().absorb_bond_matrix(&b, &a, &r).unwrap();
            s.network_mut().clear_orthogonality_center();
            basis.set_column(j, &s.to_dense(&order, DEFAULT_DENSE_CAP).unwrap());
        }
        let want = basis.adjoint() * dense * basis;
        assert!((m - want).camax() < 1e-12);
    }

    #[test]
    fn two_site_hamiltonian_matches_dense_assembly() {
        let mut tree = TreeTopology::with_root("a");
        tree.add_child("a", "b").unwrap();
        tree.add_child("a", "c").unwrap();
        tree.add_child("c", "d").unwrap();
        let dims = qubits(&tree);
        let order = tree.pre_order();
        let hs = random_pauli_hamiltonian(&order, 8, 5);
        let h = Ttno::from_hamiltonian(&hs, &tree, &dims).unwrap();
        let dense = hs.to_dense(&order, &dims, DEFAULT_DENSE_CAP).unwrap();
        for (x, y) in [("a", "c"), ("c", "a"), ("b", "a"), ("c", "d")] {
            let (x, y) = (id(x), id(y));
            let mut psi = Ttns::random(&tree, &dims, 2, 13).unwrap();
            psi.move_orthogonalization_center(&x).unwrap();
            let mut cache = EffectiveHamiltonianCache::new();
            let m = cache.two_site_hamiltonian(&psi, &h, &x, &y).unwrap();
            // dense oracle: place each basis joint tensor back by an exact split
            let pair = crate::evolution::tebd::contract_pair(&psi, &x, &y).unwrap();
            let n = pair.theta.len();
            let mut basis = DMatrix::from_element(1 << order.len(), n, ZERO);
            for j in 0..n {
                let mut t = DenseTensor::zeros(pair.theta.shape());
                t.data_mut()[j] = C64::new(1.0, 0.0);
                let p = crate::evolution::tebd::Pair { theta: t, pa: pair.pa, pb: pair.pb };
                let mut s = psi.clone();
                crate::evolution::tebd::split_pair(&mut s, &x, &y, &p, &crate::tensor::SvdParameters::default(), crate::evolution::tebd::Absorb::Second).unwrap();
                basis.set_column(j, &s.to_dense(&order, DEFAULT_DENSE_CAP).unwrap());
            }
            let want = basis.adjoint() * &dense * basis;
            assert!((m - want).camax() < 1e-12, "{x}-{y}");
        }
    }

    #[test]
    fn krylov_route_matches_dense_route() {
        for (n, seed) in [(64usize, 1u64), (300, 2)] {
            let m = random_hermitian(n, seed);
            let v: Vec<C64> = DenseTensor::random(&[n], seed + 10).unwrap().into_data();
            let f = C64::new(0.0, -0.3);
            let want = expm(&(m.clone() * f)).unwrap() * DVector::from_column_slice(&v);
            let got = local_expm_apply(&m, &v, f).unwrap();
            let kry = expm_krylov(|x| Ok((&m * DVector::from_column_slice(x)).as_slice().to_vec()), &v, f, KrylovOptions::default()).unwrap();
            for i in 0..n {
                assert!((got[i] - want[i]).norm() < 1e-10);
                assert!((kry[i] - want[i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn local_exponential_trivial_cases() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(-2.0, 0.0)]));
        let v = vec![C64::new(1.0, 0.0), C64::new(0.5, 0.0)];
        assert_eq!(local_expm_apply(&m, &v, ZERO).unwrap(), v);
        let out = local_expm_apply(&m, &v, C64::new(0.0, -0.7)).unwrap();
        assert!((out[0] - C64::new(0.0, -0.7).exp()).norm() < 1e-14);
        assert!((out[1] - C64::new(0.0, 1.4).exp() * 0.5).norm() < 1e-14);
        let bad = vec![C64::new(f64::NAN, 0.0), C64::new(0.0, 0.0)];
        assert!(local_expm_apply(&m, &bad, C64::new(0.0, 1.0)).is_err());
    }
}
