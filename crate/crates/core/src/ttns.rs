//! Tree tensor network states: one physical leg per node.

use std::ops::Deref;

use indexmap::IndexMap;
use nalgebra::DVector;

use crate::error::{Result, TtnError};
use crate::operators::{SiteDims, SymbolTable, TensorProduct};
use crate::tensor::{DenseTensor, C64, ONE};
use crate::tree::{NodeId, TreeTopology};
use crate::ttn::TreeTensorNetwork;
use crate::ttno::Ttno;

#[derive(Clone, Debug, PartialEq)]
pub struct Ttns {
    network: TreeTensorNetwork,
}

impl Deref for Ttns {
    type Target = TreeTensorNetwork;

    fn deref(&self) -> &TreeTensorNetwork {
        &self.network
    }
}

impl Ttns {
    pub fn from_network(network: TreeTensorNetwork) -> Result<Self> {
        for n in network.node_ids() {
            let open = network.open_dims(n)?;
            if open.len() != 1 {
                return Err(TtnError::Incompatible(format!(
                    "state node `{n}` needs exactly one open leg, found {}",
                    open.len()
                )));
            }
        }
        Ok(Self { network })
    }

    /// Product state with unit bonds. Nodes missing from `local_states` are
    /// an error; vectors are used as given (not normalised).
    pub fn product_state(tree: &TreeTopology, local_states: &IndexMap<NodeId, Vec<C64>>) -> Result<Self> {
        for n in tree.nodes() {
            if !local_states.contains_key(n) {
                return Err(TtnError::UnknownNode(n.clone()));
            }
        }
        let network = TreeTensorNetwork::from_fn(
            tree,
            |n, shape| {
                let v = &local_states[n];
                if v.iter().all(|z| z.norm() == 0.0) {
                    return Err(TtnError::Incompatible(format!("local state of `{n}` is zero")));
                }
                DenseTensor::new(shape.to_vec(), v.clone())
            },
            |n| vec![local_states.get(n).map_or(0, |v| v.len())],
            |_, _| 1,
        );
        Self::from_network(network?)
    }

    /// Product of computational basis states `|k_n>`.
    pub fn basis_state(tree: &TreeTopology, dims: &SiteDims, levels: &IndexMap<NodeId, usize>) -> Result<Self> {
        let mut states = IndexMap::new();
        for n in tree.nodes() {
            let d = *dims
                .get(n)
                .ok_or_else(|| TtnError::Operator(format!("no physical dimension given for `{n}`")))?;
            let k = levels.get(n).copied().unwrap_or(0);
            if k >= d {
                return Err(TtnError::Incompatible(format!("level {k} out of range at `{n}`")));
            }
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[k] = ONE;
            states.insert(n.clone(), v);
        }
        Self::product_state(tree, &states)
    }

    /// Random state with uniform bond dimension `bond_dim`, normalised and
    /// canonical around the root.
    pub fn random(tree: &TreeTopology, dims: &SiteDims, bond_dim: usize, seed: u64) -> Result<Self> {
        let mut net = TreeTensorNetwork::random(tree, |n| vec![dims[n]], |_, _| bond_dim, seed)?;
        let root = tree
            .root()
            .ok_or_else(|| TtnError::InvalidTree("empty tree".into()))?
            .clone();
        net.canonical_form(&root)?;
        let mut s = Self::from_network(net)?;
        s.normalize()?;
        Ok(s)
    }

    pub fn network(&self) -> &TreeTensorNetwork {
        &self.network
    }

    pub(crate) fn network_mut(&mut self) -> &mut TreeTensorNetwork {
        &mut self.network
    }

    pub fn into_network(self) -> TreeTensorNetwork {
        self.network
    }

    pub fn physical_dims(&self) -> SiteDims {
        self.network
            .node_ids()
            .map(|n| (n.clone(), self.network.open_dims(n).expect("exists")[0]))
            .collect()
    }

    pub fn canonical_form(&mut self, center: &NodeId) -> Result<()> {
        self.network.canonical_form(center)
    }

    pub fn move_orthogonalization_center(&mut self, new_center: &NodeId) -> Result<()> {
        self.network.move_orthogonalization_center(new_center)
    }

    /// Brings the orthogonality centre to `node`, building a canonical form
    /// first if none is recorded.
    pub fn ensure_center(&mut self, node: &NodeId) -> Result<()> {
        match self.network.orthogonality_center() {
            Some(c) if c == node => Ok(()),
            Some(_) => self.network.move_orthogonalization_center(node),
            None => self.network.canonical_form(node),
        }
    }

    pub fn pad_bond_dimensions(&mut self, targets: &IndexMap<(NodeId, NodeId), usize>) -> Result<()> {
        self.network.pad_bonds_to(targets)
    }

    /// Pads every bond to `target`, clamped to the largest meaningful size.
    pub fn pad_uniform(&mut self, target: usize) -> Result<()> {
        self.network.pad_bond_dimensions(target)
    }

    pub fn replace_tensor(&mut self, id: &NodeId, tensor: DenseTensor) -> Result<()> {
        self.network.replace_tensor(id, tensor)
    }

    pub fn scale(&mut self, factor: C64) -> Result<()> {
        self.network.scale(factor, None)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(TtnError::NonFinite("cannot normalise the zero state".into()));
        }
        self.scale(C64::new(1.0 / n, 0.0))
    }

    /// Dense state vector with `site_order[0]` as the most significant index.
    pub fn to_dense(&self, site_order: &[NodeId], cap: usize) -> Result<DVector<C64>> {
        let dims = self.physical_dims();
        if site_order.len() != dims.len() || site_order.iter().any(|n| !dims.contains_key(n)) {
            return Err(TtnError::Incompatible(
                "site order must list every state node once".into(),
            ));
        }
        let size: usize = site_order.iter().map(|n| dims[n]).product();
        if size > cap {
            return Err(TtnError::CapExceeded { size, cap });
        }
        let full = self.network.completely_contract_tree()?;
        let pos: IndexMap<NodeId, usize> = self
            .network
            .topology()
            .pre_order()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let perm: Vec<usize> = site_order.iter().map(|n| pos[n]).collect();
        let t = full.transpose(&perm)?;
        Ok(DVector::from_vec(t.into_data()))
    }

    /// `<psi|psi>`. Uses the centre tensor alone when a canonical form is
    /// recorded.
    pub fn scalar_product(&self) -> C64 {
        match self.network.orthogonality_center() {
            Some(c) => {
                let t = self.network.tensor(c).expect("centre exists");
                C64::new(t.norm().powi(2), 0.0)
            }
            None => self.scalar_product_full(),
        }
    }

    /// `<psi|psi>` by contracting the whole bra-ket network leaf to root.
    pub fn scalar_product_full(&self) -> C64 {
        self.inner(self).expect("same topology")
    }

    pub fn norm(&self) -> f64 {
        self.scalar_product().re.max(0.0).sqrt()
    }

    /// `<self|other>` for two states on the same tree.
    pub fn inner(&self, other: &Ttns) -> Result<C64> {
        let id = identity_operator_network(other.network.topology(), &other.physical_dims())?;
        sandwich(&other.network, &id, &self.network)
    }

    /// Expectation value of a tensor product. An empty product (only
    /// identities) reduces to the scalar product; a single non-trivial
    /// factor is evaluated at the orthogonality centre, which is moved there
    /// when a canonical form exists; everything else is a full sandwich.
    pub fn expectation_value(&mut self, tp: &TensorProduct, symbols: &SymbolTable) -> Result<C64> {
        for n in tp.nodes() {
            if !self.network.contains(n) {
                return Err(TtnError::UnknownNode(n.clone()));
            }
        }
        let support = tp.support(symbols)?;
        if support.is_empty() {
            return Ok(self.scalar_product());
        }
        if support.len() == 1 && self.network.orthogonality_center().is_some() {
            let site = &support[0];
            self.network.move_orthogonalization_center(site)?;
            let m = symbols.resolve(tp.get(site).expect("in support"))?;
            return self.local_expectation(site, &m);
        }
        self.expectation_value_full(tp, symbols)
    }

    /// `<C|O|C>` for the centre tensor `C` at `site`.
    fn local_expectation(&self, site: &NodeId, m: &DenseTensor) -> Result<C64> {
        let t = self.network.tensor(site)?;
        let phys = t.degree() - 1;
        check_factor(site, m, t.dim(phys))?;
        let ot = DenseTensor::contract(t, m, &[phys], &[1])?;
        let legs: Vec<usize> = (0..t.degree()).collect();
        Ok(DenseTensor::contract(&t.conj(), &ot, &legs, &legs)?.scalar_value())
    }

    /// Expectation value by a full bra-operator-ket contraction.
    pub fn expectation_value_full(&self, tp: &TensorProduct, symbols: &SymbolTable) -> Result<C64> {
        let dims = self.physical_dims();
        let mut tensors = IndexMap::new();
        for n in self.network.topology().nodes() {
            let d = dims[n];
            let m = match tp.get(n) {
                Some(op) => symbols.resolve(op)?,
                None => DenseTensor::identity(d),
            };
            check_factor(n, &m, d)?;
            let nv = self.network.node(n)?.nvirt();
            let mut shape = vec![1; nv];
            shape.extend([d, d]);
            tensors.insert(n.clone(), m.into_reshape(&shape)?);
        }
        let op = TreeTensorNetwork::from_parts(self.network.topology().clone(), tensors)?;
        sandwich(&self.network, &op, &self.network)
    }

    /// `<psi|A|psi>` for an operator network on the same tree, contracted
    /// from the leaves to the root through degree-3 blocks.
    pub fn expectation_value_ttno(&self, op: &Ttno) -> Result<C64> {
        sandwich(&self.network, op.network(), &self.network)
    }
}

fn check_factor(n: &NodeId, m: &DenseTensor, d: usize) -> Result<()> {
    if m.dim(0) != d {
        return Err(TtnError::Operator(format!(
            "factor on `{n}` has dimension {} but the site has {d}",
            m.dim(0)
        )));
    }
    Ok(())
}

/// Operator network of identities with unit bonds.
pub(crate) fn identity_operator_network(tree: &TreeTopology, dims: &SiteDims) -> Result<TreeTensorNetwork> {
    TreeTensorNetwork::from_fn(
        tree,
        |_, shape| {
            let d = shape[shape.len() - 1];
            DenseTensor::identity(d).into_reshape(shape)
        },
        |n| vec![dims[n], dims[n]],
        |_, _| 1,
    )
}

/// Checks that three networks live on the same tree (same node set and
/// edges; child order may differ).
pub(crate) fn check_same_tree(a: &TreeTensorNetwork, b: &TreeTensorNetwork) -> Result<()> {
    if a.len() != b.len() || a.topology().undirected_edges() != b.topology().undirected_edges() {
        return Err(TtnError::Incompatible("networks live on different trees".into()));
    }
    if a.len() == 1 && a.root() != b.root() {
        return Err(TtnError::Incompatible("networks live on different trees".into()));
    }
    Ok(())
}

/// The three tensors of one node in a bra-operator-ket sandwich, with the
/// leg of each tensor that points to every neighbour (in a common neighbour
/// order).
pub(crate) struct SandwichNode<'a> {
    pub ket: &'a DenseTensor,
    pub ket_legs: Vec<usize>,
    pub op: &'a DenseTensor,
    pub op_legs: Vec<usize>,
    pub bra: &'a DenseTensor,
    pub bra_legs: Vec<usize>,
}

impl<'a> SandwichNode<'a> {
    /// Gathers the tensors of `node`; neighbours follow the ket's layout.
    pub(crate) fn gather(
        ket: &'a TreeTensorNetwork,
        op: &'a TreeTensorNetwork,
        bra: &'a TreeTensorNetwork,
        node: &NodeId,
    ) -> Result<(Vec<NodeId>, Self)> {
        let neighbours = ket.node(node)?.neighbours();
        let legs = |net: &TreeTensorNetwork| -> Result<Vec<usize>> {
            neighbours.iter().map(|m| net.neighbour_index(node, m)).collect()
        };
        Ok((
            neighbours.clone(),
            Self {
                ket: ket.tensor(node)?,
                ket_legs: legs(ket)?,
                op: op.tensor(node)?,
                op_legs: legs(op)?,
                bra: bra.tensor(node)?,
                bra_legs: legs(bra)?,
            },
        ))
    }

    /// Contracts the node with the blocks coming from every neighbour except
    /// `target`. `blocks[k]` belongs to the k-th non-target neighbour and has
    /// legs (ket, op, bra). The result has legs (ket, op, bra) on the target
    /// edge, or is a scalar when `target` is `None`.
    pub(crate) fn contract(&self, target: Option<usize>, blocks: &[&DenseTensor]) -> Result<DenseTensor> {
        let nb = self.ket_legs.len();
        let others: Vec<usize> = (0..nb).filter(|&k| Some(k) != target).collect();
        if others.len() != blocks.len() {
            return Err(TtnError::Incompatible("wrong number of environment blocks".into()));
        }
        let t_off = usize::from(target.is_some());
        let order = |legs: &[usize], tail: &[usize]| -> Vec<usize> {
            target
                .map(|t| legs[t])
                .into_iter()
                .chain(others.iter().map(|&k| legs[k]))
                .chain(tail.iter().copied())
                .collect()
        };
        let kd = self.ket.degree();
        let mut t = self.ket.transpose(&order(&self.ket_legs, &[kd - 1]))?;
        for b in blocks {
            t = DenseTensor::contract(&t, b, &[t_off], &[0])?;
        }
        // t: [target?, phys, (op_k, bra_k)...]
        let od = self.op.degree();
        let a = self.op.transpose(&order(&self.op_legs, &[od - 2, od - 1]))?;
        let k = others.len();
        let t_legs: Vec<usize> = std::iter::once(t_off)
            .chain((0..k).map(|i| t_off + 1 + 2 * i))
            .collect();
        let a_legs: Vec<usize> = std::iter::once(a.degree() - 1)
            .chain((0..k).map(|i| t_off + i))
            .collect();
        let t = DenseTensor::contract(&t, &a, &t_legs, &a_legs)?;
        // t: [target_ket?, bra_1..bra_k, target_op?, out]
        let bd = self.bra.degree();
        let b = self.bra.conj().transpose(&order(&self.bra_legs, &[bd - 1]))?;
        let t_legs: Vec<usize> = (0..k).map(|i| t_off + i).chain(std::iter::once(t.degree() - 1)).collect();
        let b_legs: Vec<usize> = (0..k).map(|i| t_off + i).chain(std::iter::once(b.degree() - 1)).collect();
        DenseTensor::contract(&t, &b, &t_legs, &b_legs)
    }

    /// Applies the effective operator formed by all neighbour blocks and the
    /// operator tensor to `x`, a tensor in the ket's layout whose neighbour
    /// legs are ordered like `ket_legs`. The result has the same layout.
    pub(crate) fn apply(&self, x: &DenseTensor, blocks: &[&DenseTensor]) -> Result<DenseTensor> {
        let nb = self.ket_legs.len();
        if blocks.len() != nb {
            return Err(TtnError::Incompatible("wrong number of environment blocks".into()));
        }
        let xd = x.degree();
        let perm: Vec<usize> = self.ket_legs.iter().copied().chain(std::iter::once(xd - 1)).collect();
        let mut t = x.transpose(&perm)?;
        for b in blocks {
            t = DenseTensor::contract(&t, b, &[0], &[0])?;
        }
        // t: [phys, (op_k, bra_k)...]
        let od = self.op.degree();
        let a_perm: Vec<usize> = self.op_legs.iter().copied().chain([od - 2, od - 1]).collect();
        let a = self.op.transpose(&a_perm)?;
        let t_legs: Vec<usize> = std::iter::once(0).chain((0..nb).map(|i| 1 + 2 * i)).collect();
        let a_legs: Vec<usize> = std::iter::once(nb + 1).chain(0..nb).collect();
        let t = DenseTensor::contract(&t, &a, &t_legs, &a_legs)?;
        // t: [bra_1..bra_k, out] in neighbour order; back to the ket layout
        let mut inv = vec![0usize; xd];
        for (pos, &leg) in perm.iter().enumerate() {
            inv[leg] = pos;
        }
        t.transpose(&inv)
    }
}

/// `<bra|op|ket>` contracted from the leaves to the root.
pub(crate) fn sandwich(ket: &TreeTensorNetwork, op: &TreeTensorNetwork, bra: &TreeTensorNetwork) -> Result<C64> {
    check_same_tree(ket, op)?;
    check_same_tree(ket, bra)?;
    let root = ket
        .root()
        .ok_or_else(|| TtnError::InvalidTree("empty network".into()))?
        .clone();
    let mut blocks: IndexMap<NodeId, DenseTensor> = IndexMap::new();
    for n in ket.topology().post_order() {
        let (neighbours, node) = SandwichNode::gather(ket, op, bra, &n)?;
        let parent = ket.topology().parent(&n)?.cloned();
        let target = parent.as_ref().map(|p| neighbours.iter().position(|m| m == p).expect("neighbour"));
        let incoming: Vec<&DenseTensor> = neighbours
            .iter()
            .filter(|m| Some(*m) != parent.as_ref())
            .map(|m| &blocks[m])
            .collect();
        let b = node.contract(target, &incoming)?;
        blocks.insert(n.clone(), b);
    }
    Ok(blocks[&root].scalar_value())
}
