//! Tree tensor networks: a [`TreeTopology`] with one [`DenseTensor`] per node.
//!
//! Every node tensor orders its legs as: the bond to the parent (absent at
//! the root), the bonds to the children in child order, then the open legs.
//! All mutating operations re-establish this layout before returning.

mod io;

pub use io::{read_network, write_network};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TtnError};
use crate::tensor::{
    tensor_qr, truncated_svd, ContractionMode, DenseTensor,
    SplitMode, SvdParameters, C64,
};
use crate::tree::{NodeId, TreeTopology};

/// Read-only view of one node's leg bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub shape: Vec<usize>,
}

impl Node {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn nvirt(&self) -> usize {
        self.children.len() + usize::from(self.parent.is_some())
    }

    pub fn nopen(&self) -> usize {
        self.shape.len() - self.nvirt()
    }

    pub fn open_legs(&self) -> Vec<usize> {
        (self.nvirt()..self.shape.len()).collect()
    }

    pub fn open_dims(&self) -> Vec<usize> {
        self.shape[self.nvirt()..].to_vec()
    }

    pub fn neighbours(&self) -> Vec<NodeId> {
        self.parent
            .iter()
            .chain(self.children.iter())
            .cloned()
            .collect()
    }

    pub fn neighbour_index(&self, other: &NodeId) -> Option<usize> {
        self.neighbours().iter().position(|n| n == other)
    }
}

/// Which legs of a node go into one half of a split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LegSpecification {
    pub takes_parent: bool,
    pub children: Vec<NodeId>,
    /// Open legs by their index in the node tensor being split.
    pub open_legs: Vec<usize>,
    pub becomes_root: bool,
}

impl LegSpecification {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parent(mut self) -> Self {
        self.takes_parent = true;
        self
    }

    pub fn child(mut self, id: impl Into<NodeId>) -> Self {
        self.children.push(id.into());
        self
    }

    pub fn open(mut self, leg: usize) -> Self {
        self.open_legs.push(leg);
        self
    }

    pub fn root(mut self) -> Self {
        self.becomes_root = true;
        self
    }
}

/// Outcome of an SVD node split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitInfo {
    pub bond_dim: usize,
    pub discarded: Vec<f64>,
    pub all_truncated: bool,
}

impl SplitInfo {
    pub fn truncation_error(&self) -> f64 {
        self.discarded.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TreeTensorNetwork {
    pub(crate) topology: TreeTopology,
    pub(crate) tensors: IndexMap<NodeId, DenseTensor>,
    pub(crate) orthogonality_center: Option<NodeId>,
}

/// Moves leg `from` of `t` to position `to`, shifting the legs in between.
pub(crate) fn move_leg(t: &DenseTensor, from: usize, to: usize) -> Result<DenseTensor> {
    if from == to {
        return Ok(t.clone());
    }
    let mut perm: Vec<usize> = (0..t.degree()).filter(|&l| l != from).collect();
    perm.insert(to, from);
    t.transpose(&perm)
}

impl TreeTensorNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn root(&self) -> Option<&NodeId> {
        self.topology.root()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.topology.nodes()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.tensors.contains_key(id)
    }

    pub fn tensor(&self, id: &NodeId) -> Result<&DenseTensor> {
        self.tensors
            .get(id)
            .ok_or_else(|| TtnError::UnknownNode(id.clone()))
    }

    pub fn tensors(&self) -> &IndexMap<NodeId, DenseTensor> {
        &self.tensors
    }

    pub fn orthogonality_center(&self) -> Option<&NodeId> {
        self.orthogonality_center.as_ref()
    }

    /// Forgets the orthogonality centre, e.g. after an external modification.
    pub fn clear_orthogonality_center(&mut self) {
        self.orthogonality_center = None;
    }

    pub fn node(&self, id: &NodeId) -> Result<Node> {
        let shape = self.tensor(id)?.shape().to_vec();
        Ok(Node {
            id: id.clone(),
            parent: self.topology.parent(id)?.cloned(),
            children: self.topology.children(id)?.to_vec(),
            shape,
        })
    }

    pub(crate) fn nvirt(&self, id: &NodeId) -> usize {
        self.topology.children[id].len()
            + usize::from(self.topology.parent[id].is_some())
    }

    /// Leg of `id` that connects to `neighbour`.
    pub fn neighbour_index(&self, id: &NodeId, neighbour: &NodeId) -> Result<usize> {
        self.topology.check(id)?;
        let parent = self.topology.parent[id].as_ref();
        if parent == Some(neighbour) {
            return Ok(0);
        }
        let offset = usize::from(parent.is_some());
        self.topology.children[id]
            .iter()
            .position(|c| c == neighbour)
            .map(|p| p + offset)
            .ok_or_else(|| TtnError::NotAdjacent(id.clone(), neighbour.clone()))
    }

    pub fn open_legs(&self, id: &NodeId) -> Result<Vec<usize>> {
        let t = self.tensor(id)?;
        Ok((self.nvirt(id)..t.degree()).collect())
    }

    pub fn open_dims(&self, id: &NodeId) -> Result<Vec<usize>> {
        let t = self.tensor(id)?;
        Ok(t.shape()[self.nvirt(id)..].to_vec())
    }

    pub fn bond_dim(&self, a: &NodeId, b: &NodeId) -> Result<usize> {
        let leg = self.neighbour_index(a, b)?;
        Ok(self.tensors[a].dim(leg))
    }

    /// Bond dimension of every `(parent, child)` edge in pre-order.
    pub fn bond_dims(&self) -> IndexMap<(NodeId, NodeId), usize> {
        self.topology
            .edges()
            .into_iter()
            .map(|(p, c)| {
                let d = self.tensors[&c].dim(0);
                ((p, c), d)
            })
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().values().copied().max().unwrap_or(1)
    }

    /// Total number of stored tensor entries.
    pub fn total_entries(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn add_root(&mut self, id: impl Into<NodeId>, tensor: DenseTensor) -> Result<()> {
        let id = id.into();
        self.topology.add_root(id.clone())?;
        self.tensors.insert(id, tensor);
        Ok(())
    }

    /// Attaches a new node. `child_leg` of `tensor` is connected to the open
    /// leg `parent_leg` of the parent, indexed in the parent's current layout.
    /// The child's bond moves to leg 0; the parent's bond moves behind its
    /// existing children.
    pub fn add_child_to_parent(
        &mut self,
        id: impl Into<NodeId>,
        tensor: DenseTensor,
        child_leg: usize,
        parent_id: &NodeId,
        parent_leg: usize,
    ) -> Result<()> {
        let id = id.into();
        if self.contains(&id) {
            return Err(TtnError::DuplicateNode(id));
        }
        let parent_t = self.tensor(parent_id)?;
        let nv = self.nvirt(parent_id);
        if parent_leg < nv || parent_leg >= parent_t.degree() {
            return Err(TtnError::LegNotOpen {
                node: parent_id.clone(),
                leg: parent_leg,
            });
        }
        if child_leg >= tensor.degree() {
            return Err(TtnError::LegOutOfRange {
                leg: child_leg,
                degree: tensor.degree(),
            });
        }
        if tensor.dim(child_leg) != parent_t.dim(parent_leg) {
            return Err(TtnError::DimensionMismatch {
                leg_a: child_leg,
                dim_a: tensor.dim(child_leg),
                leg_b: parent_leg,
                dim_b: parent_t.dim(parent_leg),
            });
        }
        let new_parent = move_leg(parent_t, parent_leg, nv)?;
        let child = move_leg(&tensor, child_leg, 0)?;
        self.topology.add_child(parent_id.clone(), id.clone())?;
        self.tensors.insert(parent_id.clone(), new_parent);
        self.tensors.insert(id, child);
        self.orthogonality_center = None;
        Ok(())
    }

    /// Replaces a node tensor. The new tensor must keep all bond dimensions.
    pub fn replace_tensor(&mut self, id: &NodeId, tensor: DenseTensor) -> Result<()> {
        let old = self.tensor(id)?;
        let nv = self.nvirt(id);
        if tensor.degree() != old.degree() || tensor.shape()[..nv] != old.shape()[..nv] {
            return Err(TtnError::Incompatible(format!(
                "tensor of shape {:?} cannot replace shape {:?} at `{id}`",
                tensor.shape(),
                old.shape()
            )));
        }
        self.tensors.insert(id.clone(), tensor);
        if self.orthogonality_center.as_ref() != Some(id) {
            self.orthogonality_center = None;
        }
        Ok(())
    }

    /// Sets a node tensor without touching the orthogonality centre marker.
    /// Callers are responsible for bond consistency.
    pub(crate) fn set_tensor(&mut self, id: &NodeId, tensor: DenseTensor) {
        debug_assert_eq!(tensor.degree(), self.tensors[id].degree());
        self.tensors.insert(id.clone(), tensor);
    }

    pub(crate) fn set_orthogonality_center(&mut self, c: Option<NodeId>) {
        self.orthogonality_center = c;
    }

    /// Renames a node.
    pub fn replace_node_id(&mut self, old: &NodeId, new: impl Into<NodeId>) -> Result<()> {
        let new = new.into();
        self.topology.replace_node(old, new.clone())?;
        let idx = self.tensors.get_index_of(old).expect("checked by topology");
        let t = self.tensors.shift_remove(old).expect("present");
        self.tensors.shift_insert(idx, new.clone(), t);
        if self.orthogonality_center.as_ref() == Some(old) {
            self.orthogonality_center = Some(new);
        }
        Ok(())
    }

    /// Checks that every bond has equal dimensions on both ends.
    pub fn check_consistency(&self) -> Result<()> {
        for (p, c) in self.topology.edges() {
            let dp = self.tensors[&p].dim(self.neighbour_index(&p, &c)?);
            let dc = self.tensors[&c].dim(0);
            if dp != dc {
                return Err(TtnError::DimensionMismatch {
                    leg_a: self.neighbour_index(&p, &c)?,
                    dim_a: dp,
                    leg_b: 0,
                    dim_b: dc,
                });
            }
        }
        Ok(())
    }

    pub fn conj(&self) -> Self {
        Self {
            topology: self.topology.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), t.conj()))
                .collect(),
            orthogonality_center: self.orthogonality_center.clone(),
        }
    }

    /// Merges two adjacent nodes into `new_id`.
    ///
    /// The merged tensor has legs: the external parent bond (if any), the
    /// remaining children of `a`, the remaining children of `b`, the open
    /// legs of `a`, then the open legs of `b`.
    pub fn contract_nodes(&mut self, a: &NodeId, b: &NodeId, new_id: impl Into<NodeId>) -> Result<()> {
        let new_id = new_id.into();
        self.topology.check(a)?;
        self.topology.check(b)?;
        if !self.topology.are_adjacent(a, b) {
            return Err(TtnError::NotAdjacent(a.clone(), b.clone()));
        }
        if new_id != *a && new_id != *b && self.contains(&new_id) {
            return Err(TtnError::DuplicateNode(new_id));
        }
        let a_is_upper = self.topology.parent[b].as_ref() == Some(a);
        let (upper, lower) = if a_is_upper { (a, b) } else { (b, a) };
        let ext_parent = self.topology.parent[upper].clone();

        let la = self.neighbour_index(a, b)?;
        let lb = self.neighbour_index(b, a)?;
        let na = self.node(a)?;
        let nb = self.node(b)?;
        let merged = DenseTensor::contract(&self.tensors[a], &self.tensors[b], &[la], &[lb])?;

        // positions of a's and b's legs inside `merged`
        let pos_a = |leg: usize| if leg < la { leg } else { leg - 1 };
        let off_b = na.shape.len() - 1;
        let pos_b = |leg: usize| off_b + if leg < lb { leg } else { leg - 1 };

        let mut perm = Vec::with_capacity(merged.degree());
        if ext_parent.is_some() {
            perm.push(if a_is_upper { pos_a(0) } else { pos_b(0) });
        }
        let a_children: Vec<NodeId> = na.children.iter().filter(|c| *c != b).cloned().collect();
        let b_children: Vec<NodeId> = nb.children.iter().filter(|c| *c != a).cloned().collect();
        for c in &a_children {
            perm.push(pos_a(self.neighbour_index(a, c)?));
        }
        for c in &b_children {
            perm.push(pos_b(self.neighbour_index(b, c)?));
        }
        perm.extend(na.open_legs().into_iter().map(pos_a));
        perm.extend(nb.open_legs().into_iter().map(pos_b));
        let merged = merged.transpose(&perm)?;

        // topology update
        let topo = &mut self.topology;
        let mut kids = a_children.clone();
        kids.extend(b_children.iter().cloned());
        for k in &kids {
            topo.parent.insert(k.clone(), Some(new_id.clone()));
        }
        match &ext_parent {
            Some(p) => {
                let list = topo.children.get_mut(p).expect("parent exists");
                let idx = list.iter().position(|x| x == upper).expect("is a child");
                list[idx] = new_id.clone();
            }
            None => topo.root = Some(new_id.clone()),
        }
        let idx = topo.parent.get_index_of(upper).expect("exists");
        topo.parent.shift_remove(upper);
        topo.parent.shift_remove(lower);
        topo.children.shift_remove(upper);
        topo.children.shift_remove(lower);
        let idx = idx.min(topo.parent.len());
        topo.parent.shift_insert(idx, new_id.clone(), ext_parent);
        topo.children.shift_insert(idx, new_id.clone(), kids);

        let tidx = self.tensors.get_index_of(upper).expect("exists");
        self.tensors.shift_remove(upper);
        self.tensors.shift_remove(lower);
        let tidx = tidx.min(self.tensors.len());
        self.tensors.shift_insert(tidx, new_id.clone(), merged);

        if let Some(c) = &self.orthogonality_center {
            if c == a || c == b {
                self.orthogonality_center = Some(new_id);
            }
        }
        Ok(())
    }

    fn spec_legs(&self, id: &NodeId, spec: &LegSpecification) -> Result<Vec<usize>> {
        let mut legs = Vec::new();
        if spec.takes_parent {
            legs.push(0);
        }
        for c in &spec.children {
            legs.push(self.neighbour_index(id, c).map_err(|_| {
                TtnError::InvalidLegSpecification(format!("`{c}` is not a child of `{id}`"))
            })?);
        }
        let nv = self.nvirt(id);
        for &l in &spec.open_legs {
            if l < nv || l >= self.tensors[id].degree() {
                return Err(TtnError::InvalidLegSpecification(format!(
                    "leg {l} of `{id}` is not an open leg"
                )));
            }
            legs.push(l);
        }
        Ok(legs)
    }

    fn validate_specs(&self, id: &NodeId, s1: &LegSpecification, s2: &LegSpecification) -> Result<()> {
        let is_root = self.topology.parent[id].is_none();
        if is_root {
            if s1.takes_parent || s2.takes_parent {
                return Err(TtnError::InvalidLegSpecification(format!(
                    "`{id}` is the root and has no parent leg"
                )));
            }
            if s1.becomes_root == s2.becomes_root {
                return Err(TtnError::InvalidLegSpecification(
                    "splitting the root requires exactly one specification with becomes_root"
                        .into(),
                ));
            }
        } else {
            if s1.becomes_root || s2.becomes_root {
                return Err(TtnError::InvalidLegSpecification(format!(
                    "`{id}` is not the root; use takes_parent instead of becomes_root"
                )));
            }
            if s1.takes_parent == s2.takes_parent {
                return Err(TtnError::InvalidLegSpecification(
                    "exactly one specification must take the parent leg".into(),
                ));
            }
        }
        let l1 = self.spec_legs(id, s1)?;
        let l2 = self.spec_legs(id, s2)?;
        let degree = self.tensors[id].degree();
        let mut count = vec![0usize; degree];
        for &l in l1.iter().chain(&l2) {
            count[l] += 1;
        }
        let unclaimed: Vec<usize> = (0..degree).filter(|&l| count[l] == 0).collect();
        let doubled: Vec<usize> = (0..degree).filter(|&l| count[l] > 1).collect();
        if !unclaimed.is_empty() || !doubled.is_empty() {
            return Err(TtnError::InvalidLegSpecification(format!(
                "legs of `{id}` unclaimed: {unclaimed:?}, claimed twice: {doubled:?}"
            )));
        }
        Ok(())
    }

    /// Replaces node `id` by two adjacent nodes holding `first` and `second`,
    /// where `first` carries the legs of `s1` followed by the new bond and
    /// `second` carries the new bond followed by the legs of `s2`.
    fn install_split(
        &mut self,
        id: &NodeId,
        s1: &LegSpecification,
        s2: &LegSpecification,
        id1: NodeId,
        id2: NodeId,
        first: DenseTensor,
        second: DenseTensor,
    ) -> Result<()> {
        let first_upper = s1.takes_parent || s1.becomes_root;
        let n1 = s1.children.len() + s1.open_legs.len() + usize::from(s1.takes_parent);
        let n2 = s2.children.len() + s2.open_legs.len() + usize::from(s2.takes_parent);
        // bring the bond of each factor into its layout position
        let (upper_id, lower_id, upper_spec, lower_spec) = if first_upper {
            (id1.clone(), id2.clone(), s1, s2)
        } else {
            (id2.clone(), id1.clone(), s2, s1)
        };
        let (upper_t, lower_t) = if first_upper {
            // first: [p?, children, open, bond] -> [p?, children, bond, open]
            let bond_pos = usize::from(s1.takes_parent) + s1.children.len();
            let up = move_leg(&first, n1, bond_pos)?;
            (up, second)
        } else {
            // second: [bond, p?, children, open] -> [p?, children, bond, open]
            let bond_pos = usize::from(s2.takes_parent) + s2.children.len();
            let up = move_leg(&second, 0, bond_pos)?;
            let low = move_leg(&first, n1, 0)?;
            (up, low)
        };
        debug_assert_eq!(upper_t.degree(), if first_upper { n1 + 1 } else { n2 + 1 });

        let old_parent = self.topology.parent[id].clone();
        let topo = &mut self.topology;
        let idx = topo.parent.get_index_of(id).expect("exists");
        topo.parent.shift_remove(id);
        topo.children.shift_remove(id);
        for c in &upper_spec.children {
            topo.parent.insert(c.clone(), Some(upper_id.clone()));
        }
        for c in &lower_spec.children {
            topo.parent.insert(c.clone(), Some(lower_id.clone()));
        }
        let mut upper_kids = upper_spec.children.clone();
        upper_kids.push(lower_id.clone());
        match &old_parent {
            Some(p) => {
                let list = topo.children.get_mut(p).expect("exists");
                let pos = list.iter().position(|x| x == id).expect("child");
                list[pos] = upper_id.clone();
            }
            None => topo.root = Some(upper_id.clone()),
        }
        let idx = idx.min(topo.parent.len());
        topo.parent.shift_insert(idx, upper_id.clone(), old_parent);
        topo.children.shift_insert(idx, upper_id.clone(), upper_kids);
        topo.parent
            .shift_insert(idx + 1, lower_id.clone(), Some(upper_id.clone()));
        topo.children
            .shift_insert(idx + 1, lower_id.clone(), lower_spec.children.clone());

        let tidx = self.tensors.get_index_of(id).expect("exists");
        self.tensors.shift_remove(id);
        let tidx = tidx.min(self.tensors.len());
        self.tensors.shift_insert(tidx, upper_id, upper_t);
        self.tensors.shift_insert(tidx + 1, lower_id, lower_t);
        Ok(())
    }

    fn check_split_ids(&self, id: &NodeId, a: &NodeId, b: &NodeId) -> Result<()> {
        if a == b {
            return Err(TtnError::DuplicateNode(a.clone()));
        }
        for n in [a, b] {
            if n != id && self.contains(n) {
                return Err(TtnError::DuplicateNode(n.clone()));
            }
        }
        Ok(())
    }

    /// Splits a node by a QR decomposition. The Q node is an isometry toward
    /// the R node. Children listed in a specification keep their relative
    /// order; the lower of the two new nodes becomes the last child of the
    /// upper one.
    pub fn split_node_qr(
        &mut self,
        id: &NodeId,
        spec_q: &LegSpecification,
        spec_r: &LegSpecification,
        q_id: impl Into<NodeId>,
        r_id: impl Into<NodeId>,
    ) -> Result<()> {
        let (q_id, r_id) = (q_id.into(), r_id.into());
        self.topology.check(id)?;
        self.check_split_ids(id, &q_id, &r_id)?;
        self.validate_specs(id, spec_q, spec_r)?;
        let ql = self.spec_legs(id, spec_q)?;
        let rl = self.spec_legs(id, spec_r)?;
        let (q, r) = tensor_qr(&self.tensors[id], &ql, &rl, SplitMode::Reduced)?;
        let was_center = self.orthogonality_center.as_ref() == Some(id);
        self.install_split(id, spec_q, spec_r, q_id, r_id.clone(), q, r)?;
        self.orthogonality_center = if was_center { Some(r_id) } else { None };
        Ok(())
    }

    /// Splits a node by a truncated SVD with the singular values absorbed
    /// into the V node.
    pub fn split_node_svd(
        &mut self,
        id: &NodeId,
        spec_u: &LegSpecification,
        spec_v: &LegSpecification,
        u_id: impl Into<NodeId>,
        v_id: impl Into<NodeId>,
        params: &SvdParameters,
    ) -> Result<SplitInfo> {
        self.split_node_svd_with(id, spec_u, spec_v, u_id, v_id, params, ContractionMode::IntoV)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn split_node_svd_with(
        &mut self,
        id: &NodeId,
        spec_u: &LegSpecification,
        spec_v: &LegSpecification,
        u_id: impl Into<NodeId>,
        v_id: impl Into<NodeId>,
        params: &SvdParameters,
        mode: ContractionMode,
    ) -> Result<SplitInfo> {
        let (u_id, v_id) = (u_id.into(), v_id.into());
        self.topology.check(id)?;
        self.check_split_ids(id, &u_id, &v_id)?;
        self.validate_specs(id, spec_u, spec_v)?;
        let ul = self.spec_legs(id, spec_u)?;
        let vl = self.spec_legs(id, spec_v)?;
        let svd = truncated_svd(&self.tensors[id], &ul, &vl, params)?;
        let info = SplitInfo {
            bond_dim: svd.s.len(),
            discarded: svd.discarded.clone(),
            all_truncated: svd.all_truncated,
        };
        let (u, v) = match mode {
            ContractionMode::IntoU => (crate::tensor::split::scale_last_leg(svd.u, &svd.s), svd.v),
            ContractionMode::IntoV => (svd.u, crate::tensor::split::scale_first_leg(svd.v, &svd.s)),
        };
        let was_center = self.orthogonality_center.as_ref() == Some(id);
        self.install_split(id, spec_u, spec_v, u_id.clone(), v_id.clone(), u, v)?;
        self.orthogonality_center = match (was_center, mode) {
            (true, ContractionMode::IntoV) => Some(v_id),
            (true, ContractionMode::IntoU) => Some(u_id),
            _ => None,
        };
        Ok(info)
    }

    /// Contracts the whole network into one tensor. Its legs are the open
    /// legs of all nodes, nodes in depth-first pre-order from the root
    /// (children in order), each node's open legs in order.
    pub fn completely_contract_tree(&self) -> Result<DenseTensor> {
        let root = self
            .topology
            .root()
            .ok_or_else(|| TtnError::InvalidTree("empty network".into()))?;
        self.contract_subtree(root)
    }

    /// Contraction of the subtree below `id`: legs are the parent bond (if
    /// any) followed by the subtree's open legs in pre-order.
    fn contract_subtree(&self, id: &NodeId) -> Result<DenseTensor> {
        let mut cur = self.tensors[id].clone();
        let off = usize::from(self.topology.parent[id].is_some());
        for c in &self.topology.children[id] {
            let sub = self.contract_subtree(c)?;
            cur = DenseTensor::contract(&cur, &sub, &[off], &[0])?;
        }
        Ok(cur)
    }

    /// Site order of [`completely_contract_tree`](Self::completely_contract_tree).
    pub fn open_leg_order(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        for n in self.topology.pre_order() {
            let nv = self.nvirt(&n);
            for l in nv..self.tensors[&n].degree() {
                out.push((n.clone(), l));
            }
        }
        out
    }

    /// Splits `a` by a QR decomposition with the bond toward `b` on the R
    /// side. `a` keeps its layout with the new bond in place of the old one;
    /// the returned R matrix has legs `(bond to a, bond to b)`.
    pub(crate) fn split_off_bond(&mut self, a: &NodeId, b: &NodeId) -> Result<DenseTensor> {
        let leg = self.neighbour_index(a, b)?;
        let t = &self.tensors[a];
        let q_legs: Vec<usize> = (0..t.degree()).filter(|&l| l != leg).collect();
        let (q, r) = tensor_qr(t, &q_legs, &[leg], SplitMode::Reduced)?;
        let q = move_leg(&q, q.degree() - 1, leg)?;
        self.tensors.insert(a.clone(), q);
        Ok(r)
    }

    /// Contracts a bond matrix with legs `(toward a, toward b)` into the leg
    /// of `b` that points at `a`.
    pub(crate) fn absorb_bond_matrix(&mut self, b: &NodeId, a: &NodeId, m: &DenseTensor) -> Result<()> {
        let leg = self.neighbour_index(b, a)?;
        let t = DenseTensor::contract(m, &self.tensors[b], &[1], &[leg])?;
        let t = move_leg(&t, 0, leg)?;
        self.tensors.insert(b.clone(), t);
        Ok(())
    }

    /// Makes `a` an isometry toward `b` and pushes the remainder into `b`.
    pub(crate) fn qr_toward(&mut self, a: &NodeId, b: &NodeId) -> Result<()> {
        let r = self.split_off_bond(a, b)?;
        self.absorb_bond_matrix(b, a, &r)
    }

    /// Brings the network into canonical form around `center`: every other
    /// node becomes an isometry toward the neighbour that is closer to the
    /// centre. Nodes are processed from the furthest inward.
    pub fn canonical_form(&mut self, center: &NodeId) -> Result<()> {
        self.topology.check(center)?;
        let mut order: Vec<(usize, NodeId)> = self
            .topology
            .nodes()
            .filter(|n| *n != center)
            .map(|n| (self.topology.distance(n, center).expect("exists"), n.clone()))
            .collect();
        order.sort_by(|x, y| y.0.cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
        for (_, n) in order {
            let next = self
                .topology
                .next_toward(&n, center)?
                .expect("distinct from centre");
            self.qr_toward(&n, &next)?;
        }
        self.orthogonality_center = Some(center.clone());
        Ok(())
    }

    /// Moves an existing orthogonality centre along the path to `new_center`.
    pub fn move_orthogonalization_center(&mut self, new_center: &NodeId) -> Result<()> {
        let current = self
            .orthogonality_center
            .clone()
            .ok_or(TtnError::NoOrthogonalityCenter)?;
        let path = self.topology.path_between(&current, new_center)?;
        for w in path.windows(2) {
            self.qr_toward(&w[0], &w[1])?;
        }
        self.orthogonality_center = Some(new_center.clone());
        Ok(())
    }

    /// Largest entry-wise deviation from the identity of the Gram matrix of
    /// `id`'s tensor over all legs except the one pointing at `toward`.
    pub fn isometry_defect(&self, id: &NodeId, toward: &NodeId) -> Result<f64> {
        let leg = self.neighbour_index(id, toward)?;
        let t = &self.tensors[id];
        let legs: Vec<usize> = (0..t.degree()).filter(|&l| l != leg).collect();
        let g = DenseTensor::contract(&t.conj(), t, &legs, &legs)?;
        Ok(g.max_abs_diff(&DenseTensor::identity(t.dim(leg))))
    }

    /// Largest isometry defect over all non-centre nodes, measured toward the
    /// given centre.
    pub fn canonical_defect(&self, center: &NodeId) -> Result<f64> {
        let mut worst = 0.0f64;
        for n in self.topology.nodes() {
            if n == center {
                continue;
            }
            let next = self.topology.next_toward(n, center)?.expect("distinct");
            worst = worst.max(self.isometry_defect(n, &next)?);
        }
        Ok(worst)
    }

    /// Whether every non-centre node is an isometry toward the recorded
    /// orthogonality centre, within `tol`.
    pub fn is_canonical(&self, tol: f64) -> Result<bool> {
        match &self.orthogonality_center {
            Some(c) => Ok(self.canonical_defect(c)? <= tol),
            None => Ok(false),
        }
    }

    /// Largest bond dimension each edge can meaningfully carry: the smaller
    /// of the products of open dimensions on its two sides.
    pub fn maximal_bond_dims(&self) -> Result<IndexMap<(NodeId, NodeId), usize>> {
        let mut out = IndexMap::new();
        for (p, c) in self.topology.edges() {
            let side = |origin: &NodeId| -> Result<usize> {
                let nodes = self.topology.subtree_nodes(origin, (&p, &c))?;
                let mut prod = 1usize;
                for n in nodes {
                    for d in self.open_dims(&n)? {
                        prod = prod.saturating_mul(d);
                    }
                }
                Ok(prod)
            };
            out.insert((p.clone(), c.clone()), side(&p)?.min(side(&c)?));
        }
        Ok(out)
    }

    /// Enlarges every bond to `target`, clamped to the largest meaningful
    /// dimension of the edge, by padding with zeros. The represented tensor
    /// is unchanged. A canonical form present before is re-established.
    pub fn pad_bond_dimensions(&mut self, target: usize) -> Result<()> {
        let maxima = self.maximal_bond_dims()?;
        let targets: IndexMap<(NodeId, NodeId), usize> = maxima
            .into_iter()
            .map(|(e, m)| {
                let cur = self.bond_dim(&e.0, &e.1).expect("edge");
                (e, target.min(m).max(cur))
            })
            .collect();
        self.pad_bonds_to(&targets)
    }

    /// Pads the given `(parent, child)` edges with zeros to the requested
    /// dimensions.
    pub fn pad_bonds_to(&mut self, targets: &IndexMap<(NodeId, NodeId), usize>) -> Result<()> {
        for ((p, c), &d) in targets {
            let cur = self.bond_dim(p, c)?;
            if d < cur {
                return Err(TtnError::Incompatible(format!(
                    "cannot pad bond ({p}, {c}) from {cur} down to {d}"
                )));
            }
            if d == cur {
                continue;
            }
            let lp = self.neighbour_index(p, c)?;
            let padded = pad_leg(&self.tensors[p], lp, d);
            self.tensors.insert(p.clone(), padded);
            let padded = pad_leg(&self.tensors[c], 0, d);
            self.tensors.insert(c.clone(), padded);
        }
        if let Some(c) = self.orthogonality_center.clone() {
            self.canonical_form(&c)?;
        }
        Ok(())
    }

    /// A network on `topology` with complex-normal random tensors.
    pub fn random(
        topology: &TreeTopology,
        open_dims: impl Fn(&NodeId) -> Vec<usize>,
        bond_dim: impl Fn(&NodeId, &NodeId) -> usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(topology, open_dims, bond_dim, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(
        topology: &TreeTopology,
        open_dims: impl Fn(&NodeId) -> Vec<usize>,
        bond_dim: impl Fn(&NodeId, &NodeId) -> usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::from_fn(topology, |n, shape| {
            let _ = n;
            Ok(DenseTensor::random_with(shape, rng))
        }, open_dims, bond_dim)
    }

    /// Builds a network by calling `make(node, shape)` for each node, where
    /// `shape` already follows the leg layout.
    pub fn from_fn(
        topology: &TreeTopology,
        mut make: impl FnMut(&NodeId, &[usize]) -> Result<DenseTensor>,
        open_dims: impl Fn(&NodeId) -> Vec<usize>,
        bond_dim: impl Fn(&NodeId, &NodeId) -> usize,
    ) -> Result<Self> {
        let mut tensors = IndexMap::new();
        for n in topology.nodes() {
            let mut shape = Vec::new();
            if let Some(p) = topology.parent(n)? {
                shape.push(bond_dim(p, n));
            }
            for c in topology.children(n)? {
                shape.push(bond_dim(n, c));
            }
            shape.extend(open_dims(n));
            let t = make(n, &shape)?;
            if t.shape() != shape.as_slice() {
                return Err(TtnError::Incompatible(format!(
                    "tensor for `{n}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            tensors.insert(n.clone(), t);
        }
        Ok(Self {
            topology: topology.clone(),
            tensors,
            orthogonality_center: None,
        })
    }

    /// Assembles a network from a topology and tensors already in the leg
    /// layout.
    pub fn from_parts(topology: TreeTopology, tensors: IndexMap<NodeId, DenseTensor>) -> Result<Self> {
        if tensors.len() != topology.len() || topology.nodes().any(|n| !tensors.contains_key(n)) {
            return Err(TtnError::Incompatible(
                "tensor map does not match the topology".into(),
            ));
        }
        let tensors = topology
            .nodes()
            .map(|n| (n.clone(), tensors[n].clone()))
            .collect();
        let t = Self {
            topology,
            tensors,
            orthogonality_center: None,
        };
        for n in t.topology.nodes() {
            if t.tensors[n].degree() < t.nvirt(n) {
                return Err(TtnError::Incompatible(format!(
                    "tensor for `{n}` has too few legs"
                )));
            }
        }
        t.check_consistency()?;
        Ok(t)
    }

    /// Multiplies the tensor at `id` (or the root if `None`) by `factor`.
    pub fn scale(&mut self, factor: C64, id: Option<&NodeId>) -> Result<()> {
        let target = match id {
            Some(n) => n.clone(),
            None => self
                .orthogonality_center
                .clone()
                .or_else(|| self.topology.root().cloned())
                .ok_or_else(|| TtnError::InvalidTree("empty network".into()))?,
        };
        let t = self.tensor(&target)?.scale(factor);
        self.tensors.insert(target, t);
        Ok(())
    }
}

/// Zero-pads leg `leg` of `t` to dimension `d`.
pub(crate) fn pad_leg(t: &DenseTensor, leg: usize, d: usize) -> DenseTensor {
    let mut shape = t.shape().to_vec();
    let old = shape[leg];
    shape[leg] = d;
    DenseTensor::from_fn(&shape, |idx| {
        if idx[leg] < old {
            t.get(idx)
        } else {
            crate::tensor::ZERO
        }
    })
}
