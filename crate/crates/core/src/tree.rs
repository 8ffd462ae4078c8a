//! Rooted tree topologies with ordered children.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TtnError};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&NodeId> for NodeId {
    fn from(s: &NodeId) -> Self {
        s.clone()
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A rooted tree. Every node has an ordered list of children; the order in
/// which children were added fixes their leg positions downstream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TreeTopology {
    pub(crate) root: Option<NodeId>,
    pub(crate) parent: IndexMap<NodeId, Option<NodeId>>,
    pub(crate) children: IndexMap<NodeId, Vec<NodeId>>,
}

impl TreeTopology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_root(id: impl Into<NodeId>) -> Self {
        let mut t = Self::new();
        t.add_root(id).expect("empty tree accepts a root");
        t
    }

    pub fn add_root(&mut self, id: impl Into<NodeId>) -> Result<()> {
        let id = id.into();
        if self.root.is_some() {
            return Err(TtnError::InvalidTree(format!(
                "cannot add root `{id}`: the tree already has a root"
            )));
        }
        self.root = Some(id.clone());
        self.parent.insert(id.clone(), None);
        self.children.insert(id, Vec::new());
        Ok(())
    }

    pub fn add_child(&mut self, parent: impl Into<NodeId>, child: impl Into<NodeId>) -> Result<()> {
        let parent = parent.into();
        let child = child.into();
        self.check(&parent)?;
        if self.contains(&child) {
            return Err(TtnError::DuplicateNode(child));
        }
        self.children
            .get_mut(&parent)
            .expect("checked")
            .push(child.clone());
        self.parent.insert(child.clone(), Some(parent));
        self.children.insert(child, Vec::new());
        Ok(())
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.parent.contains_key(id)
    }

    pub(crate) fn check(&self, id: &NodeId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(TtnError::UnknownNode(id.clone()))
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> Option<&NodeId> {
        self.root.as_ref()
    }

    /// Node ids in insertion order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.parent.keys()
    }

    pub fn parent(&self, id: &NodeId) -> Result<Option<&NodeId>> {
        self.parent
            .get(id)
            .map(|p| p.as_ref())
            .ok_or_else(|| TtnError::UnknownNode(id.clone()))
    }

    pub fn children(&self, id: &NodeId) -> Result<&[NodeId]> {
        self.children
            .get(id)
            .map(|c| c.as_slice())
            .ok_or_else(|| TtnError::UnknownNode(id.clone()))
    }

    /// Parent (if any) followed by the children in order.
    pub fn neighbours(&self, id: &NodeId) -> Result<Vec<NodeId>> {
        let mut out: Vec<NodeId> = self.parent(id)?.into_iter().cloned().collect();
        out.extend(self.children(id)?.iter().cloned());
        Ok(out)
    }

    pub fn is_leaf(&self, id: &NodeId) -> Result<bool> {
        Ok(self.children(id)?.is_empty())
    }

    /// Nodes without children, in insertion order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.children
            .iter()
            .filter(|(_, c)| c.is_empty())
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn are_adjacent(&self, a: &NodeId, b: &NodeId) -> bool {
        self.parent.get(a).and_then(|p| p.as_ref()) == Some(b)
            || self.parent.get(b).and_then(|p| p.as_ref()) == Some(a)
    }

    /// All `(parent, child)` pairs in pre-order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.pre_order()
            .into_iter()
            .filter_map(|n| {
                self.parent[&n]
                    .as_ref()
                    .map(|p| (p.clone(), n.clone()))
            })
            .collect()
    }

    /// Depth-first pre-order from the root, children in order.
    pub fn pre_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len());
        if let Some(r) = &self.root {
            let mut stack = vec![r.clone()];
            while let Some(n) = stack.pop() {
                for c in self.children[&n].iter().rev() {
                    stack.push(c.clone());
                }
                out.push(n);
            }
        }
        out
    }

    /// Depth-first post-order from the root: every child before its parent.
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len());
        if let Some(r) = &self.root {
            self.post_order_from(r, None, &mut out);
        }
        out
    }

    /// Post-order of the component containing `start` when the edge to
    /// `from` is removed, treating the tree as undirected.
    fn post_order_from(&self, start: &NodeId, from: Option<&NodeId>, out: &mut Vec<NodeId>) {
        let mut stack: Vec<(NodeId, Option<NodeId>, bool)> =
            vec![(start.clone(), from.cloned(), false)];
        while let Some((n, prev, expanded)) = stack.pop() {
            if expanded {
                out.push(n);
                continue;
            }
            stack.push((n.clone(), prev.clone(), true));
            let nbrs = self.neighbours(&n).expect("node exists");
            for m in nbrs.into_iter().rev() {
                if Some(&m) != prev.as_ref() {
                    stack.push((m, Some(n.clone()), false));
                }
            }
        }
    }

    pub fn depth(&self, id: &NodeId) -> Result<usize> {
        Ok(self.ancestors(id)?.len() - 1)
    }

    /// `id`, its parent, ..., the root.
    fn ancestors(&self, id: &NodeId) -> Result<Vec<NodeId>> {
        self.check(id)?;
        let mut out = vec![id.clone()];
        let mut cur = id;
        while let Some(p) = self.parent[cur].as_ref() {
            out.push(p.clone());
            cur = p;
        }
        Ok(out)
    }

    /// The unique simple path from `a` to `b`, both included.
    pub fn path_between(&self, a: &NodeId, b: &NodeId) -> Result<Vec<NodeId>> {
        let up_a = self.ancestors(a)?;
        let up_b = self.ancestors(b)?;
        let on_b: HashSet<&NodeId> = up_b.iter().collect();
        let meet = up_a
            .iter()
            .position(|n| on_b.contains(n))
            .expect("nodes of one tree share the root");
        let lca = &up_a[meet];
        let mut path: Vec<NodeId> = up_a[..=meet].to_vec();
        let pos_b = up_b.iter().position(|n| n == lca).expect("lca is an ancestor");
        path.extend(up_b[..pos_b].iter().rev().cloned());
        Ok(path)
    }

    pub fn distance(&self, a: &NodeId, b: &NodeId) -> Result<usize> {
        Ok(self.path_between(a, b)?.len() - 1)
    }

    /// The neighbour of `from` on the path toward `to`.
    pub fn next_toward(&self, from: &NodeId, to: &NodeId) -> Result<Option<NodeId>> {
        Ok(self.path_between(from, to)?.get(1).cloned())
    }

    /// Nodes reachable from `origin` without crossing `blocked`, which must be
    /// an edge incident to `origin`.
    pub fn subtree_nodes(&self, origin: &NodeId, blocked: (&NodeId, &NodeId)) -> Result<Vec<NodeId>> {
        self.check(origin)?;
        let (x, y) = blocked;
        let other = if x == origin {
            y
        } else if y == origin {
            x
        } else {
            return Err(TtnError::EdgeNotIncident(x.clone(), y.clone(), origin.clone()));
        };
        if !self.are_adjacent(origin, other) {
            return Err(TtnError::EdgeNotIncident(x.clone(), y.clone(), origin.clone()));
        }
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(origin.clone(), other.clone())]);
        while let Some((n, prev)) = queue.pop_front() {
            for m in self.neighbours(&n)? {
                if m != prev {
                    queue.push_back((m, n.clone()));
                }
            }
            out.push(n);
        }
        Ok(out)
    }

    /// Renames a node, keeping all neighbour relations and child positions.
    pub fn replace_node(&mut self, old: &NodeId, new: impl Into<NodeId>) -> Result<()> {
        let new = new.into();
        self.check(old)?;
        if old == &new {
            return Ok(());
        }
        if self.contains(&new) {
            return Err(TtnError::DuplicateNode(new));
        }
        let rename = |n: &mut NodeId| {
            if n == old {
                *n = new.clone();
            }
        };
        let parent: IndexMap<NodeId, Option<NodeId>> = std::mem::take(&mut self.parent)
            .into_iter()
            .map(|(mut k, mut v)| {
                rename(&mut k);
                if let Some(p) = v.as_mut() {
                    rename(p);
                }
                (k, v)
            })
            .collect();
        let children: IndexMap<NodeId, Vec<NodeId>> = std::mem::take(&mut self.children)
            .into_iter()
            .map(|(mut k, mut v)| {
                rename(&mut k);
                v.iter_mut().for_each(rename);
                (k, v)
            })
            .collect();
        self.parent = parent;
        self.children = children;
        if let Some(r) = self.root.as_mut() {
            rename(r);
        }
        Ok(())
    }

    /// The same undirected tree rooted at `new_root`. Former parents become
    /// the last child of the node below them.
    pub fn rerooted(&self, new_root: &NodeId) -> Result<Self> {
        self.check(new_root)?;
        let mut t = Self::with_root(new_root.clone());
        let mut queue = VecDeque::from([(new_root.clone(), None::<NodeId>)]);
        while let Some((n, prev)) = queue.pop_front() {
            let mut order: Vec<NodeId> = self.children[&n].clone();
            if let Some(p) = self.parent[&n].clone() {
                order.push(p);
            }
            for m in order {
                if Some(&m) != prev.as_ref() {
                    t.add_child(n.clone(), m.clone())?;
                    queue.push_back((m, Some(n.clone())));
                }
            }
        }
        Ok(t)
    }

    /// Undirected edge set with each edge as a sorted pair.
    pub fn undirected_edges(&self) -> HashSet<(NodeId, NodeId)> {
        self.edges()
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect()
    }

    /// Node visiting order for one sweep of a one-site update.
    ///
    /// The sweep runs between the two degree-one nodes furthest apart. Ties
    /// pick the lexicographically smallest start, then the largest end among
    /// the nodes at maximal distance from it. Subtrees hanging off the
    /// start-end path are visited completely (children before the node
    /// attaching them) just before the path node they hang from.
    pub fn tdvp_update_path(&self) -> Vec<NodeId> {
        let Some(root) = self.root.clone() else {
            return Vec::new();
        };
        if self.len() == 1 {
            return vec![root];
        }
        let mut ends: Vec<NodeId> = self
            .nodes()
            .filter(|n| self.neighbours(n).expect("exists").len() <= 1)
            .cloned()
            .collect();
        ends.sort();
        let mut best = 0;
        for (i, a) in ends.iter().enumerate() {
            for b in &ends[i + 1..] {
                best = best.max(self.distance(a, b).expect("exists"));
            }
        }
        let start = ends
            .iter()
            .find(|a| {
                ends.iter()
                    .any(|b| self.distance(a, b).expect("exists") == best)
            })
            .expect("at least two ends")
            .clone();
        let end = ends
            .iter()
            .rev()
            .find(|b| *b != &start && self.distance(&start, b).expect("exists") == best)
            .expect("furthest end exists")
            .clone();
        let spine = self.path_between(&start, &end).expect("exists");
        let on_spine: HashSet<&NodeId> = spine.iter().collect();
        let mut order = Vec::with_capacity(self.len());
        for s in &spine {
            for m in self.neighbours(s).expect("exists") {
                if !on_spine.contains(&m) {
                    self.post_order_from(&m, Some(s), &mut order);
                }
            }
            order.push(s.clone());
        }
        order
    }
}

/// A random tree on `n` nodes with ids `n0, n1, ...`: node `k` attaches to a
/// uniformly chosen earlier node.
pub fn random_tree(n: usize, seed: u64) -> TreeTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_tree_with(n, &mut rng)
}

pub fn random_tree_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> TreeTopology {
    let mut t = TreeTopology::new();
    if n == 0 {
        return t;
    }
    t.add_root("n0").expect("fresh");
    for k in 1..n {
        let p = rng.random_range(0..k);
        t.add_child(format!("n{p}"), format!("n{k}")).expect("fresh id");
    }
    t
}
