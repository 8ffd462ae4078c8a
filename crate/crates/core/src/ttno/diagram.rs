//! State diagrams: labelled hypergraphs that describe a sum of tensor
//! products on a tree. Each tree node owns a set of hyperedges (an operator
//! label and a coefficient), each tree edge owns a set of vertices, and every
//! hyperedge attaches to exactly one vertex on each incident edge. A term of
//! the sum is a choice of one hyperedge per node such that neighbouring
//! choices share their vertex.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::error::{Result, TtnError};
use crate::operators::{identity_symbol, Hamiltonian, LocalOperator, SiteDims, TensorProduct};
use crate::tensor::{C64, ONE, ZERO};
use crate::tree::{NodeId, TreeTopology};

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperedge {
    pub label: String,
    pub coeff: C64,
    /// Vertex index on the edge to each neighbouring node.
    pub vertices: IndexMap<NodeId, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateDiagram {
    tree: TreeTopology,
    hyperedges: IndexMap<NodeId, Vec<Hyperedge>>,
    /// Vertex count per edge, keyed by the child end of the edge.
    vertex_counts: IndexMap<NodeId, usize>,
}

type Labels = BTreeMap<NodeId, String>;

/// One fully expanded term: a coefficient and a label per node.
pub type LabelledTerm = (C64, Labels);

impl StateDiagram {
    pub fn tree(&self) -> &TreeTopology {
        &self.tree
    }

    pub fn hyperedges(&self, node: &NodeId) -> Result<&[Hyperedge]> {
        self.hyperedges
            .get(node)
            .map(|v| v.as_slice())
            .ok_or_else(|| TtnError::UnknownNode(node.clone()))
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.values().map(|v| v.len()).sum()
    }

    /// Whether the diagram represents the zero operator.
    pub fn is_empty(&self) -> bool {
        self.num_hyperedges() == 0
    }

    /// Number of vertices on each `(parent, child)` edge in pre-order.
    pub fn vertex_counts(&self) -> IndexMap<(NodeId, NodeId), usize> {
        self.tree
            .edges()
            .into_iter()
            .map(|(p, c)| {
                let n = self.vertex_counts.get(&c).copied().unwrap_or(0);
                ((p, c), n)
            })
            .collect()
    }

    pub fn vertex_count(&self, a: &NodeId, b: &NodeId) -> Result<usize> {
        let child = if self.tree.parent(b)? == Some(a) {
            b
        } else if self.tree.parent(a)? == Some(b) {
            a
        } else {
            return Err(TtnError::NotAdjacent(a.clone(), b.clone()));
        };
        Ok(self.vertex_counts.get(child).copied().unwrap_or(0))
    }

    /// The diagram of one weighted product: one hyperedge per node, one
    /// vertex per edge. Nodes without a factor carry the identity label. The
    /// coefficient sits on the hyperedge of the lexicographically smallest
    /// node.
    pub fn single_term(coeff: C64, tp: &TensorProduct, tree: &TreeTopology, dims: &SiteDims) -> Result<Self> {
        let labels = term_labels(tp, tree, dims)?;
        let smallest = tree
            .nodes()
            .min()
            .ok_or_else(|| TtnError::InvalidTree("empty tree".into()))?
            .clone();
        let mut hyperedges = IndexMap::new();
        for n in tree.nodes() {
            let vertices = tree
                .neighbours(n)?
                .into_iter()
                .map(|m| (m, 0usize))
                .collect();
            let c = if *n == smallest { coeff } else { ONE };
            hyperedges.insert(
                n.clone(),
                vec![Hyperedge {
                    label: labels[n].clone(),
                    coeff: c,
                    vertices,
                }],
            );
        }
        let vertex_counts = tree.edges().into_iter().map(|(_, c)| (c, 1)).collect();
        Ok(Self {
            tree: tree.clone(),
            hyperedges,
            vertex_counts,
        })
    }

    /// Compressed diagram of a whole Hamiltonian.
    pub fn from_hamiltonian(h: &Hamiltonian, tree: &TreeTopology, dims: &SiteDims) -> Result<Self> {
        let terms = h
            .terms
            .iter()
            .map(|(c, tp)| Ok((*c, term_labels(tp, tree, dims)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(compress(tree, terms))
    }

    /// Joins several diagrams on the same tree and removes redundant
    /// vertices.
    pub fn combine_and_compress(diagrams: &[StateDiagram]) -> Result<Self> {
        let first = diagrams
            .first()
            .ok_or_else(|| TtnError::Operator("no diagrams to combine".into()))?;
        let mut terms = Vec::new();
        for d in diagrams {
            if d.tree.undirected_edges() != first.tree.undirected_edges()
                || d.tree.root() != first.tree.root()
            {
                return Err(TtnError::Incompatible(
                    "state diagrams live on different trees".into(),
                ));
            }
            terms.extend(d.expand_terms());
        }
        Ok(compress(&first.tree, terms))
    }

    /// Enumerates every consistent hyperedge choice.
    pub fn expand_terms(&self) -> Vec<LabelledTerm> {
        struct Partial {
            coeff: C64,
            labels: Labels,
            required: IndexMap<NodeId, usize>,
        }
        let mut partials = vec![Partial {
            coeff: ONE,
            labels: Labels::new(),
            required: IndexMap::new(),
        }];
        for n in self.tree.pre_order() {
            let parent = self.tree.parent(&n).expect("exists").cloned();
            let children = self.tree.children(&n).expect("exists").to_vec();
            let mut next = Vec::new();
            for p in &partials {
                for h in &self.hyperedges[&n] {
                    if let Some(par) = &parent {
                        if h.vertices.get(par) != p.required.get(&n) {
                            continue;
                        }
                    }
                    let mut labels = p.labels.clone();
                    labels.insert(n.clone(), h.label.clone());
                    let mut required = p.required.clone();
                    for c in &children {
                        required.insert(c.clone(), h.vertices[c]);
                    }
                    next.push(Partial {
                        coeff: p.coeff * h.coeff,
                        labels,
                        required,
                    });
                }
            }
            partials = next;
        }
        partials.into_iter().map(|p| (p.coeff, p.labels)).collect()
    }
}

fn term_labels(tp: &TensorProduct, tree: &TreeTopology, dims: &SiteDims) -> Result<Labels> {
    let mut labels = Labels::new();
    for (n, op) in tp.iter() {
        if !tree.contains(n) {
            return Err(TtnError::UnknownNode(n.clone()));
        }
        match op {
            LocalOperator::Symbol(s) => {
                labels.insert(n.clone(), s.clone());
            }
            LocalOperator::Matrix(_) => {
                return Err(TtnError::Operator(format!(
                    "factor on `{n}` is an unnamed matrix; state diagrams need symbolic factors"
                )))
            }
        }
    }
    for n in tree.nodes() {
        if !labels.contains_key(n) {
            let d = dims
                .get(n)
                .ok_or_else(|| TtnError::Operator(format!("no physical dimension given for `{n}`")))?;
            labels.insert(n.clone(), identity_symbol(*d));
        }
    }
    Ok(labels)
}

/// A partially compressed term: labels of nodes not yet absorbed and the
/// vertex chosen on every processed edge (keyed by the edge's child end).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct TermKey {
    labels: Vec<(NodeId, String)>,
    bonds: Vec<(NodeId, usize)>,
}

fn merge_terms(terms: impl IntoIterator<Item = (C64, TermKey)>) -> Vec<(C64, TermKey)> {
    let mut merged: IndexMap<TermKey, C64> = IndexMap::new();
    for (c, k) in terms {
        *merged.entry(k).or_insert(ZERO) += c;
    }
    merged
        .into_iter()
        .filter(|(_, c)| *c != ZERO)
        .map(|(k, c)| (c, k))
        .collect()
}

/// Builds a compressed diagram edge by edge, from the leaves to the root.
///
/// For the edge above node `c`, every term splits into a part below the edge
/// (the label of `c` and the vertices on `c`'s child edges) and a part above
/// it. Distinct below-parts and above-parts form a bipartite graph with one
/// edge per grouped term. A minimum vertex cover of that graph gives the
/// smallest set of edge vertices through which every term can be routed: a
/// covered below-part becomes its own vertex, a covered above-part becomes
/// one vertex that sums all below-parts routed to it.
fn compress(tree: &TreeTopology, terms: Vec<LabelledTerm>) -> StateDiagram {
    let mut work = merge_terms(terms.into_iter().map(|(c, labels)| {
        (
            c,
            TermKey {
                labels: labels.into_iter().collect(),
                bonds: Vec::new(),
            },
        )
    }));
    let mut hyperedges: IndexMap<NodeId, Vec<Hyperedge>> =
        tree.nodes().map(|n| (n.clone(), Vec::new())).collect();
    let mut vertex_counts: IndexMap<NodeId, usize> = IndexMap::new();
    if work.is_empty() {
        return StateDiagram {
            tree: tree.clone(),
            hyperedges,
            vertex_counts: tree.edges().into_iter().map(|(_, c)| (c, 0)).collect(),
        };
    }

    for c in tree.post_order() {
        let Some(parent) = tree.parent(&c).expect("exists").cloned() else {
            continue;
        };
        let kids = tree.children(&c).expect("exists").to_vec();

        type Below = (String, Vec<usize>);
        let mut below_idx: IndexMap<Below, ()> = IndexMap::new();
        let mut above_idx: IndexMap<TermKey, ()> = IndexMap::new();
        let mut pairs: IndexMap<(usize, usize), C64> = IndexMap::new();
        for (coeff, key) in &work {
            let label = key
                .labels
                .iter()
                .find(|(n, _)| *n == c)
                .map(|(_, l)| l.clone())
                .expect("unabsorbed node has a label");
            let kid_vertices: Vec<usize> = kids
                .iter()
                .map(|k| {
                    key.bonds
                        .iter()
                        .find(|(n, _)| n == k)
                        .map(|(_, v)| *v)
                        .expect("child edge processed")
                })
                .collect();
            let above = TermKey {
                labels: key.labels.iter().filter(|(n, _)| *n != c).cloned().collect(),
                bonds: key
                    .bonds
                    .iter()
                    .filter(|(n, _)| !kids.contains(n))
                    .cloned()
                    .collect(),
            };
            let (bi, _) = below_idx.insert_full((label, kid_vertices), ());
            let (ai, _) = above_idx.insert_full(above, ());
            *pairs.entry((ai, bi)).or_insert(ZERO) += *coeff;
        }
        pairs.retain(|_, v| *v != ZERO);

        let n_above = above_idx.len();
        let n_below = below_idx.len();
        let mut adj = vec![Vec::new(); n_below];
        for &(ai, bi) in pairs.keys() {
            adj[bi].push(ai);
        }
        let (cover_below, cover_above) = min_vertex_cover(n_below, n_above, &adj);

        let mut next_vertex = 0usize;
        let mut below_vertex: Vec<Option<usize>> = vec![None; n_below];
        let mut above_vertex: Vec<Option<usize>> = vec![None; n_above];
        let mut new_terms = Vec::new();
        let below_keys: Vec<&Below> = below_idx.keys().collect();
        let above_keys: Vec<&TermKey> = above_idx.keys().collect();
        let edge_hyperedges = hyperedges.get_mut(&c).expect("exists");
        let make_vertices = |kid_vertices: &[usize], v: usize| -> IndexMap<NodeId, usize> {
            let mut m = IndexMap::new();
            m.insert(parent.clone(), v);
            for (k, &kv) in kids.iter().zip(kid_vertices) {
                m.insert(k.clone(), kv);
            }
            m
        };
        for (&(ai, bi), &coeff) in &pairs {
            let with_bond = |v: usize| {
                let mut key = above_keys[ai].clone();
                key.bonds.push((c.clone(), v));
                key.bonds.sort();
                key
            };
            if cover_below[bi] {
                let v = *below_vertex[bi].get_or_insert_with(|| {
                    let v = next_vertex;
                    next_vertex += 1;
                    let (label, kv) = below_keys[bi];
                    edge_hyperedges.push(Hyperedge {
                        label: label.clone(),
                        coeff: ONE,
                        vertices: make_vertices(kv, v),
                    });
                    v
                });
                new_terms.push((coeff, with_bond(v)));
            } else {
                debug_assert!(cover_above[ai]);
                let v = match above_vertex[ai] {
                    Some(v) => v,
                    None => {
                        let v = next_vertex;
                        next_vertex += 1;
                        above_vertex[ai] = Some(v);
                        new_terms.push((ONE, with_bond(v)));
                        v
                    }
                };
                let (label, kv) = below_keys[bi];
                edge_hyperedges.push(Hyperedge {
                    label: label.clone(),
                    coeff,
                    vertices: make_vertices(kv, v),
                });
            }
        }
        vertex_counts.insert(c.clone(), next_vertex);
        work = merge_terms(new_terms);
    }

    let root = tree.root().expect("non-empty").clone();
    let kids = tree.children(&root).expect("exists").to_vec();
    let mut root_edges: IndexMap<(String, Vec<usize>), C64> = IndexMap::new();
    for (coeff, key) in &work {
        debug_assert_eq!(key.labels.len(), 1);
        let label = key.labels[0].1.clone();
        let kv: Vec<usize> = kids
            .iter()
            .map(|k| {
                key.bonds
                    .iter()
                    .find(|(n, _)| n == k)
                    .map(|(_, v)| *v)
                    .expect("child edge processed")
            })
            .collect();
        *root_edges.entry((label, kv)).or_insert(ZERO) += *coeff;
    }
    let list = hyperedges.get_mut(&root).expect("exists");
    for ((label, kv), coeff) in root_edges {
        if coeff == ZERO {
            continue;
        }
        list.push(Hyperedge {
            label,
            coeff,
            vertices: kids.iter().cloned().zip(kv).collect(),
        });
    }
    StateDiagram {
        tree: tree.clone(),
        hyperedges,
        vertex_counts,
    }
}

/// Minimum vertex cover of a bipartite graph given as adjacency lists from
/// left to right vertices (maximum matching plus König's construction).
pub(crate) fn min_vertex_cover(n_left: usize, n_right: usize, adj: &[Vec<usize>]) -> (Vec<bool>, Vec<bool>) {
    let mut match_left: Vec<Option<usize>> = vec![None; n_left];
    let mut match_right: Vec<Option<usize>> = vec![None; n_right];

    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        match_left: &mut [Option<usize>],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let free = match match_right[v] {
                None => true,
                Some(w) => augment(w, adj, seen, match_left, match_right),
            };
            if free {
                match_left[u] = Some(v);
                match_right[v] = Some(u);
                return true;
            }
        }
        false
    }

    for u in 0..n_left {
        let mut seen = vec![false; n_right];
        augment(u, adj, &mut seen, &mut match_left, &mut match_right);
    }

    // alternating search from unmatched left vertices
    let mut visited_left = vec![false; n_left];
    let mut visited_right = vec![false; n_right];
    let mut stack: Vec<usize> = (0..n_left).filter(|&u| match_left[u].is_none()).collect();
    for &u in &stack {
        visited_left[u] = true;
    }
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if Some(v) == match_left[u] || visited_right[v] {
                continue;
            }
            visited_right[v] = true;
            if let Some(w) = match_right[v] {
                if !visited_left[w] {
                    visited_left[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    let cover_left = visited_left.iter().map(|v| !v).collect();
    (cover_left, visited_right)
}
