//! Undirected graph representation with canonical edge indexing.
//!
//! Every unordered node pair is stored once as `(min, max)`, and edge sets are
//! kept sorted lexicographically. That order is the index order for every
//! per-edge vector in the crate (masks, gradients, scores).

pub mod edge_list;

use std::collections::{BTreeMap, VecDeque};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unordered node pair in canonical form (smaller index first).
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(u: usize, v: usize) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Sorted, duplicate-free list of canonical edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeSet(Vec<Edge>);

impl EdgeSet {
    pub fn new() -> Self {
        EdgeSet(Vec::new())
    }

    /// Builds a set from arbitrary pairs, rejecting self-loops.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            edges.push(canonical(u, v));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(EdgeSet(edges))
    }

    /// Wraps a vector that is already sorted and canonical.
    fn from_sorted_unchecked(edges: Vec<Edge>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        EdgeSet(edges)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Edge> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Edge] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Option<Edge> {
        self.0.get(index).copied()
    }

    pub fn contains(&self, edge: Edge) -> bool {
        self.position(edge).is_some()
    }

    /// Canonical index of `edge`, if present.
    pub fn position(&self, edge: Edge) -> Option<usize> {
        let (u, v) = edge;
        self.0.binary_search(&canonical(u, v)).ok()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.0.iter().all(|&e| other.contains(e))
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        EdgeSet::from_sorted_unchecked(out)
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet::from_sorted_unchecked(
            self.0.iter().copied().filter(|&e| other.contains(e)).collect(),
        )
    }

    pub fn difference(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet::from_sorted_unchecked(
            self.0.iter().copied().filter(|&e| !other.contains(e)).collect(),
        )
    }

    pub fn to_vec(&self) -> Vec<Edge> {
        self.0.clone()
    }
}

impl<'a> IntoIterator for &'a EdgeSet {
    type Item = &'a Edge;
    type IntoIter = std::slice::Iter<'a, Edge>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// `|e1 ∪ e2| − |e1 ∩ e2|`.
pub fn symmetric_difference_size(e1: &EdgeSet, e2: &EdgeSet) -> usize {
    let common = e1.intersection(e2).len();
    e1.len() + e2.len() - 2 * common
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    Node(Vec<usize>),
    Graph(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: EdgeSet,
    features: Array2<f64>,
    labels: Labels,
}

impl Graph {
    pub fn new(
        node_count: usize,
        edges: EdgeSet,
        features: Array2<f64>,
        labels: Labels,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if let Some(&(u, v)) = edges.iter().find(|&&(_, v)| v >= node_count) {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) out of range for {node_count} nodes"
            )));
        }
        if features.nrows() != node_count {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {node_count} nodes",
                features.nrows()
            )));
        }
        if let Labels::Node(ref labels) = labels {
            if labels.len() != node_count {
                return Err(Error::DimensionMismatch(format!(
                    "{} node labels for {node_count} nodes",
                    labels.len()
                )));
            }
        }
        Ok(Graph {
            node_count,
            edges,
            features,
            labels,
        })
    }

    /// Graph whose nodes all carry a vector of ones.
    pub fn with_unit_features(
        node_count: usize,
        edges: EdgeSet,
        feature_dim: usize,
        labels: Labels,
    ) -> Result<Self> {
        Graph::new(
            node_count,
            edges,
            Array2::ones((node_count, feature_dim)),
            labels,
        )
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Node(l) => Some(l),
            Labels::Graph(_) => None,
        }
    }

    pub fn graph_label(&self) -> Option<usize> {
        match self.labels {
            Labels::Graph(l) => Some(l),
            Labels::Node(_) => None,
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.contains(canonical(u, v))
    }

    /// Same nodes, features and labels with a different edge set.
    pub fn with_edges(&self, edges: EdgeSet) -> Result<Graph> {
        Graph::new(
            self.node_count,
            edges,
            self.features.clone(),
            self.labels.clone(),
        )
    }

    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.node_count];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

/// Edge additions and deletions applied together.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub additions: EdgeSet,
    pub deletions: EdgeSet,
}

impl Perturbation {
    pub fn new(additions: EdgeSet, deletions: EdgeSet) -> Self {
        Perturbation {
            additions,
            deletions,
        }
    }

    pub fn len(&self) -> usize {
        self.additions.len() + self.deletions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.additions.is_empty() && self.deletions.is_empty()
    }

    /// The perturbation that undoes `self`.
    pub fn inverse(&self) -> Perturbation {
        Perturbation {
            additions: self.deletions.clone(),
            deletions: self.additions.clone(),
        }
    }

    /// Checks the perturbation against `g` and, if given, a protected edge set
    /// that must not be deleted.
    pub fn validate(&self, g: &Graph, protected: Option<&EdgeSet>) -> Result<()> {
        for &(u, v) in &self.additions {
            if v >= g.node_count() {
                return Err(Error::PerturbationConflict(format!(
                    "addition ({u}, {v}) out of range"
                )));
            }
            if g.edges().contains((u, v)) {
                return Err(Error::PerturbationConflict(format!(
                    "addition ({u}, {v}) already present"
                )));
            }
            if self.deletions.contains((u, v)) {
                return Err(Error::PerturbationConflict(format!(
                    "({u}, {v}) both added and deleted"
                )));
            }
        }
        for &(u, v) in &self.deletions {
            if !g.edges().contains((u, v)) {
                return Err(Error::PerturbationConflict(format!(
                    "deletion ({u}, {v}) not present"
                )));
            }
            if protected.is_some_and(|p| p.contains((u, v))) {
                return Err(Error::PerturbationConflict(format!(
                    "deletion ({u}, {v}) touches a protected edge"
                )));
            }
        }
        Ok(())
    }
}

/// Returns a new graph with edges `(E ∪ additions) \ deletions`.
pub fn apply_perturbation(g: &Graph, p: &Perturbation) -> Result<Graph> {
    p.validate(g, None)?;
    let edges = g.edges().union(&p.additions).difference(&p.deletions);
    g.with_edges(edges)
}

/// All distinct non-adjacent node pairs of `g`, optionally limited to
/// `restrict_to`.
pub fn complement_edges(g: &Graph, restrict_to: Option<&EdgeSet>) -> EdgeSet {
    match restrict_to {
        Some(r) => r.difference(g.edges()),
        None => {
            let n = g.node_count();
            let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for u in 0..n {
                for v in (u + 1)..n {
                    if !g.edges().contains((u, v)) {
                        out.push((u, v));
                    }
                }
            }
            EdgeSet::from_sorted_unchecked(out)
        }
    }
}

/// Degrees of all nodes with degree at least `d_min`, with multiplicity.
pub fn degree_multiset(g: &Graph, d_min: u32) -> Vec<u32> {
    g.degrees().into_iter().filter(|&d| d >= d_min).collect()
}

/// Induced neighbourhood of a node together with index maps back to the
/// host graph.
///
/// Local node ids are assigned in increasing global order, so the map
/// preserves canonical edge order in both directions.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: Graph,
    pub center: usize,
    nodes: Vec<usize>,
    local: BTreeMap<usize, usize>,
}

impl Subgraph {
    pub fn global_nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn to_global_node(&self, local: usize) -> usize {
        self.nodes[local]
    }

    pub fn to_local_node(&self, global: usize) -> Option<usize> {
        self.local.get(&global).copied()
    }

    pub fn edge_to_global(&self, (u, v): Edge) -> Edge {
        canonical(self.nodes[u], self.nodes[v])
    }

    pub fn edge_to_local(&self, (u, v): Edge) -> Option<Edge> {
        Some(canonical(self.to_local_node(u)?, self.to_local_node(v)?))
    }

    pub fn edges_to_global(&self, edges: &EdgeSet) -> EdgeSet {
        EdgeSet::from_sorted_unchecked(edges.iter().map(|&e| self.edge_to_global(e)).collect())
    }

    pub fn perturbation_to_global(&self, p: &Perturbation) -> Perturbation {
        Perturbation {
            additions: self.edges_to_global(&p.additions),
            deletions: self.edges_to_global(&p.deletions),
        }
    }
}

/// Induced subgraph on every node within `hops` edges of `center`.
pub fn k_hop_subgraph(g: &Graph, center: usize, hops: usize) -> Result<Subgraph> {
    if center >= g.node_count() {
        return Err(Error::InvalidGraph(format!(
            "center {center} out of range for {} nodes",
            g.node_count()
        )));
    }
    let adj = g.adjacency_lists();
    let mut dist = vec![usize::MAX; g.node_count()];
    dist[center] = 0;
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let nodes: Vec<usize> = (0..g.node_count())
        .filter(|&v| dist[v] != usize::MAX)
        .collect();
    let local: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let edges: Vec<Edge> = g
        .edges()
        .iter()
        .filter_map(|&(u, v)| Some((*local.get(&u)?, *local.get(&v)?)))
        .collect();
    let features = g.features().select(Axis(0), &nodes);
    let labels = match g.labels() {
        Labels::Node(l) => Labels::Node(nodes.iter().map(|&v| l[v]).collect()),
        Labels::Graph(l) => Labels::Graph(*l),
    };
    let graph = Graph::new(
        nodes.len(),
        EdgeSet::from_sorted_unchecked(edges),
        features,
        labels,
    )?;
    Ok(Subgraph {
        graph,
        center: local[&center],
        nodes,
        local,
    })
}
