//! Undirected simple graphs, edge orientations and small structural
//! measurements (degrees, neighborhood independence).
//!
//! Nodes are dense integers `0..n`. Adjacency lists are kept sorted so that
//! all downstream iteration is deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier, always in `0..graph.n()`.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {0} out of range (n = {1})")]
    NodeOutOfRange(NodeId, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("parallel edge ({0}, {1})")]
    ParallelEdge(NodeId, NodeId),
    #[error("edge ({0}, {1}) oriented more than once")]
    DuplicateDirection(NodeId, NodeId),
    #[error("edge ({0}, {1}) of the graph is missing from the orientation")]
    MissingDirection(NodeId, NodeId),
    #[error("oriented edge ({0}, {1}) does not exist in the graph")]
    UnknownEdge(NodeId, NodeId),
    #[error("max degree {0} exceeds the exhaustive-search guard {1}")]
    TooLarge(usize, usize),
}

/// An undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<NodeId>>,
    m: usize,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Rejects self-loops,
    /// parallel edges (in either endpoint order) and out-of-range nodes.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n {
                return Err(GraphError::NodeOutOfRange(u, n));
            }
            if v >= n {
                return Err(GraphError::NodeOutOfRange(v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for (u, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                let d = list.windows(2).find(|w| w[0] == w[1]).unwrap()[0];
                return Err(GraphError::ParallelEdge(u, d));
            }
        }
        Ok(Graph {
            n,
            adj,
            m: edges.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn max_degree_raw(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `Δ(G)`: the maximum of 2 and the maximum degree.
    pub fn delta(&self) -> usize {
        self.max_degree_raw().max(2)
    }

    /// Undirected edges `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.m);
        for u in 0..self.n {
            for &v in &self.adj[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Induced subgraph on `nodes` (need not be sorted; duplicates rejected by
    /// construction). Returns the subgraph together with the map from new ids
    /// back to the original ids.
    pub fn induced(&self, nodes: &[NodeId]) -> (Graph, Vec<NodeId>) {
        let mut to_orig: Vec<NodeId> = nodes.to_vec();
        to_orig.sort_unstable();
        to_orig.dedup();
        let mut to_new = vec![usize::MAX; self.n];
        for (new, &orig) in to_orig.iter().enumerate() {
            to_new[orig] = new;
        }
        let mut edges = Vec::new();
        for (new_u, &orig_u) in to_orig.iter().enumerate() {
            for &orig_v in &self.adj[orig_u] {
                let new_v = to_new[orig_v];
                if new_v != usize::MAX && new_u < new_v {
                    edges.push((new_u, new_v));
                }
            }
        }
        let g = Graph::from_edges(to_orig.len(), &edges).expect("induced subgraph is simple");
        (g, to_orig)
    }

    /// Subgraph on the same node set keeping only the edges with
    /// `keep(u, v)` true (called once per edge with `u < v`).
    pub fn edge_filtered(&self, mut keep: impl FnMut(NodeId, NodeId) -> bool) -> Graph {
        let edges: Vec<(NodeId, NodeId)> =
            self.edges().into_iter().filter(|&(u, v)| keep(u, v)).collect();
        Graph::from_edges(self.n, &edges).expect("filtered subgraph is simple")
    }
}

/// A direction for every edge of a [`Graph`].
///
/// `β_v` follows the convention of being at least 1 even for nodes with no
/// outgoing edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orientation {
    out: Vec<Vec<NodeId>>,
}

impl Orientation {
    /// Builds an orientation from directed edges `(from, to)`. Every edge of
    /// `graph` must appear exactly once (in one of the two directions).
    pub fn from_directed_edges(
        graph: &Graph,
        directed: &[(NodeId, NodeId)],
    ) -> Result<Self, GraphError> {
        let n = graph.n();
        let mut out = vec![Vec::new(); n];
        let mut seen = std::collections::BTreeSet::new();
        for &(from, to) in directed {
            if from >= n {
                return Err(GraphError::NodeOutOfRange(from, n));
            }
            if to >= n {
                return Err(GraphError::NodeOutOfRange(to, n));
            }
            if !graph.has_edge(from, to) {
                return Err(GraphError::UnknownEdge(from, to));
            }
            let key = (from.min(to), from.max(to));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateDirection(from, to));
            }
            out[from].push(to);
        }
        for (u, v) in graph.edges() {
            if !seen.contains(&(u, v)) {
                return Err(GraphError::MissingDirection(u, v));
            }
        }
        for list in &mut out {
            list.sort_unstable();
        }
        Ok(Orientation { out })
    }

    /// Orients every edge by a total order on nodes: the edge `{u, v}` points
    /// from the larger `rank` to the smaller, so "down" the order.
    pub fn from_ranks(graph: &Graph, mut rank: impl FnMut(NodeId) -> u64) -> Self {
        let mut out = vec![Vec::new(); graph.n()];
        for (u, v) in graph.edges() {
            // Ties broken by node id so the result is always well defined.
            let (ru, rv) = (rank(u), rank(v));
            if (ru, u) > (rv, v) {
                out[u].push(v);
            } else {
                out[v].push(u);
            }
        }
        for list in &mut out {
            list.sort_unstable();
        }
        Orientation { out }
    }

    /// The symmetric view used by undirected runs of the oriented machinery:
    /// every node treats all its neighbors as outneighbors.
    pub fn symmetric(graph: &Graph) -> Self {
        Orientation {
            out: (0..graph.n()).map(|v| graph.neighbors(v).to_vec()).collect(),
        }
    }

    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.out[v]
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.out[v].len()
    }

    /// `β_v = max(1, outdegree)`.
    pub fn beta(&self, v: NodeId) -> usize {
        self.out[v].len().max(1)
    }

    /// `β_G = max_v β_v`.
    pub fn beta_max(&self) -> usize {
        (0..self.out.len()).map(|v| self.beta(v)).max().unwrap_or(1)
    }

    pub fn points_from_to(&self, from: NodeId, to: NodeId) -> bool {
        self.out[from].binary_search(&to).is_ok()
    }

    /// Restriction to a subgraph on the same node set (edges not present in
    /// `graph` are dropped).
    pub fn restricted(&self, graph: &Graph) -> Orientation {
        let mut out = vec![Vec::new(); graph.n()];
        for (v, list) in self.out.iter().enumerate() {
            for &u in list {
                if graph.has_edge(v, u) {
                    out[v].push(u);
                }
            }
        }
        Orientation { out }
    }

    /// Restriction to an induced subgraph given by `to_orig` (new id -> old id).
    pub fn induced(&self, graph_sub: &Graph, to_orig: &[NodeId]) -> Orientation {
        let mut to_new = std::collections::BTreeMap::new();
        for (new, &orig) in to_orig.iter().enumerate() {
            to_new.insert(orig, new);
        }
        let mut out = vec![Vec::new(); graph_sub.n()];
        for (new_v, &orig_v) in to_orig.iter().enumerate() {
            for &orig_u in &self.out[orig_v] {
                if let Some(&new_u) = to_new.get(&orig_u) {
                    if graph_sub.has_edge(new_v, new_u) {
                        out[new_v].push(new_u);
                    }
                }
            }
        }
        for list in &mut out {
            list.sort_unstable();
        }
        Orientation { out }
    }

    /// Directed edge list `(from, to)`.
    pub fn directed_edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (v, list) in self.out.iter().enumerate() {
            for &u in list {
                out.push((v, u));
            }
        }
        out
    }
}

/// Degree histogram plus the neighborhood independence `θ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStats {
    pub theta: usize,
    pub degree_histogram: Vec<usize>,
}

/// Guard for the exhaustive neighborhood-independence search.
pub const THETA_DEGREE_GUARD: usize = 25;

/// Neighborhood independence: the maximum independent-set size within any
/// one-hop neighborhood `G[N(v)]`, computed by exhaustive branching.
///
/// Requires the maximum degree to be at most [`THETA_DEGREE_GUARD`].
pub fn neighborhood_independence(graph: &Graph) -> Result<usize, GraphError> {
    let dmax = graph.max_degree_raw();
    if dmax > THETA_DEGREE_GUARD {
        return Err(GraphError::TooLarge(dmax, THETA_DEGREE_GUARD));
    }
    let mut theta = 0usize;
    for v in 0..graph.n() {
        let nbrs = graph.neighbors(v);
        let k = nbrs.len();
        if k <= theta {
            continue; // cannot beat the current maximum
        }
        // adjacency masks inside G[N(v)]
        let mut mask = vec![0u32; k];
        for (i, &a) in nbrs.iter().enumerate() {
            for (j, &b) in nbrs.iter().enumerate() {
                if i != j && graph.has_edge(a, b) {
                    mask[i] |= 1 << j;
                }
            }
        }
        let all = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
        theta = theta.max(max_independent_set(&mask, all));
    }
    Ok(theta)
}

/// Max independent set of the graph on `candidates` given adjacency masks,
/// by branching on a highest-degree vertex.
fn max_independent_set(mask: &[u32], candidates: u32) -> usize {
    if candidates == 0 {
        return 0;
    }
    // pick the candidate with the most candidate-neighbors
    let mut best_v = usize::MAX;
    let mut best_deg = 0usize;
    let mut bits = candidates;
    while bits != 0 {
        let v = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        let deg = (mask[v] & candidates).count_ones() as usize;
        if best_v == usize::MAX || deg > best_deg {
            best_v = v;
            best_deg = deg;
        }
    }
    if best_deg == 0 {
        // remaining candidates are pairwise non-adjacent
        return candidates.count_ones() as usize;
    }
    let v = best_v;
    // either take v (dropping its neighbors) or leave it out
    let with_v = 1 + max_independent_set(mask, candidates & !mask[v] & !(1 << v));
    let without_v = max_independent_set(mask, candidates & !(1 << v));
    with_v.max(without_v)
}

/// Degree histogram and `θ` in one record.
pub fn graph_stats(graph: &Graph) -> Result<GraphStats, GraphError> {
    let mut hist = vec![0usize; graph.max_degree_raw() + 1];
    for v in 0..graph.n() {
        hist[graph.degree(v)] += 1;
    }
    Ok(GraphStats {
        theta: neighborhood_independence(graph)?,
        degree_histogram: hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique(n: usize) -> Graph {
        let mut e = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                e.push((u, v));
            }
        }
        Graph::from_edges(n, &e).unwrap()
    }

    #[test]
    fn rejects_self_loops_and_parallel_edges() {
        assert_eq!(
            Graph::from_edges(2, &[(0, 0)]),
            Err(GraphError::SelfLoop(0))
        );
        assert_eq!(
            Graph::from_edges(2, &[(0, 1), (1, 0)]),
            Err(GraphError::ParallelEdge(0, 1))
        );
    }

    #[test]
    fn delta_convention_is_at_least_two() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(g.max_degree_raw(), 1);
        assert_eq!(g.delta(), 2);
    }

    #[test]
    fn orientation_must_cover_every_edge_once() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(Orientation::from_directed_edges(&g, &[(0, 1), (1, 2)]).is_ok());
        assert_eq!(
            Orientation::from_directed_edges(&g, &[(0, 1)]),
            Err(GraphError::MissingDirection(1, 2))
        );
        assert_eq!(
            Orientation::from_directed_edges(&g, &[(0, 1), (1, 0), (1, 2)]),
            Err(GraphError::DuplicateDirection(1, 0))
        );
        assert_eq!(
            Orientation::from_directed_edges(&g, &[(0, 2), (0, 1), (1, 2)]),
            Err(GraphError::UnknownEdge(0, 2))
        );
    }

    #[test]
    fn beta_is_at_least_one_for_every_node() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let o = Orientation::from_directed_edges(&g, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(o.out_degree(2), 0);
        assert_eq!(o.beta(2), 1);
        assert_eq!(o.beta(1), 1);
        assert_eq!(o.beta_max(), 1);
    }

    #[test]
    fn theta_of_clique_is_one() {
        assert_eq!(neighborhood_independence(&clique(5)).unwrap(), 1);
    }

    #[test]
    fn theta_of_star_is_leaf_count() {
        let g = Graph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(neighborhood_independence(&g).unwrap(), 4);
    }

    #[test]
    fn theta_guard_rejects_large_degree() {
        let star: Vec<(usize, usize)> = (1..=26).map(|i| (0, i)).collect();
        let g = Graph::from_edges(27, &star).unwrap();
        assert_eq!(
            neighborhood_independence(&g),
            Err(GraphError::TooLarge(26, THETA_DEGREE_GUARD))
        );
    }

    #[test]
    fn induced_subgraph_remaps_ids() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let (sub, to_orig) = g.induced(&[1, 3, 2]);
        assert_eq!(to_orig, vec![1, 2, 3]);
        assert_eq!(sub.m(), 2); // edges (1,2) and (2,3)
        assert!(sub.has_edge(0, 1));
        assert!(sub.has_edge(1, 2));
        assert!(!sub.has_edge(0, 2));
    }
}
