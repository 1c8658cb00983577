//! Deterministic instance generation: graph families, orientations and
//! palette instances meeting a requested slack target.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::{compute_slack, Color, PaletteInstance, Q};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Random graph: every pair becomes an edge with probability `p`,
    /// subject to the degree cap.
    Gnp { p: f64 },
    /// Circulant regular graph with the given degree.
    Regular { degree: usize },
    /// Line graph of a random base graph (θ ≤ 2).
    LineGraphOfRandomGraph { base_n: usize },
    /// Line graph of a random rank-`r` hypergraph (θ ≤ r).
    LineGraphOfHypergraph { base_n: usize, rank: usize },
    Path,
    Cycle,
    Clique,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationKind {
    /// Acyclic orientation along random node ranks.
    Random,
    /// Toward the smaller node id.
    ByIds,
    /// Along a degeneracy order (outdegrees bounded by the degeneracy).
    Degeneracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectDist {
    Zero,
    /// Uniform in `0..=max`.
    Uniform { max: u32 },
    /// Geometric-ish: defect `k` with probability `2^-(k+1)`, capped.
    Geometric { cap: u32 },
    /// Mostly zero with occasional high defects.
    MixedZeroHigh { high: u32 },
}

/// What the generated instance must satisfy on every node, strictly (or as
/// printed for the square-root form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum SlackTarget {
    /// `Σ(d_v(x)+1) > S·deg(v)`.
    Degree { s: Q },
    /// `Σ(d_v(x)+1) > (1+ε)·max{p, |L_v|/p}·β_v`.
    TwoSweep { p: u32, eps: Q },
    /// `Σ(d_v(x)+1) ≥ factor·√C·β_v`.
    SqrtSpace { factor: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePolicy {
    pub color_space: u64,
    pub slack: SlackTarget,
    pub defects: DefectDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GraphKind,
    pub n: usize,
    /// Degree cap for the random families.
    pub max_degree: Option<usize>,
    pub seed: u64,
    pub orientation: OrientationKind,
    pub policy: InstancePolicy,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub graph: Graph,
    pub orientation: Orientation,
    pub instance: PaletteInstance,
    /// Structural θ bound for the line-graph families (2 or the rank).
    pub theta_bound: Option<usize>,
    pub digest: u64,
}

// ---------------------------------------------------------------------------
// graph families
// ---------------------------------------------------------------------------

/// Random graph on `n` nodes: candidate pairs in random order, kept with
/// probability `p` while both endpoints stay under the degree cap.
pub fn gnp_graph(n: usize, p: f64, max_degree: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut pairs: Vec<(NodeId, NodeId)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .collect();
    pairs.shuffle(rng);
    let mut deg = vec![0usize; n];
    let mut edges = Vec::new();
    for (u, v) in pairs {
        if deg[u] < max_degree && deg[v] < max_degree && rng.gen_bool(p) {
            deg[u] += 1;
            deg[v] += 1;
            edges.push((u, v));
        }
    }
    Graph::from_edges(n, &edges).expect("gnp emits a simple graph")
}

fn circulant(n: usize, degree: usize) -> Result<Graph, GenError> {
    if degree >= n || (n * degree) % 2 != 0 {
        return Err(GenError::InvalidSpec(format!(
            "no {degree}-regular graph on {n} nodes"
        )));
    }
    let mut edges = Vec::new();
    for shift in 1..=degree / 2 {
        for v in 0..n {
            edges.push((v, (v + shift) % n));
        }
    }
    if degree % 2 == 1 {
        for v in 0..n / 2 {
            edges.push((v, v + n / 2));
        }
    }
    edges.retain(|&(u, v)| u != v);
    edges.iter_mut().for_each(|e| {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    });
    edges.sort_unstable();
    edges.dedup();
    Graph::from_edges(n, &edges).map_err(|e| GenError::InvalidSpec(e.to_string()))
}

/// Line graph of `base`: one node per base edge, adjacent when the base
/// edges share an endpoint.
pub fn line_graph(base: &Graph) -> Graph {
    let base_edges = base.edges();
    let mut edges = Vec::new();
    for (i, &(a, b)) in base_edges.iter().enumerate() {
        for (j, &(c, d)) in base_edges.iter().enumerate().skip(i + 1) {
            if a == c || a == d || b == c || b == d {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(base_edges.len(), &edges).expect("line graph is simple")
}

/// Line graph of a random rank-`r` hypergraph with `m` hyperedges on
/// `base_n` vertices: hyperedges are random subsets of size `2..=r`,
/// adjacent when they intersect.
pub fn hypergraph_line_graph(
    base_n: usize,
    rank: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Graph {
    let mut hyperedges: Vec<Vec<usize>> = Vec::with_capacity(m);
    for _ in 0..m {
        let size = rng.gen_range(2..=rank.max(2));
        let mut verts: Vec<usize> = (0..base_n).collect();
        verts.shuffle(rng);
        let mut e: Vec<usize> = verts.into_iter().take(size).collect();
        e.sort_unstable();
        hyperedges.push(e);
    }
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if hyperedges[i].iter().any(|v| hyperedges[j].binary_search(v).is_ok()) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(m, &edges).expect("hypergraph line graph is simple")
}

fn degeneracy_ranks(graph: &Graph) -> Vec<u64> {
    let n = graph.n();
    let mut deg: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    let mut removed = vec![false; n];
    let mut rank = vec![0u64; n];
    for step in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (deg[v], v))
            .expect("nodes remain");
        removed[v] = true;
        rank[v] = step as u64;
        for &u in graph.neighbors(v) {
            if !removed[u] {
                deg[u] -= 1;
            }
        }
    }
    rank
}

pub fn build_orientation(graph: &Graph, kind: OrientationKind, rng: &mut ChaCha8Rng) -> Orientation {
    match kind {
        OrientationKind::ByIds => Orientation::from_ranks(graph, |v| v as u64),
        OrientationKind::Random => {
            let ranks: Vec<u64> = (0..graph.n()).map(|_| rng.gen::<u32>() as u64).collect();
            Orientation::from_ranks(graph, |v| ranks[v])
        }
        OrientationKind::Degeneracy => {
            let ranks = degeneracy_ranks(graph);
            Orientation::from_ranks(graph, |v| ranks[v])
        }
    }
}

// ---------------------------------------------------------------------------
// instance construction against a slack target
// ---------------------------------------------------------------------------

fn sample_defect(dist: DefectDist, clamp: u32, rng: &mut ChaCha8Rng) -> u32 {
    let d = match dist {
        DefectDist::Zero => 0,
        DefectDist::Uniform { max } => rng.gen_range(0..=max),
        DefectDist::Geometric { cap } => {
            let mut d = 0;
            while d < cap && rng.gen_bool(0.5) {
                d += 1;
            }
            d
        }
        DefectDist::MixedZeroHigh { high } => {
            if rng.gen_bool(0.25) {
                high
            } else {
                0
            }
        }
    };
    d.min(clamp)
}

fn target_met(
    target: SlackTarget,
    mass: u128,
    list_len: usize,
    deg: usize,
    beta: usize,
    color_space: u64,
) -> bool {
    match target {
        SlackTarget::Degree { s } => {
            deg == 0 && list_len > 0
                || Q::from_integer(mass) > s * Q::from_integer(deg as u128)
        }
        SlackTarget::TwoSweep { p, eps } => {
            let one_plus = Q::from_integer(1) + eps;
            let mass_q = Q::from_integer(mass);
            mass_q > one_plus * Q::from_integer((p as u128) * beta as u128)
                && mass_q * Q::from_integer(p as u128)
                    > one_plus * Q::from_integer(list_len as u128 * beta as u128)
        }
        SlackTarget::SqrtSpace { factor } => {
            mass * mass
                >= (factor as u128)
                    * (factor as u128)
                    * (color_space as u128)
                    * (beta as u128)
                    * (beta as u128)
        }
    }
}

/// Builds per-node lists by drawing colors (in a random order per node) with
/// defects from the distribution until the slack target holds strictly.
pub fn build_instance(
    graph: &Graph,
    orientation: &Orientation,
    policy: &InstancePolicy,
    rng: &mut ChaCha8Rng,
) -> Result<PaletteInstance, GenError> {
    let c = policy.color_space;
    if c == 0 || c > u32::MAX as u64 {
        return Err(GenError::InvalidSpec(format!("color space {c}")));
    }
    let clamp = graph.delta() as u32;
    let mut lists: Vec<Vec<(Color, u32)>> = Vec::with_capacity(graph.n());
    for v in 0..graph.n() {
        let mut order: Vec<Color> = (1..=c as Color).collect();
        order.shuffle(rng);
        let mut list: Vec<(Color, u32)> = Vec::new();
        let mut mass: u128 = 0;
        let mut met = false;
        for x in order {
            if target_met(
                policy.slack,
                mass,
                list.len(),
                graph.degree(v),
                orientation.beta(v),
                c,
            ) && !list.is_empty()
            {
                met = true;
                break;
            }
            let d = sample_defect(policy.defects, clamp, rng);
            mass += d as u128 + 1;
            list.push((x, d));
        }
        if !met
            && !target_met(
                policy.slack,
                mass,
                list.len(),
                graph.degree(v),
                orientation.beta(v),
                c,
            )
        {
            // one repair pass: raise defects to the clamp before giving up
            let len = list.len();
            for entry in &mut list {
                mass += (clamp - entry.1) as u128;
                entry.1 = clamp;
                if target_met(
                    policy.slack,
                    mass,
                    len,
                    graph.degree(v),
                    orientation.beta(v),
                    c,
                ) {
                    met = true;
                    break;
                }
            }
            if !met {
                return Err(GenError::InfeasibleSpec(format!(
                    "node {v}: even {c} colors at defect {clamp} miss the slack target"
                )));
            }
        }
        list.sort_unstable_by_key(|&(x, _)| x);
        lists.push(list);
    }
    PaletteInstance::new(graph, c, lists).map_err(|e| GenError::InvalidSpec(e.to_string()))
}

// ---------------------------------------------------------------------------
// top-level generation
// ---------------------------------------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Stable content digest of a generated triple.
pub fn digest(graph: &Graph, orientation: &Orientation, instance: &PaletteInstance) -> u64 {
    let blob = serde_json::to_vec(&(graph, orientation, instance)).expect("serializable");
    fnv1a(&blob)
}

pub fn build_graph(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<Graph, GenError> {
    let n = spec.n;
    if n == 0 {
        return Err(GenError::InvalidSpec("empty graph".into()));
    }
    let cap = spec.max_degree.unwrap_or(n);
    let graph = match &spec.kind {
        GraphKind::Gnp { p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(GenError::InvalidSpec(format!("p = {p}")));
            }
            gnp_graph(n, *p, cap, rng)
        }
        GraphKind::Regular { degree } => circulant(n, *degree)?,
        GraphKind::LineGraphOfRandomGraph { base_n } => {
            // aim for roughly n base edges, then trim
            let bn = *base_n;
            let denom = (bn * bn.saturating_sub(1) / 2).max(1);
            let p = (2.0 * n as f64 / denom as f64).min(1.0);
            let base = gnp_graph(bn, p.max(0.05), bn, rng);
            let mut base_edges = base.edges();
            base_edges.shuffle(rng);
            base_edges.truncate(n);
            let trimmed = Graph::from_edges(bn, &base_edges).expect("subset of simple");
            line_graph(&trimmed)
        }
        GraphKind::LineGraphOfHypergraph { base_n, rank } => {
            hypergraph_line_graph(*base_n, *rank, n, rng)
        }
        GraphKind::Path => {
            Graph::from_edges(n, &(0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect::<Vec<_>>())
                .expect("path is simple")
        }
        GraphKind::Cycle => {
            if n < 3 {
                return Err(GenError::InvalidSpec("cycle needs n >= 3".into()));
            }
            let mut e: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            e.push((0, n - 1));
            Graph::from_edges(n, &e).expect("cycle is simple")
        }
        GraphKind::Clique => {
            let mut e = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    e.push((u, v));
                }
            }
            Graph::from_edges(n, &e).expect("clique is simple")
        }
        GraphKind::Star => Graph::from_edges(
            n,
            &(1..n).map(|v| (0, v)).collect::<Vec<_>>(),
        )
        .expect("star is simple"),
    };
    Ok(graph)
}

/// Generates graph, orientation and a slack-satisfying instance,
/// deterministic in the seed. The emitted instance is re-checked with
/// [`compute_slack`] (for the degree form) before returning.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let graph = build_graph(spec, &mut rng)?;
    let orientation = build_orientation(&graph, spec.orientation, &mut rng);
    let instance = build_instance(&graph, &orientation, &spec.policy, &mut rng)?;
    if let SlackTarget::Degree { s } = spec.policy.slack {
        if !compute_slack(&graph, &instance, s).strict {
            return Err(GenError::InfeasibleSpec(
                "emitted instance failed its own slack assertion".into(),
            ));
        }
    }
    let theta_bound = match spec.kind {
        GraphKind::LineGraphOfRandomGraph { .. } => Some(2),
        GraphKind::LineGraphOfHypergraph { rank, .. } => Some(rank),
        _ => None,
    };
    let digest = digest(&graph, &orientation, &instance);
    Ok(Generated {
        graph,
        orientation,
        instance,
        theta_bound,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::neighborhood_independence;
    use crate::instance::q as rat;

    fn base_policy() -> InstancePolicy {
        InstancePolicy {
            color_space: 8,
            slack: SlackTarget::Degree { s: rat(1, 1) },
            defects: DefectDist::Zero,
        }
    }

    #[test]
    fn path_with_zero_defects_gets_deg_plus_one_lists() {
        let spec = GeneratorSpec {
            kind: GraphKind::Path,
            n: 3,
            max_degree: None,
            seed: 1,
            orientation: OrientationKind::ByIds,
            policy: InstancePolicy {
                color_space: 3,
                slack: SlackTarget::Degree { s: rat(1, 1) },
                defects: DefectDist::Zero,
            },
        };
        let out = generate(&spec).unwrap();
        for v in 0..3 {
            assert!(out.instance.list_len(v) >= out.graph.degree(v) + 1);
        }
    }

    #[test]
    fn same_seed_gives_identical_digests() {
        let spec = GeneratorSpec {
            kind: GraphKind::Gnp { p: 0.3 },
            n: 20,
            max_degree: Some(6),
            seed: 99,
            orientation: OrientationKind::Random,
            policy: base_policy(),
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.instance, b.instance);
        let other = GeneratorSpec { seed: 100, ..spec };
        let c = generate(&other).unwrap();
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn hypergraph_line_graphs_respect_the_rank_bound() {
        let spec = GeneratorSpec {
            kind: GraphKind::LineGraphOfHypergraph { base_n: 14, rank: 3 },
            n: 12,
            max_degree: None,
            seed: 5,
            orientation: OrientationKind::ByIds,
            policy: base_policy(),
        };
        let out = generate(&spec).unwrap();
        assert_eq!(out.theta_bound, Some(3));
        let theta = neighborhood_independence(&out.graph).unwrap();
        assert!(theta <= 3, "measured theta {theta}");
    }

    #[test]
    fn line_graphs_of_graphs_have_theta_at_most_two() {
        for seed in 0..5 {
            let spec = GeneratorSpec {
                kind: GraphKind::LineGraphOfRandomGraph { base_n: 10 },
                n: 14,
                max_degree: None,
                seed,
                orientation: OrientationKind::ByIds,
                policy: base_policy(),
            };
            let out = generate(&spec).unwrap();
            let theta = neighborhood_independence(&out.graph).unwrap();
            assert!(theta <= 2, "seed {seed}: theta {theta}");
        }
    }

    #[test]
    fn degeneracy_orientation_bounds_outdegree_on_trees() {
        let spec = GeneratorSpec {
            kind: GraphKind::Star,
            n: 9,
            max_degree: None,
            seed: 0,
            orientation: OrientationKind::Degeneracy,
            policy: base_policy(),
        };
        let out = generate(&spec).unwrap();
        // a star has degeneracy 1: every node has outdegree at most 1
        for v in 0..9 {
            assert!(out.orientation.out_degree(v) <= 1);
        }
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        let spec = GeneratorSpec {
            kind: GraphKind::Clique,
            n: 6,
            max_degree: None,
            seed: 0,
            orientation: OrientationKind::ByIds,
            policy: InstancePolicy {
                color_space: 2,
                slack: SlackTarget::Degree { s: rat(50, 1) },
                defects: DefectDist::Zero,
            },
        };
        assert!(matches!(generate(&spec), Err(GenError::InfeasibleSpec(_))));
    }
}
