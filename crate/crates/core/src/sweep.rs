//! The Two-Sweep oriented list defective coloring algorithm and its fast
//! variant.
//!
//! Phase I walks the initial color classes in ascending order; each active
//! node commits to a sublist `S_v` of at most `p` colors maximizing
//! `Σ (d_v(x) - k_v(x))`, where `k_v(x)` counts outneighbors of smaller
//! initial color that put `x` into their own sublist. Phase II walks the
//! classes in descending order; each node picks a color `x ∈ S_v` with
//! `k_v(x) + r_v(x) ≤ d_v(x)`, where `r_v(x)` counts outneighbors of larger
//! initial color that already committed to `x`.
//!
//! The fast variant first computes a defective coloring with
//! `α = ε/p`, drops its monochromatic edges, lowers every defect by
//! `⌊β_v·ε/p⌋` and runs the plain algorithm on the remainder with the
//! defective colors as the initial coloring.

use std::collections::BTreeMap;

use num_traits::Zero;
use thiserror::Error;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::{Color, Coloring, PaletteInstance, Q};
use crate::report::RunReport;
use crate::sim::{
    self, LocalView, ModelBudget, NodeProgram, Payload, ProgramError, RoundTrace, StepOutput,
    TraceDetail,
};
use crate::symmetry::{self, SymmetryError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error(
        "node {node} violates the slack requirement: mass {mass} needs to exceed {required}"
    )]
    SlackViolated {
        node: NodeId,
        mass: u128,
        required: String,
    },
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
}

/// Iterated base-2 logarithm with threshold 1, using `⌈log₂⌉` per step.
pub fn log_star(x: u128) -> u32 {
    let mut x = x;
    let mut count = 0;
    while x > 1 {
        let log = 128 - (x - 1).leading_zeros(); // ceil(log2(x))
        x = log as u128;
        count += 1;
    }
    count
}

/// Phase I selection: the `min(p, |L_v|)` colors with the largest
/// `d_v(x) - k_v(x)`, lowest color on ties. Returned sorted by color.
pub fn phase1_select(
    list: &[(Color, u32)],
    k: impl Fn(Color) -> u32,
    p: usize,
) -> Vec<Color> {
    let mut scored: Vec<(i64, Color)> = list
        .iter()
        .map(|&(x, d)| (d as i64 - k(x) as i64, x))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<Color> = scored
        .into_iter()
        .take(p.min(list.len()))
        .map(|(_, x)| x)
        .collect();
    chosen.sort_unstable();
    chosen
}

/// Phase II choice: a color of the sublist with `k(x) + r(x) ≤ d(x)`,
/// maximizing the residual `d - k - r`, lowest color on ties. Entries are
/// `(color, d, k, r)`.
pub fn phase2_choose(sublist: &[(Color, u32, u32, u32)]) -> Result<Color, ProgramError> {
    sublist
        .iter()
        .filter(|&&(_, d, k, r)| k as u64 + r as u64 <= d as u64)
        .map(|&(x, d, k, r)| (d as i64 - k as i64 - r as i64, x))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, x)| x)
        .ok_or(ProgramError::NoFeasibleColor)
}

/// Per-node program for the plain Two-Sweep schedule: initial colors at
/// round 0, Phase I class `c` at round `c`, Phase II class `c` at round
/// `2q + 1 - c`.
struct TwoSweepProgram {
    initial_color: u64,
    q: u64,
    list: Vec<(Color, u32)>,
    p: u32,
    space: u64,
    neighbors: Vec<NodeId>,
    out_neighbors: Vec<NodeId>,
    nb_color: BTreeMap<NodeId, u64>,
    k: BTreeMap<Color, u32>,
    r: BTreeMap<Color, u32>,
    sublist: Vec<Color>,
}

impl TwoSweepProgram {
    fn new(initial_color: u64, q: u64, list: Vec<(Color, u32)>, p: u32, space: u64) -> Self {
        TwoSweepProgram {
            initial_color,
            q,
            list,
            p,
            space,
            neighbors: Vec::new(),
            out_neighbors: Vec::new(),
            nb_color: BTreeMap::new(),
            k: BTreeMap::new(),
            r: BTreeMap::new(),
            sublist: Vec::new(),
        }
    }

    fn absorb(&mut self, inbox: &[(NodeId, Payload)]) {
        for (from, payload) in inbox {
            let is_out = self.out_neighbors.binary_search(from).is_ok();
            match payload {
                Payload::InitialColor { color, .. } => {
                    self.nb_color.insert(*from, *color);
                }
                Payload::Sublist { colors, .. } => {
                    // counts only toward k when coming from N_<(v)
                    if is_out
                        && self
                            .nb_color
                            .get(from)
                            .is_some_and(|&c| c < self.initial_color)
                    {
                        for &x in colors {
                            if self.list.binary_search_by_key(&x, |&(c, _)| c).is_ok() {
                                *self.k.entry(x).or_insert(0) += 1;
                            }
                        }
                    }
                }
                Payload::FinalColor { color, .. } => {
                    if is_out && self.sublist.binary_search(color).is_ok() {
                        *self.r.entry(*color).or_insert(0) += 1;
                    }
                }
                _ => {}
            }
        }
    }
}

impl NodeProgram for TwoSweepProgram {
    fn init(&mut self, view: &LocalView<'_>) {
        self.neighbors = view.neighbors.to_vec();
        self.out_neighbors = view.out_neighbors.to_vec();
    }

    fn step(
        &mut self,
        round: usize,
        inbox: &[(NodeId, Payload)],
    ) -> Result<StepOutput, ProgramError> {
        self.absorb(inbox);
        let c = self.initial_color as usize;
        if round == 0 {
            return Ok(StepOutput::broadcast(
                &self.neighbors,
                Payload::InitialColor {
                    color: self.initial_color,
                    q: self.q,
                },
            ));
        }
        if round == c {
            // Phase I
            let k = &self.k;
            self.sublist = phase1_select(
                &self.list,
                |x| k.get(&x).copied().unwrap_or(0),
                self.p as usize,
            );
            let n_greater = self
                .out_neighbors
                .iter()
                .filter(|u| self.nb_color.get(u).is_some_and(|&cu| cu > self.initial_color))
                .count() as u64;
            let k_sum: u64 = self
                .sublist
                .iter()
                .map(|x| self.k.get(x).copied().unwrap_or(0) as u64)
                .sum();
            let mass: u64 = self
                .sublist
                .iter()
                .map(|x| self.defect_of(*x) as u64 + 1)
                .sum();
            if n_greater + k_sum >= mass {
                return Err(ProgramError::SweepConditionViolated(format!(
                    "|N_>| + Σk = {} vs Σ(d+1) = {} over the chosen sublist",
                    n_greater + k_sum,
                    mass
                )));
            }
            return Ok(StepOutput::broadcast(
                &self.neighbors,
                Payload::Sublist {
                    colors: self.sublist.clone(),
                    space: self.space,
                    p: self.p,
                },
            ));
        }
        if round == 2 * self.q as usize + 1 - c {
            // Phase II
            let rows: Vec<(Color, u32, u32, u32)> = self
                .sublist
                .iter()
                .map(|&x| {
                    (
                        x,
                        self.defect_of(x),
                        self.k.get(&x).copied().unwrap_or(0),
                        self.r.get(&x).copied().unwrap_or(0),
                    )
                })
                .collect();
            let x = phase2_choose(&rows)?;
            return Ok(StepOutput::broadcast(
                &self.neighbors,
                Payload::FinalColor {
                    color: x,
                    space: self.space,
                },
            )
            .and_decide(x as u64));
        }
        Ok(StepOutput::silent())
    }
}

impl TwoSweepProgram {
    fn defect_of(&self, x: Color) -> u32 {
        self.list
            .binary_search_by_key(&x, |&(c, _)| c)
            .map(|i| self.list[i].1)
            .unwrap_or(0)
    }
}

/// First node violating `Σ(d_v(x)+1) > max{p, |L_v|/p}·β_v`, if any.
///
/// Nodes without outgoing edges succeed with any nonempty list (conditions
/// (2)–(4) are vacuous for them), so only nonemptiness is required there;
/// everywhere else the inequality is checked strictly as printed.
pub fn base_requirement_violation(
    orientation: &Orientation,
    instance: &PaletteInstance,
    p: u32,
) -> Option<NodeId> {
    (0..instance.n()).find(|&v| {
        let mass = instance.defect_mass(v);
        if orientation.out_degree(v) == 0 {
            return mass == 0;
        }
        let beta = orientation.beta(v) as u128;
        let len = instance.list_len(v) as u128;
        // strict: mass > p·β and mass·p > |L|·β
        !(mass > p as u128 * beta && mass * p as u128 > len * beta)
    })
}

/// First node violating the `(1+ε)`-strengthened requirement, if any.
pub fn eps_requirement_violation(
    orientation: &Orientation,
    instance: &PaletteInstance,
    p: u32,
    eps: Q,
) -> Option<NodeId> {
    let one_plus = Q::from_integer(1) + eps;
    (0..instance.n()).find(|&v| {
        let mass = Q::from_integer(instance.defect_mass(v));
        if orientation.out_degree(v) == 0 {
            return mass == Q::zero();
        }
        let beta = Q::from_integer(orientation.beta(v) as u128);
        let len = Q::from_integer(instance.list_len(v) as u128);
        let p_q = Q::from_integer(p as u128);
        let stake = if p_q >= len / p_q { p_q } else { len / p_q };
        mass <= one_plus * stake * beta
    })
}

/// Defect reduction of the fast variant: `d'_v(x) = d_v(x) - ⌊β_v·ε/p⌋`,
/// keeping only colors with `d'_v(x) ≥ 0`.
pub fn reduce_defects_for_sweep(
    instance: &PaletteInstance,
    orientation: &Orientation,
    eps: Q,
    p: u32,
) -> PaletteInstance {
    let lists = (0..instance.n())
        .map(|v| {
            let cut = (eps * Q::from_integer(orientation.beta(v) as u128)
                / Q::from_integer(p as u128))
            .floor()
            .to_integer() as u32;
            instance
                .list(v)
                .iter()
                .filter(|&&(_, d)| d >= cut)
                .map(|&(x, d)| (x, d - cut))
                .collect()
        })
        .collect();
    PaletteInstance::from_parts_unchecked(instance.color_space(), lists)
}

/// Plain Two-Sweep (the `ε = 0` algorithm). Requires
/// `Σ(d_v(x)+1) > max{p, |L_v|/p}·β_v` on every node; rejects the instance
/// otherwise. Runs `2q` rounds after the initial-color exchange.
pub fn two_sweep(
    graph: &Graph,
    orientation: &Orientation,
    initial: &[u64],
    q: u64,
    instance: &PaletteInstance,
    p: u32,
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<(Coloring, RoundTrace), SweepError> {
    symmetry::check_proper_coloring(graph, initial, q)?;
    if let Some(node) = base_requirement_violation(orientation, instance, p) {
        return Err(SweepError::SlackViolated {
            node,
            mass: instance.defect_mass(node),
            required: format!(
                "max{{{p}, {}/{p}}}·{}",
                instance.list_len(node),
                orientation.beta(node)
            ),
        });
    }
    let programs: Vec<Box<dyn NodeProgram>> = (0..graph.n())
        .map(|v| {
            Box::new(TwoSweepProgram::new(
                initial[v],
                q,
                instance.list(v).to_vec(),
                p,
                instance.color_space(),
            )) as Box<dyn NodeProgram>
        })
        .collect();
    let max_rounds = sim::default_max_rounds(q, 0);
    let trace = sim::run(graph, Some(orientation), programs, budget, max_rounds, detail)?;
    let assignment = (0..graph.n())
        .map(|v| trace.decision(v).map(|x| x as Color))
        .collect();
    Ok((
        Coloring {
            assignment,
            produced_orientation: None,
        },
        trace,
    ))
}

/// Outcome of [`fast_two_sweep`].
#[derive(Debug, Clone)]
pub struct FastSweepOutcome {
    pub coloring: Coloring,
    pub report: RunReport,
    /// Colors of the intermediate defective coloring, when one was computed.
    pub defective_colors: Option<u128>,
}

/// Fast Two-Sweep. With `ε = 0`, or when `q ≤ (p/ε)² + log* q`, this is the
/// plain algorithm; otherwise a defective coloring with `α = ε/p` replaces
/// the initial coloring and the plain sweep runs on the subgraph without its
/// monochromatic edges, against defects lowered by `⌊β_v·ε/p⌋`.
pub fn fast_two_sweep(
    graph: &Graph,
    orientation: &Orientation,
    initial: &[u64],
    q: u64,
    instance: &PaletteInstance,
    p: u32,
    eps: Q,
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<FastSweepOutcome, SweepError> {
    let mut report = RunReport::default();
    if eps.is_zero() {
        // min{q, (p/0)² + log* q} = q by convention
        let (coloring, trace) =
            two_sweep(graph, orientation, initial, q, instance, p, budget, detail)?;
        report.absorb_trace("two-sweep", &trace);
        return Ok(FastSweepOutcome {
            coloring,
            report,
            defective_colors: None,
        });
    }
    if let Some(node) = eps_requirement_violation(orientation, instance, p, eps) {
        return Err(SweepError::SlackViolated {
            node,
            mass: instance.defect_mass(node),
            required: format!(
                "(1+{eps})·max{{{p}, {}/{p}}}·{}",
                instance.list_len(node),
                orientation.beta(node)
            ),
        });
    }
    // q ≤ (p/ε)² + log* q  ⟺  q·num² ≤ p²·den² + log*(q)·num²
    let num = *eps.numer();
    let den = *eps.denom();
    let direct = (q as u128) * num * num
        <= (p as u128) * (p as u128) * den * den + log_star(q as u128) as u128 * num * num;
    if direct {
        let (coloring, trace) =
            two_sweep(graph, orientation, initial, q, instance, p, budget, detail)?;
        report.absorb_trace("two-sweep", &trace);
        return Ok(FastSweepOutcome {
            coloring,
            report,
            defective_colors: None,
        });
    }

    let alpha = eps / Q::from_integer(p as u128);
    let psi = symmetry::defective_coloring(graph, orientation, alpha, initial, q, budget, detail)?;
    report.absorb_trace("defective", &psi.trace);
    let sub_graph = graph.edge_filtered(|u, v| psi.coloring[u] != psi.coloring[v]);
    let sub_orientation = orientation.restricted(&sub_graph);
    let reduced = reduce_defects_for_sweep(instance, orientation, eps, p);
    let (coloring, trace) = two_sweep(
        &sub_graph,
        &sub_orientation,
        &psi.coloring,
        psi.colors as u64,
        &reduced,
        p,
        budget,
        detail,
    )?;
    report.absorb_trace("two-sweep", &trace);
    Ok(FastSweepOutcome {
        coloring,
        report,
        defective_colors: Some(psi.colors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::q as rat;
    use crate::validate::{validate, ValidationMode};

    #[test]
    fn log_star_convention() {
        assert_eq!(log_star(0), 0);
        assert_eq!(log_star(1), 0);
        assert_eq!(log_star(2), 1);
        assert_eq!(log_star(4), 2);
        assert_eq!(log_star(16), 3);
        assert_eq!(log_star(65536), 4);
        assert_eq!(log_star(u64::MAX as u128), 5);
    }

    #[test]
    fn phase1_takes_whole_list_when_small() {
        let list = vec![(3, 1), (7, 0)];
        assert_eq!(phase1_select(&list, |_| 0, 5), vec![3, 7]);
    }

    #[test]
    fn phase1_breaks_ties_by_lowest_color() {
        let list = vec![(1, 0), (2, 0), (3, 0)];
        assert_eq!(phase1_select(&list, |_| 0, 2), vec![1, 2]);
    }

    #[test]
    fn phase1_maximizes_score_sum() {
        // L = {1: d=3, 2: d=0, 3: d=1}, k = (1->3, 2->0, 3->0), p=2
        // scores: (0, 0, 1) -> pick 3 then tie between 1 and 2 -> color 1
        let list = vec![(1, 3), (2, 0), (3, 1)];
        let k = |x: Color| if x == 1 { 3 } else { 0 };
        let chosen = phase1_select(&list, k, 2);
        assert_eq!(chosen, vec![1, 3]);
        // exhaustive scan over the three 2-subsets confirms the sum is maximal
        let score = |s: &[Color]| -> i64 {
            s.iter()
                .map(|&x| {
                    let d = list.iter().find(|&&(c, _)| c == x).unwrap().1 as i64;
                    d - k(x) as i64
                })
                .sum()
        };
        let best = [[1, 2], [1, 3], [2, 3]]
            .iter()
            .map(|s| score(s))
            .max()
            .unwrap();
        assert_eq!(score(&chosen), best);
    }

    #[test]
    fn phase2_trivial_singleton() {
        assert_eq!(phase2_choose(&[(4, 0, 0, 0)]), Ok(4));
    }

    #[test]
    fn phase2_respects_the_defect_condition() {
        // S = {1: d=0, 2: d=1}, r(1)=1, k=0, r(2)=1: color 1 violates, 2 is
        // admissible with zero residual
        let rows = vec![(1, 0, 0, 1), (2, 1, 0, 1)];
        assert_eq!(phase2_choose(&rows), Ok(2));
    }

    #[test]
    fn phase2_errors_without_feasible_color() {
        assert_eq!(
            phase2_choose(&[(1, 0, 1, 0)]),
            Err(ProgramError::NoFeasibleColor)
        );
    }

    #[test]
    fn single_node_takes_two_activation_slots() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let o = Orientation::from_ranks(&g, |v| v as u64);
        let inst = PaletteInstance::new(&g, 1, vec![vec![(1, 0)]]).unwrap();
        let (coloring, trace) = two_sweep(
            &g,
            &o,
            &[1],
            1,
            &inst,
            1,
            ModelBudget::Local,
            TraceDetail::Full,
        )
        .unwrap();
        assert_eq!(coloring.assignment[0], Some(1));
        assert_eq!(trace.rounds_elapsed, 2);
    }

    #[test]
    fn directed_path_slack_example() {
        // u -> v -> w with q = 3 classes; lists {1,2}, d = 0, p = 2:
        // Σ(d+1) = 2 must exceed max{2, 2/2}·β = 2 strictly, so it fails.
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let o = Orientation::from_directed_edges(&g, &[(0, 1), (1, 2)]).unwrap();
        let small = PaletteInstance::new(&g, 3, vec![vec![(1, 0), (2, 0)]; 3]).unwrap();
        let err = two_sweep(
            &g,
            &o,
            &[1, 2, 3],
            3,
            &small,
            2,
            ModelBudget::Local,
            TraceDetail::Aggregate,
        );
        assert!(matches!(err, Err(SweepError::SlackViolated { .. })));

        // with lists {1,2,3} the requirement holds and the output is proper
        let ok = PaletteInstance::new(&g, 3, vec![vec![(1, 0), (2, 0), (3, 0)]; 3]).unwrap();
        let (coloring, trace) = two_sweep(
            &g,
            &o,
            &[1, 2, 3],
            3,
            &ok,
            2,
            ModelBudget::Local,
            TraceDetail::Full,
        )
        .unwrap();
        let report = validate(&g, Some(&o), &ok, &coloring, ValidationMode::Oldc).unwrap();
        assert!(report.is_valid_and_total());
        assert!(trace.rounds_elapsed <= 2 * 3);
        // proper: zero-defect lists mean no monochromatic out-edges at all
        for (u, v) in g.edges() {
            assert_ne!(coloring.assignment[u], coloring.assignment[v]);
        }
    }

    #[test]
    fn fast_sweep_defect_reduction_formula() {
        // d = 5, β = 10, ε = 1/2, p = 5: d' = 5 - ⌊10·(1/10)⌋ = 4
        let g = Graph::from_edges(11, &(1..=10).map(|i| (0, i)).collect::<Vec<_>>()).unwrap();
        let o = Orientation::from_directed_edges(
            &g,
            &(1..=10).map(|i| (0, i)).collect::<Vec<_>>(),
        )
        .unwrap();
        let inst = PaletteInstance::new(&g, 9, vec![vec![(1, 5)]; 11]).unwrap();
        let reduced = reduce_defects_for_sweep(&inst, &o, rat(1, 2), 5);
        assert_eq!(reduced.defect(0, 1), Some(4));
        // leaves have β = 1: ⌊1/10⌋ = 0, defect unchanged
        assert_eq!(reduced.defect(1, 1), Some(5));
    }

    #[test]
    fn eps_zero_delegates_to_plain_two_sweep() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let o = Orientation::from_directed_edges(&g, &[(0, 1)]).unwrap();
        let inst =
            PaletteInstance::new(&g, 4, vec![vec![(1, 0), (2, 0), (3, 0)]; 2]).unwrap();
        let out = fast_two_sweep(
            &g,
            &o,
            &[1, 2],
            2,
            &inst,
            2,
            rat(0, 1),
            ModelBudget::Local,
            TraceDetail::Full,
        )
        .unwrap();
        assert!(out.defective_colors.is_none());
        assert_eq!(out.report.stages.len(), 1);
        let rep = validate(&g, Some(&o), &inst, &out.coloring, ValidationMode::Oldc).unwrap();
        assert!(rep.is_valid_and_total());
    }
}
