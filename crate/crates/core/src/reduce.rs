//! Composition machinery: color-space reductions, slack reductions and the
//! defective-from-arbdefective conversion.
//!
//! All drivers here orchestrate sequences of sub-simulations. Whenever a
//! batch of nodes commits to colors, the driver runs a one-round
//! announcement so rounds and bits stay honestly accounted, updates its
//! bookkeeping (consumed defects, colored-neighbor counts) and orients every
//! edge between a newly colored node and a previously colored one toward the
//! earlier node. Edges inside a batch keep the orientation the subsolver
//! produced.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::One;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::{compute_slack, Color, Coloring, PaletteInstance, Q};
use crate::report::RunReport;
use crate::sim::{
    self, LocalView, NodeProgram, Payload, ProgramError, RoundTrace, StepOutput,
};
use crate::solvers::{
    ceil_log2, check_nonempty_lists, greedy_sequential_arbdef, ArbdefOutcome, ArbdefProblem,
    ArbdefSolver, DefectiveOutcome, DefectiveSolver, OldcSolver, SolveCfg, SolveError,
};
use crate::symmetry;
use crate::validate::{validate, ValidationMode};

// ---------------------------------------------------------------------------
// shared driver plumbing
// ---------------------------------------------------------------------------

/// One-round broadcast of per-node payloads (all nodes decide right after).
struct AnnounceProgram {
    payload: Option<Payload>,
    neighbors: Vec<NodeId>,
}

impl NodeProgram for AnnounceProgram {
    fn init(&mut self, view: &LocalView<'_>) {
        self.neighbors = view.neighbors.to_vec();
    }

    fn step(
        &mut self,
        round: usize,
        _inbox: &[(NodeId, Payload)],
    ) -> Result<StepOutput, ProgramError> {
        if round == 0 {
            if let Some(payload) = self.payload.take() {
                return Ok(StepOutput::broadcast(&self.neighbors, payload));
            }
            return Ok(StepOutput::silent());
        }
        Ok(StepOutput::decide(0))
    }
}

fn run_announce(
    graph: &Graph,
    payloads: Vec<Option<Payload>>,
    cfg: &SolveCfg,
) -> Result<RoundTrace, sim::SimError> {
    let programs: Vec<Box<dyn NodeProgram>> = payloads
        .into_iter()
        .map(|payload| {
            Box::new(AnnounceProgram {
                payload,
                neighbors: Vec::new(),
            }) as Box<dyn NodeProgram>
        })
        .collect();
    sim::run(graph, None, programs, cfg.budget, 8, cfg.detail)
}

/// Accumulates a total orientation across sequential coloring batches.
struct OrientationBuilder {
    directed: BTreeMap<(NodeId, NodeId), (NodeId, NodeId)>,
}

impl OrientationBuilder {
    fn new() -> Self {
        OrientationBuilder {
            directed: BTreeMap::new(),
        }
    }

    /// `to_orig` maps the batch subgraph's ids to original ids; `local` is
    /// the subsolver's orientation on the batch subgraph; `colored` flags
    /// nodes colored before this batch.
    fn absorb_batch(
        &mut self,
        graph: &Graph,
        to_orig: &[NodeId],
        local: &Orientation,
        colored: &[bool],
    ) {
        let batch: BTreeSet<NodeId> = to_orig.iter().copied().collect();
        for (from, to) in local.directed_edges() {
            let (f, t) = (to_orig[from], to_orig[to]);
            self.directed.insert((f.min(t), f.max(t)), (f, t));
        }
        for &v in to_orig {
            for &u in graph.neighbors(v) {
                if !batch.contains(&u) && colored[u] {
                    // toward the already colored endpoint
                    self.directed.insert((v.min(u), v.max(u)), (v, u));
                }
            }
        }
    }

    fn finish(self, graph: &Graph) -> Result<Orientation, SolveError> {
        let edges: Vec<(NodeId, NodeId)> = self.directed.into_values().collect();
        Orientation::from_directed_edges(graph, &edges)
            .map_err(|e| SolveError::Contract(format!("incomplete orientation: {e}")))
    }
}

fn restrict_coloring(values: &[u64], to_orig: &[NodeId]) -> Vec<u64> {
    to_orig.iter().map(|&v| values[v]).collect()
}

// ---------------------------------------------------------------------------
// defective coloring from arbdefective subroutines (the iteration scheme)
// ---------------------------------------------------------------------------

/// Outcome of [`defective_from_arbdefective`]: the list defective coloring,
/// the orientation the driver maintained, and the per-run accounting.
#[derive(Debug, Clone)]
pub struct ConversionOutcome {
    pub coloring: Vec<Color>,
    pub orientation: Orientation,
    pub report: RunReport,
    /// Exactly `⌈log Δ⌉ + 1`.
    pub subsolver_calls: usize,
}

/// Solves a list defective instance with slack above
/// `21·θ·(⌈log Δ⌉+1)·S` by `⌈log Δ⌉+1` arbdefective subsolver calls.
///
/// Iteration `i` (from `⌈log Δ⌉` down to 0) works with the uniform defect
/// `d_i = 2^i - 1` and lowered defects `d'_v(x) = ⌈(d_v(x)+1)/(7θ)⌉ - 1`.
/// A color is "allowed" at iteration `i` when it has not been allowed
/// before and `d'_v(x) - a_v(x,i) ≥ d_i`, where `a_v(x,i)` counts neighbors
/// already colored `x`. Nodes whose allowed mass `|L_{v,i}|·(d_i+1)` exceeds
/// `S` times their uncolored degree are colored now via the subsolver.
pub fn defective_from_arbdefective(
    prob: &ArbdefProblem<'_>,
    s: Q,
    subsolver: &dyn ArbdefSolver,
    cfg: &SolveCfg,
) -> Result<ConversionOutcome, SolveError> {
    let ArbdefProblem {
        graph,
        init,
        q,
        instance,
        theta,
    } = *prob;
    let theta = theta.max(1) as u128;
    check_nonempty_lists(instance)?;
    let lg = ceil_log2(graph.delta() as u64).max(1);
    let requirement = Q::from_integer(21 * theta * (lg as u128 + 1)) * s;
    let slack = compute_slack(graph, instance, requirement);
    if !slack.strict {
        let node = slack
            .per_node
            .iter()
            .position(|v| !v.is_strictly_above(requirement))
            .unwrap_or(0);
        return Err(SolveError::SlackViolated {
            solver: "defective-from-arbdefective".into(),
            node,
            requirement: format!("slack > 21·{theta}·({lg}+1)·{s}"),
        });
    }

    // d'(x) = ceil((d+1)/(7θ)) - 1
    let d_prime = |d: u32| -> u32 { ((d as u128 + 1).div_ceil(7 * theta) - 1) as u32 };

    let n = graph.n();
    let mut windowed: Vec<BTreeSet<Color>> = vec![BTreeSet::new(); n];
    let mut same_color: Vec<BTreeMap<Color, u32>> = vec![BTreeMap::new(); n];
    let mut colored_neighbors = vec![0usize; n];
    let mut coloring: Vec<Option<Color>> = vec![None; n];
    let mut builder = OrientationBuilder::new();
    let mut report = RunReport::default();
    let mut calls = 0usize;

    for i in (0..=lg).rev() {
        let d_i = (1u32 << i) - 1;
        // allowed lists for this iteration (consumed whether or not the node
        // makes it into H_i)
        let mut allowed: Vec<Vec<Color>> = vec![Vec::new(); n];
        for v in 0..n {
            if coloring[v].is_some() {
                continue;
            }
            for &(x, d) in instance.list(v) {
                if windowed[v].contains(&x) {
                    continue;
                }
                let a = same_color[v].get(&x).copied().unwrap_or(0);
                let dp = d_prime(d);
                if dp >= a && dp - a >= d_i {
                    debug_assert!(dp - a <= 2 * d_i, "allowed-color window violated");
                    allowed[v].push(x);
                    windowed[v].insert(x);
                }
            }
        }
        // H_i: enough allowed mass relative to the uncolored degree
        let eligible: Vec<NodeId> = (0..n)
            .filter(|&v| {
                coloring[v].is_none() && {
                    let mass = Q::from_integer(allowed[v].len() as u128 * (d_i as u128 + 1));
                    let residual =
                        Q::from_integer((graph.degree(v) - colored_neighbors[v]) as u128);
                    mass > s * residual
                }
            })
            .collect();
        let (sub_graph, to_orig) = graph.induced(&eligible);
        let sub_lists = to_orig
            .iter()
            .map(|&v| allowed[v].iter().map(|&x| (x, d_i)).collect())
            .collect();
        let sub_instance =
            PaletteInstance::from_parts_unchecked(instance.color_space(), sub_lists);
        debug_assert!(compute_slack(&sub_graph, &sub_instance, s).strict);
        let sub_init = restrict_coloring(init, &to_orig);
        let sub_prob = ArbdefProblem {
            graph: &sub_graph,
            init: &sub_init,
            q,
            instance: &sub_instance,
            theta: prob.theta,
        };
        calls += 1;
        let out = subsolver
            .solve(&sub_prob, cfg)
            .map_err(|e| SolveError::Subsolver {
                iteration: i as usize,
                source: Box::new(e),
            })?;
        report.absorb_report(&format!("t4-i{i}"), out.report);

        let was_colored: Vec<bool> = coloring.iter().map(Option::is_some).collect();
        builder.absorb_batch(graph, &to_orig, &out.orientation, &was_colored);
        let mut payloads: Vec<Option<Payload>> = vec![None; n];
        for (sub_v, &orig_v) in to_orig.iter().enumerate() {
            let x = out.coloring[sub_v];
            coloring[orig_v] = Some(x);
            payloads[orig_v] = Some(Payload::FinalColor {
                color: x,
                space: instance.color_space(),
            });
        }
        for &orig_v in &to_orig {
            let x = coloring[orig_v].unwrap();
            for &u in graph.neighbors(orig_v) {
                colored_neighbors[u] += 1;
                if instance.contains(u, x) {
                    *same_color[u].entry(x).or_insert(0) += 1;
                }
            }
        }
        let announce = run_announce(graph, payloads, cfg)?;
        report.absorb_trace(format!("t4-i{i}-announce"), &announce);
    }

    if let Some(v) = (0..n).find(|&v| coloring[v].is_none()) {
        return Err(SolveError::Contract(format!(
            "node {v} survived iteration 0 uncolored"
        )));
    }
    report.subsolver_calls += calls;
    Ok(ConversionOutcome {
        coloring: coloring.into_iter().map(Option::unwrap).collect(),
        orientation: builder.finish(graph)?,
        report,
        subsolver_calls: calls,
    })
}

/// [`defective_from_arbdefective`] packaged as a composable
/// [`DefectiveSolver`].
pub struct ConversionSolver<'a> {
    pub s: Q,
    pub inner: &'a dyn ArbdefSolver,
}

impl DefectiveSolver for ConversionSolver<'_> {
    fn label(&self) -> String {
        format!("def-from-arbdef(s={})>{}", self.s, self.inner.label())
    }

    fn required_slack(&self, prob: &ArbdefProblem<'_>) -> Q {
        let lg = ceil_log2(prob.graph.delta() as u64).max(1) as u128;
        Q::from_integer(21 * prob.theta.max(1) as u128 * (lg + 1)) * self.s
    }

    fn solve(
        &self,
        prob: &ArbdefProblem<'_>,
        cfg: &SolveCfg,
    ) -> Result<DefectiveOutcome, SolveError> {
        let out = defective_from_arbdefective(prob, self.s, self.inner, cfg)?;
        let mut report = out.report;
        report.subsolver_calls = out.subsolver_calls;
        Ok(DefectiveOutcome {
            coloring: out.coloring,
            report,
        })
    }
}

// ---------------------------------------------------------------------------
// slack reductions
// ---------------------------------------------------------------------------

/// Solves slack-2 arbdefective instances by a defective coloring with
/// `α = 1/μ` and one subsolver pass per color class: the classes are
/// processed in order, defects shrink by the colors already consumed, and
/// each residual class instance has slack above `μ`.
pub fn slack_reduction_2(
    prob: &ArbdefProblem<'_>,
    mu: u64,
    subsolver: &dyn ArbdefSolver,
    cfg: &SolveCfg,
) -> Result<ArbdefOutcome, SolveError> {
    let ArbdefProblem {
        graph,
        init,
        q,
        instance,
        ..
    } = *prob;
    check_nonempty_lists(instance)?;
    let slack = compute_slack(graph, instance, Q::from_integer(2));
    if !slack.strict {
        let node = slack
            .per_node
            .iter()
            .position(|v| !v.is_strictly_above(Q::from_integer(2)))
            .unwrap_or(0);
        return Err(SolveError::SlackViolated {
            solver: "slack-reduction-2".into(),
            node,
            requirement: "slack > 2".into(),
        });
    }
    let mut report = RunReport::default();
    let psi = symmetry::defective_coloring_undirected(
        graph,
        Q::new(1, mu.max(1) as u128),
        init,
        q,
        cfg.budget,
        cfg.detail,
    )?;
    report.absorb_trace("slack2-defective", &psi.trace);

    let mut classes: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
    for (v, &c) in psi.coloring.iter().enumerate() {
        classes.entry(c).or_default().push(v);
    }
    let state = process_classes(
        graph,
        init,
        q,
        instance,
        prob.theta,
        classes.into_values().collect(),
        Some(Q::from_integer(mu as u128)),
        subsolver,
        cfg,
        &mut report,
        "slack2",
    )?;
    Ok(ArbdefOutcome {
        coloring: state.coloring,
        orientation: state.builder.finish(graph)?,
        report,
    })
}

struct ClassState {
    coloring: Vec<Color>,
    builder: OrientationBuilder,
}

/// Shared class loop of the slack reductions: for every class (in order),
/// restrict to its uncolored members, lower the defects by the consumed
/// counts, check the residual contract and run the subsolver. Falls back to
/// the greedy whenever the residual instance misses `class_slack` (validity
/// needs only slack above the uncolored degree, which the driver maintains).
#[allow(clippy::too_many_arguments)]
fn process_classes(
    graph: &Graph,
    init: &[u64],
    q: u64,
    instance: &PaletteInstance,
    theta: usize,
    classes: Vec<Vec<NodeId>>,
    class_slack: Option<Q>,
    subsolver: &dyn ArbdefSolver,
    cfg: &SolveCfg,
    report: &mut RunReport,
    label: &str,
) -> Result<ClassState, SolveError> {
    let n = graph.n();
    let mut consumed: Vec<BTreeMap<Color, u32>> = vec![BTreeMap::new(); n];
    let mut coloring: Vec<Option<Color>> = vec![None; n];
    let mut builder = OrientationBuilder::new();
    for (index, members) in classes.into_iter().enumerate() {
        let members: Vec<NodeId> =
            members.into_iter().filter(|&v| coloring[v].is_none()).collect();
        if members.is_empty() {
            continue;
        }
        let (sub_graph, to_orig) = graph.induced(&members);
        let sub_lists = to_orig
            .iter()
            .map(|&v| {
                instance
                    .list(v)
                    .iter()
                    .filter_map(|&(x, d)| {
                        let a = consumed[v].get(&x).copied().unwrap_or(0);
                        (d >= a).then_some((x, d - a))
                    })
                    .collect()
            })
            .collect();
        let sub_instance =
            PaletteInstance::from_parts_unchecked(instance.color_space(), sub_lists);
        let sub_init = restrict_coloring(init, &to_orig);
        let sub_prob = ArbdefProblem {
            graph: &sub_graph,
            init: &sub_init,
            q,
            instance: &sub_instance,
            theta,
        };
        let use_subsolver = match class_slack {
            Some(target) => compute_slack(&sub_graph, &sub_instance, target).strict,
            None => compute_slack(&sub_graph, &sub_instance, subsolver.required_slack(&sub_prob))
                .strict,
        };
        report.subsolver_calls += 1;
        let out = if use_subsolver {
            subsolver.solve(&sub_prob, cfg)
        } else {
            // maintained invariant: residual mass exceeds the uncolored
            // degree, so the greedy always applies
            greedy_sequential_arbdef(&sub_prob, cfg)
        }
        .map_err(|e| SolveError::Subsolver {
            iteration: index,
            source: Box::new(e),
        })?;
        report.absorb_report(&format!("{label}-c{index}"), out.report);

        let was_colored: Vec<bool> = coloring.iter().map(Option::is_some).collect();
        builder.absorb_batch(graph, &to_orig, &out.orientation, &was_colored);
        let mut payloads: Vec<Option<Payload>> = vec![None; n];
        for (sub_v, &orig_v) in to_orig.iter().enumerate() {
            let x = out.coloring[sub_v];
            coloring[orig_v] = Some(x);
            payloads[orig_v] = Some(Payload::FinalColor {
                color: x,
                space: instance.color_space(),
            });
            for &u in graph.neighbors(orig_v) {
                if instance.contains(u, x) {
                    *consumed[u].entry(x).or_insert(0) += 1;
                }
            }
        }
        let announce = run_announce(graph, payloads, cfg)?;
        report.absorb_trace(format!("{label}-c{index}-announce"), &announce);
    }
    if let Some(v) = (0..n).find(|&v| coloring[v].is_none()) {
        return Err(SolveError::Contract(format!(
            "{label}: node {v} left uncolored after all classes"
        )));
    }
    Ok(ClassState {
        coloring: coloring.into_iter().map(Option::unwrap).collect(),
        builder,
    })
}

/// Solves slack-1 arbdefective instances recursively: per level, a
/// defective coloring with `α = 1/(2μ)` splits the uncolored graph into
/// classes; class members with at most `Δ/2` colored neighbors are colored
/// via the subsolver; everyone else waits for the next level, whose maximum
/// degree has at least halved.
pub fn slack_reduction_1(
    prob: &ArbdefProblem<'_>,
    mu: u64,
    subsolver: &dyn ArbdefSolver,
    cfg: &SolveCfg,
) -> Result<ArbdefOutcome, SolveError> {
    let ArbdefProblem {
        graph,
        init,
        q,
        instance,
        theta,
    } = *prob;
    check_nonempty_lists(instance)?;
    let slack = compute_slack(graph, instance, Q::one());
    if !slack.strict {
        let node = slack
            .per_node
            .iter()
            .position(|v| !v.is_strictly_above(Q::one()))
            .unwrap_or(0);
        return Err(SolveError::SlackViolated {
            solver: "slack-reduction-1".into(),
            node,
            requirement: "slack > 1".into(),
        });
    }

    let n = graph.n();
    let alpha = Q::new(1, 2 * mu.max(1) as u128);
    let mut consumed: Vec<BTreeMap<Color, u32>> = vec![BTreeMap::new(); n];
    let mut coloring: Vec<Option<Color>> = vec![None; n];
    let mut builder = OrientationBuilder::new();
    let mut report = RunReport::default();
    let max_levels = ceil_log2(graph.delta() as u64) as usize + 2;

    for level in 0..=max_levels {
        let uncolored: Vec<NodeId> = (0..n).filter(|&v| coloring[v].is_none()).collect();
        if uncolored.is_empty() {
            break;
        }
        if level == max_levels {
            return Err(SolveError::Contract(format!(
                "slack1: {} nodes uncolored after {max_levels} levels",
                uncolored.len()
            )));
        }
        let (cur_graph, to_cur) = graph.induced(&uncolored);
        let cur_init = restrict_coloring(init, &to_cur);
        let residual_lists: Vec<Vec<(Color, u32)>> = to_cur
            .iter()
            .map(|&v| {
                instance
                    .list(v)
                    .iter()
                    .filter_map(|&(x, d)| {
                        let a = consumed[v].get(&x).copied().unwrap_or(0);
                        (d >= a).then_some((x, d - a))
                    })
                    .collect()
            })
            .collect();
        let residual =
            PaletteInstance::from_parts_unchecked(instance.color_space(), residual_lists);
        // maintained invariant: residual mass > uncolored degree, per level
        if !compute_slack(&cur_graph, &residual, Q::one()).strict {
            return Err(SolveError::Contract(format!(
                "slack1: level {level} lost the residual slack invariant"
            )));
        }
        let raw_delta = cur_graph.max_degree_raw();
        if raw_delta <= 2 {
            // recursion floor: one direct batch over the whole remainder
            let batch: Vec<NodeId> = (0..cur_graph.n()).collect();
            let state = process_classes(
                &cur_graph,
                &cur_init,
                q,
                &residual,
                theta,
                vec![batch],
                None,
                subsolver,
                cfg,
                &mut report,
                &format!("slack1-L{level}-floor"),
            )?;
            absorb_level(
                graph,
                &to_cur,
                &cur_graph,
                state,
                &mut coloring,
                &mut consumed,
                &mut builder,
                instance,
            );
            continue;
        }

        let psi = symmetry::defective_coloring_undirected(
            &cur_graph,
            alpha,
            &cur_init,
            q,
            cfg.budget,
            cfg.detail,
        )?;
        report.absorb_trace(format!("slack1-L{level}-defective"), &psi.trace);
        let mut classes: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
        for (v, &c) in psi.coloring.iter().enumerate() {
            classes.entry(c).or_default().push(v);
        }
        let mut level_colored = vec![false; cur_graph.n()];
        for (index, members) in classes.into_values().enumerate() {
            // only nodes with at most Δ/2 already-colored neighbors proceed
            let eligible: Vec<NodeId> = members
                .into_iter()
                .filter(|&v| {
                    let tilde = cur_graph
                        .neighbors(v)
                        .iter()
                        .filter(|&&u| level_colored[u])
                        .count();
                    2 * tilde <= raw_delta
                })
                .collect();
            if eligible.is_empty() {
                continue;
            }
            let (h_graph, to_h) = cur_graph.induced(&eligible);
            let h_lists = to_h
                .iter()
                .map(|&cv| {
                    let orig = to_cur[cv];
                    instance
                        .list(orig)
                        .iter()
                        .filter_map(|&(x, d)| {
                            let a = consumed[orig].get(&x).copied().unwrap_or(0);
                            (d >= a).then_some((x, d - a))
                        })
                        .collect()
                })
                .collect();
            let h_instance =
                PaletteInstance::from_parts_unchecked(instance.color_space(), h_lists);
            let h_init = restrict_coloring(&cur_init, &to_h);
            let h_prob = ArbdefProblem {
                graph: &h_graph,
                init: &h_init,
                q,
                instance: &h_instance,
                theta,
            };
            let use_subsolver =
                compute_slack(&h_graph, &h_instance, Q::from_integer(mu as u128)).strict;
            report.subsolver_calls += 1;
            let out = if use_subsolver {
                subsolver.solve(&h_prob, cfg)
            } else {
                greedy_sequential_arbdef(&h_prob, cfg)
            }
            .map_err(|e| SolveError::Subsolver {
                iteration: index,
                source: Box::new(e),
            })?;
            report.absorb_report(&format!("slack1-L{level}-c{index}"), out.report);

            let was_colored: Vec<bool> = coloring.iter().map(Option::is_some).collect();
            let to_orig_batch: Vec<NodeId> = to_h.iter().map(|&cv| to_cur[cv]).collect();
            builder.absorb_batch(graph, &to_orig_batch, &out.orientation, &was_colored);
            let mut payloads: Vec<Option<Payload>> = vec![None; n];
            for (hv, &cv) in to_h.iter().enumerate() {
                let orig = to_cur[cv];
                let x = out.coloring[hv];
                coloring[orig] = Some(x);
                level_colored[cv] = true;
                payloads[orig] = Some(Payload::FinalColor {
                    color: x,
                    space: instance.color_space(),
                });
                for &u in graph.neighbors(orig) {
                    if instance.contains(u, x) {
                        *consumed[u].entry(x).or_insert(0) += 1;
                    }
                }
            }
            let announce = run_announce(graph, payloads, cfg)?;
            report.absorb_trace(format!("slack1-L{level}-c{index}-announce"), &announce);
        }
        // the survivors saw more than Δ/2 colored neighbors: degree halves
        let survivors: Vec<NodeId> =
            (0..cur_graph.n()).filter(|&v| !level_colored[v]).collect();
        if !survivors.is_empty() {
            let (next, _) = cur_graph.induced(&survivors);
            if 2 * next.max_degree_raw() >= raw_delta {
                return Err(SolveError::Contract(format!(
                    "slack1: level {level} did not halve the degree ({} -> {})",
                    raw_delta,
                    next.max_degree_raw()
                )));
            }
        }
    }
    let coloring: Vec<Color> = coloring.into_iter().map(Option::unwrap).collect();
    Ok(ArbdefOutcome {
        coloring,
        orientation: builder.finish(graph)?,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn absorb_level(
    graph: &Graph,
    to_cur: &[NodeId],
    cur_graph: &Graph,
    state: ClassState,
    coloring: &mut [Option<Color>],
    consumed: &mut [BTreeMap<Color, u32>],
    builder: &mut OrientationBuilder,
    instance: &PaletteInstance,
) {
    // state.builder holds directions in cur-graph ids; remap wholesale
    let was_colored: Vec<bool> = coloring.iter().map(Option::is_some).collect();
    let local = state
        .builder
        .finish(cur_graph)
        .expect("floor batch orients its graph");
    builder.absorb_batch(graph, to_cur, &local, &was_colored);
    for (cv, &orig) in to_cur.iter().enumerate() {
        let x = state.coloring[cv];
        coloring[orig] = Some(x);
        for &u in graph.neighbors(orig) {
            if instance.contains(u, x) {
                *consumed[u].entry(x).or_insert(0) += 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// color-space reductions
// ---------------------------------------------------------------------------

/// The partition of a color space `1..=C` into `p` blocks of size `⌈C/p⌉`
/// (the last block padded with colors `> C` that never appear in lists),
/// with the induced subspace-choice instance.
#[derive(Debug, Clone)]
pub struct SubspacePartition {
    pub parts: u32,
    pub part_size: u64,
    /// Instance over the part indices `1..=p`, lists restricted to parts
    /// with positive induced mass (and above `min_mass` when given).
    pub choice_instance: PaletteInstance,
    /// Per node, per part (0-based): induced mass `Σ_{x∈L_v∩C_i}(d_v(x)+1)`.
    pub masses: Vec<Vec<u128>>,
}

pub fn part_of_color(x: Color, part_size: u64) -> u32 {
    ((x as u64 - 1) / part_size + 1) as u32
}

pub fn renumber_into_part(x: Color, part: u32, part_size: u64) -> Color {
    (x as u64 - (part as u64 - 1) * part_size) as Color
}

/// Builds the subspace-choice instance with defects
/// `d_{v,i} = ⌊weight(v)·A_i/B⌋` where `A_i` is the induced mass of part `i`
/// and `B` the total mass.
pub fn build_subspace_partition(
    instance: &PaletteInstance,
    parts: u32,
    weight: impl Fn(NodeId) -> Q,
    min_mass: Option<Q>,
) -> SubspacePartition {
    let c = instance.color_space();
    let part_size = c.div_ceil(parts as u64);
    let mut masses = Vec::with_capacity(instance.n());
    let mut lists = Vec::with_capacity(instance.n());
    for v in 0..instance.n() {
        let mut mass = vec![0u128; parts as usize];
        for &(x, d) in instance.list(v) {
            mass[part_of_color(x, part_size) as usize - 1] += d as u128 + 1;
        }
        let total: u128 = mass.iter().sum();
        let w = weight(v);
        let list: Vec<(Color, u32)> = mass
            .iter()
            .enumerate()
            .filter(|&(_, &a)| {
                a > 0
                    && min_mass
                        .map_or(true, |t| Q::from_integer(a) > t)
            })
            .map(|(i, &a)| {
                let d = (w * Q::from_integer(a) / Q::from_integer(total.max(1)))
                    .floor()
                    .to_integer() as u32;
                (i as Color + 1, d)
            })
            .collect();
        masses.push(mass);
        lists.push(list);
    }
    SubspacePartition {
        parts,
        part_size,
        choice_instance: PaletteInstance::from_parts_unchecked(parts as u64, lists),
        masses,
    }
}

/// Arbdefective color-space reduction: nodes first choose one of `parts`
/// subspaces by solving the induced defective instance (slack `σ`), then
/// the per-part residual instances — which keep slack `total_slack/σ` on
/// the same-part subgraph — are solved together in one subsolver run over
/// the disjoint union, with colors renumbered into `1..=⌈C/p⌉`.
#[allow(clippy::too_many_arguments)]
pub fn arbdef_color_space_reduction(
    prob: &ArbdefProblem<'_>,
    total_slack: Q,
    sigma: Q,
    parts: u32,
    defective: &dyn DefectiveSolver,
    arbdef: &dyn ArbdefSolver,
    cfg: &SolveCfg,
) -> Result<ArbdefOutcome, SolveError> {
    let ArbdefProblem {
        graph,
        init,
        q,
        instance,
        theta,
    } = *prob;
    check_nonempty_lists(instance)?;
    let mut report = RunReport::default();

    let partition =
        build_subspace_partition(instance, parts, |v| sigma * Q::from_integer(graph.degree(v) as u128), None);
    if !compute_slack(graph, &partition.choice_instance, sigma).strict {
        return Err(SolveError::Contract(
            "subspace-choice instance lost the σ slack".into(),
        ));
    }
    let choice_prob = ArbdefProblem {
        graph,
        init,
        q,
        instance: &partition.choice_instance,
        theta,
    };
    report.subsolver_calls += 1;
    let choice = defective
        .solve(&choice_prob, cfg)
        .map_err(|e| SolveError::Subsolver {
            iteration: 0,
            source: Box::new(e),
        })?;
    report.absorb_report("subspace-choice", choice.report);
    let chosen = Coloring::total(choice.coloring.clone());
    let check = validate(
        graph,
        None,
        &partition.choice_instance,
        &chosen,
        ValidationMode::ListDefective,
    )?;
    if !check.is_valid_and_total() {
        return Err(SolveError::Contract(format!(
            "subspace choice violated its defects at {} nodes",
            check.violations.len()
        )));
    }
    let announce = run_announce(
        graph,
        choice
            .coloring
            .iter()
            .map(|&part| {
                Some(Payload::SubspaceIndex {
                    index: part,
                    parts,
                })
            })
            .collect(),
        cfg,
    )?;
    report.absorb_trace("subspace-announce", &announce);

    let union = graph.edge_filtered(|u, v| choice.coloring[u] == choice.coloring[v]);
    let sub_lists = (0..graph.n())
        .map(|v| {
            let part = choice.coloring[v];
            instance
                .list(v)
                .iter()
                .filter(|&&(x, _)| part_of_color(x, partition.part_size) == part)
                .map(|&(x, d)| (renumber_into_part(x, part, partition.part_size), d))
                .collect()
        })
        .collect();
    let sub_instance = PaletteInstance::from_parts_unchecked(partition.part_size, sub_lists);
    let residual_slack = total_slack / sigma;
    if !compute_slack(&union, &sub_instance, residual_slack).strict {
        return Err(SolveError::Contract(format!(
            "per-part residual lost the {residual_slack} slack"
        )));
    }
    let sub_prob = ArbdefProblem {
        graph: &union,
        init,
        q,
        instance: &sub_instance,
        theta,
    };
    report.subsolver_calls += 1;
    let inner = arbdef
        .solve(&sub_prob, cfg)
        .map_err(|e| SolveError::Subsolver {
            iteration: 1,
            source: Box::new(e),
        })?;
    report.absorb_report("parts", inner.report);

    let coloring: Vec<Color> = (0..graph.n())
        .map(|v| {
            let part = choice.coloring[v];
            inner.coloring[v] + (part as Color - 1) * partition.part_size as Color
        })
        .collect();
    // cross-part edges can never be monochromatic; orient them toward the
    // lower id, keep the subsolver's directions on same-part edges
    let mut directed = inner.orientation.directed_edges();
    for (u, v) in graph.edges() {
        if choice.coloring[u] != choice.coloring[v] {
            directed.push((v, u));
        }
    }
    let orientation = Orientation::from_directed_edges(graph, &directed)
        .map_err(|e| SolveError::Contract(format!("incomplete orientation: {e}")))?;
    Ok(ArbdefOutcome {
        coloring,
        orientation,
        report,
    })
}

/// The combining step: color-space reduction with `p = ⌈√C⌉` parts and
/// `σ = 42·θ·⌈log Δ⌉`, the subspace choice handled by the
/// defective-from-arbdefective conversion (run at the slack the σ budget
/// affords), the residual parts by the given slack-2 subsolver. Requires
/// slack above `2σ = 84·θ·⌈log Δ⌉`.
pub fn combining(
    prob: &ArbdefProblem<'_>,
    subsolver: &dyn ArbdefSolver,
    cfg: &SolveCfg,
) -> Result<ArbdefOutcome, SolveError> {
    let theta = prob.theta.max(1) as u128;
    let lg = ceil_log2(prob.graph.delta() as u64).max(1) as u128;
    let sigma_int = 42 * theta * lg;
    let required = Q::from_integer(2 * sigma_int);
    let slack = compute_slack(prob.graph, prob.instance, required);
    if !slack.strict {
        let node = slack
            .per_node
            .iter()
            .position(|v| !v.is_strictly_above(required))
            .unwrap_or(0);
        return Err(SolveError::SlackViolated {
            solver: "combining".into(),
            node,
            requirement: format!("slack > 84·{theta}·{lg}"),
        });
    }
    let parts = crate::poly::ceil_root(prob.instance.color_space() as u128, 2).max(1) as u32;
    // largest S the printed requirement admits under the σ budget
    let s_t4 = Q::from_integer(sigma_int) / Q::from_integer(21 * theta * (lg + 1));
    let fallback = crate::solvers::FallbackArbdef {
        preferred: subsolver,
    };
    let conversion = ConversionSolver {
        s: s_t4,
        inner: &fallback,
    };
    arbdef_color_space_reduction(
        prob,
        required,
        Q::from_integer(sigma_int),
        parts,
        &conversion,
        subsolver,
        cfg,
    )
}

// ---------------------------------------------------------------------------
// oriented color-space reduction
// ---------------------------------------------------------------------------

/// `⌈log_λ x⌉`: levels needed to bring a space of size `x` at or below `λ`.
pub fn ceil_log_lambda(x: u128, lambda: u32) -> u32 {
    let mut l = 0u32;
    let mut acc: u128 = 1;
    while acc < x {
        acc = acc.saturating_mul(lambda as u128);
        l += 1;
    }
    l
}

fn q_pow(base: Q, exp: u32) -> Q {
    let mut acc = Q::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Outcome of [`oriented_color_space_reduction`].
#[derive(Debug, Clone)]
pub struct OrientedReductionOutcome {
    pub coloring: Coloring,
    pub report: RunReport,
    /// `⌈log_λ C⌉` (the final direct call counts as a level; 1 when the
    /// space already fits).
    pub levels: usize,
}

/// Oriented color-space reduction: per level the nodes pick one of `λ`
/// subspaces by running the solver on the induced λ-color instance (with
/// defects computed against `β_v`), then recurse on the union of same-part
/// subgraphs with renumbered lists. The solver handles the bottom space
/// directly. Per level the subspace-choice stage consumes all slack above
/// the remaining budget `κ(λ)^(levels-1)`; parts below that budget are not
/// offered so the recursion never starves a node.
pub fn oriented_color_space_reduction(
    graph: &Graph,
    orientation: &Orientation,
    init: &[u64],
    q: u64,
    instance: &PaletteInstance,
    lambda: u32,
    solver: &dyn OldcSolver,
    cfg: &SolveCfg,
) -> Result<(Coloring, RunReport), SolveError> {
    let out = oriented_reduction_full(graph, orientation, init, q, instance, lambda, solver, cfg)?;
    Ok((out.coloring, out.report))
}

#[allow(clippy::too_many_arguments)]
pub fn oriented_reduction_full(
    graph: &Graph,
    orientation: &Orientation,
    init: &[u64],
    q: u64,
    instance: &PaletteInstance,
    lambda: u32,
    solver: &dyn OldcSolver,
    cfg: &SolveCfg,
) -> Result<OrientedReductionOutcome, SolveError> {
    check_nonempty_lists(instance)?;
    let total_levels = ceil_log_lambda(instance.color_space() as u128, lambda).max(1) as usize;
    let mut report = RunReport::default();
    let mut cur_graph = graph.clone();
    let mut cur_orientation = orientation.clone();
    let mut cur_instance = instance.clone();
    let mut offsets: Vec<u64> = vec![0; graph.n()];
    let mut level = 0usize;

    loop {
        let c_cur = cur_instance.color_space();
        if c_cur <= lambda as u64 {
            let (coloring, sub_report) = solver
                .solve(&cur_graph, &cur_orientation, init, q, &cur_instance, cfg)
                .map_err(|e| SolveError::AtLevel {
                    level,
                    source: Box::new(e),
                })?;
            report.absorb_report(&format!("L{level}-direct"), sub_report);
            let assignment = (0..graph.n())
                .map(|v| {
                    coloring.assignment[v].map(|x| (x as u64 + offsets[v]) as Color)
                })
                .collect();
            return Ok(OrientedReductionOutcome {
                coloring: Coloring {
                    assignment,
                    produced_orientation: None,
                },
                report,
                levels: total_levels,
            });
        }

        let remaining = ceil_log_lambda(c_cur as u128, lambda);
        let kappa = solver.kappa(lambda as u64);
        let budget = q_pow(kappa, remaining);
        let rem_budget = q_pow(kappa, remaining - 1);
        // strict entry requirement at this level
        if let Some(node) = (0..cur_graph.n()).find(|&v| {
            Q::from_integer(cur_instance.defect_mass(v))
                <= budget * Q::from_integer(cur_orientation.beta(v) as u128)
        }) {
            return Err(SolveError::AtLevel {
                level,
                source: Box::new(SolveError::SlackViolated {
                    solver: "oriented-color-space-reduction".into(),
                    node,
                    requirement: format!("oriented slack > κ^{remaining} = {budget}"),
                }),
            });
        }
        // spend all headroom above the remaining budget on the choice stage
        let s_min = (0..cur_graph.n())
            .map(|v| {
                Q::from_integer(cur_instance.defect_mass(v))
                    / Q::from_integer(cur_orientation.beta(v) as u128)
            })
            .min()
            .unwrap_or(budget);
        let sigma_level = s_min / rem_budget;
        let partition = build_subspace_partition(
            &cur_instance,
            lambda,
            |v| sigma_level * Q::from_integer(cur_orientation.beta(v) as u128),
            Some(rem_budget),
        );
        let (choice, choice_report) = solver
            .solve(
                &cur_graph,
                &cur_orientation,
                init,
                q,
                &partition.choice_instance,
                cfg,
            )
            .map_err(|e| SolveError::AtLevel {
                level,
                source: Box::new(e),
            })?;
        report.absorb_report(&format!("L{level}-choice"), choice_report);
        report.subsolver_calls += 1;
        let check = validate(
            &cur_graph,
            Some(&cur_orientation),
            &partition.choice_instance,
            &choice,
            ValidationMode::Oldc,
        )?;
        if !check.is_valid_and_total() {
            return Err(SolveError::Contract(format!(
                "level {level}: subspace choice violated its defects at {} nodes",
                check.violations.len()
            )));
        }
        let parts_chosen: Vec<u32> = (0..graph.n())
            .map(|v| choice.assignment[v].expect("total"))
            .collect();
        let announce = run_announce(
            &cur_graph,
            parts_chosen
                .iter()
                .map(|&index| Some(Payload::SubspaceIndex { index, parts: lambda }))
                .collect(),
            cfg,
        )?;
        report.absorb_trace(format!("L{level}-announce"), &announce);

        let union = cur_graph.edge_filtered(|u, v| parts_chosen[u] == parts_chosen[v]);
        let union_orientation = cur_orientation.restricted(&union);
        let next_lists = (0..graph.n())
            .map(|v| {
                let part = parts_chosen[v];
                cur_instance
                    .list(v)
                    .iter()
                    .filter(|&&(x, _)| part_of_color(x, partition.part_size) == part)
                    .map(|&(x, d)| (renumber_into_part(x, part, partition.part_size), d))
                    .collect()
            })
            .collect();
        let next_instance =
            PaletteInstance::from_parts_unchecked(partition.part_size, next_lists);
        // telescoping: the residual must still carry the remaining budget
        if let Some(node) = (0..graph.n()).find(|&v| {
            Q::from_integer(next_instance.defect_mass(v))
                < rem_budget * Q::from_integer(union_orientation.beta(v) as u128)
        }) {
            return Err(SolveError::Contract(format!(
                "level {level}: node {node} fell below the κ^{} residual budget",
                remaining - 1
            )));
        }
        for v in 0..graph.n() {
            offsets[v] += (parts_chosen[v] as u64 - 1) * partition.part_size;
        }
        cur_graph = union;
        cur_orientation = union_orientation;
        cur_instance = next_instance;
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::q as rat;

    #[test]
    fn subspace_defect_formula_matches_substitution() {
        // σ=2, deg=3, part mass 4, total mass 8 -> d = ⌊2·3·4/8⌋ = 3
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        // node 0: colors 1..4 with defects chosen so part masses are 4 and 4
        let lists = vec![
            vec![(1, 1), (2, 1), (3, 1), (4, 1)],
            vec![(1, 0)],
            vec![(1, 0)],
            vec![(1, 0)],
        ];
        let inst = PaletteInstance::new(&g, 4, lists).unwrap();
        let part = build_subspace_partition(
            &inst,
            2,
            |v| rat(2, 1) * Q::from_integer(g.degree(v) as u128),
            None,
        );
        assert_eq!(part.part_size, 2);
        assert_eq!(part.masses[0], vec![4, 4]);
        assert_eq!(part.choice_instance.defect(0, 1), Some(3));
        assert_eq!(part.choice_instance.defect(0, 2), Some(3));
    }

    #[test]
    fn part_arithmetic_round_trips() {
        let part_size = 5u64;
        for x in 1..=25u32 {
            let p = part_of_color(x, part_size);
            let r = renumber_into_part(x, p, part_size);
            assert!(r >= 1 && r as u64 <= part_size);
            assert_eq!(r as u64 + (p as u64 - 1) * part_size, x as u64);
        }
    }

    #[test]
    fn ceil_log_lambda_examples() {
        assert_eq!(ceil_log_lambda(1, 4), 0);
        assert_eq!(ceil_log_lambda(4, 4), 1);
        assert_eq!(ceil_log_lambda(5, 4), 2);
        assert_eq!(ceil_log_lambda(256, 4), 4);
    }
}
