//! End-to-end solvers and the subsolver contracts the reduction drivers
//! compose against.
//!
//! Everything here consumes a proper initial coloring and an instance, and
//! produces a total coloring plus round/message accounting. Arbdefective
//! solvers additionally return the edge orientation they constructed.

use std::collections::BTreeMap;

use num_traits::One;
use thiserror::Error;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::{
    compute_slack, Color, Coloring, PaletteInstance, Q,
};
use crate::poly::ceil_root;
use crate::reduce;
use crate::report::RunReport;
use crate::sim::{
    self, LocalView, ModelBudget, NodeProgram, Payload, ProgramError, StepOutput, TraceDetail,
};
use crate::sweep::{fast_two_sweep, SweepError};
use crate::symmetry::{self, SymmetryError};
use crate::validate::ValidateError;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("{solver}: node {node} lacks the required slack ({requirement})")]
    SlackViolated {
        solver: String,
        node: NodeId,
        requirement: String,
    },
    #[error("node {node}: list has {len} colors but degree+1 = {needed}")]
    ListTooSmall {
        node: NodeId,
        len: usize,
        needed: usize,
    },
    #[error("node {node} has an empty color list")]
    EmptyList { node: NodeId },
    #[error("this algorithm needs an input orientation")]
    MissingOrientation,
    #[error("color-space reduction failed at level {level}: {source}")]
    AtLevel {
        level: usize,
        source: Box<SolveError>,
    },
    #[error("subsolver failed at iteration {iteration}: {source}")]
    Subsolver {
        iteration: usize,
        source: Box<SolveError>,
    },
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error("contract violated: {0}")]
    Contract(String),
}

/// Simulation knobs shared by every solver.
#[derive(Debug, Clone, Copy)]
pub struct SolveCfg {
    pub budget: ModelBudget,
    pub detail: TraceDetail,
}

impl Default for SolveCfg {
    fn default() -> Self {
        SolveCfg {
            budget: ModelBudget::Local,
            detail: TraceDetail::Aggregate,
        }
    }
}

/// A list (arb)defective coloring task: graph, proper initial coloring and
/// the palette instance. `theta` is the trusted neighborhood independence,
/// used only by the solvers that need it.
#[derive(Debug, Clone, Copy)]
pub struct ArbdefProblem<'a> {
    pub graph: &'a Graph,
    pub init: &'a [u64],
    pub q: u64,
    pub instance: &'a PaletteInstance,
    pub theta: usize,
}

/// Output of an arbdefective solver: total coloring plus the orientation it
/// committed to.
#[derive(Debug, Clone)]
pub struct ArbdefOutcome {
    pub coloring: Vec<Color>,
    pub orientation: Orientation,
    pub report: RunReport,
}

impl ArbdefOutcome {
    pub fn into_coloring(self) -> Coloring {
        Coloring::total(self.coloring).with_orientation(self.orientation)
    }
}

/// Output of a (plain, undirected) list defective solver.
#[derive(Debug, Clone)]
pub struct DefectiveOutcome {
    pub coloring: Vec<Color>,
    pub report: RunReport,
}

/// Solves list arbdefective instances whose slack strictly exceeds
/// `required_slack`.
pub trait ArbdefSolver {
    fn label(&self) -> String;
    fn required_slack(&self, prob: &ArbdefProblem<'_>) -> Q;
    fn solve(&self, prob: &ArbdefProblem<'_>, cfg: &SolveCfg) -> Result<ArbdefOutcome, SolveError>;
}

/// Solves (undirected) list defective instances whose slack strictly exceeds
/// `required_slack`.
pub trait DefectiveSolver {
    fn label(&self) -> String;
    fn required_slack(&self, prob: &ArbdefProblem<'_>) -> Q;
    fn solve(
        &self,
        prob: &ArbdefProblem<'_>,
        cfg: &SolveCfg,
    ) -> Result<DefectiveOutcome, SolveError>;
}

/// Solves oriented list defective instances; `kappa(Λ)` is the slack
/// multiplier it requires at maximum list size `Λ` (`Σ(d+1) > κ(Λ)·β_v`).
pub trait OldcSolver {
    fn label(&self) -> String;
    fn kappa(&self, max_list: u64) -> Q;
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        graph: &Graph,
        orientation: &Orientation,
        init: &[u64],
        q: u64,
        instance: &PaletteInstance,
        cfg: &SolveCfg,
    ) -> Result<(Coloring, RunReport), SolveError>;
}

/// `1..=n` as an initial coloring (unique ids are trivially proper).
pub fn ids_coloring(n: usize) -> Vec<u64> {
    (1..=n as u64).collect()
}

pub(crate) fn check_nonempty_lists(instance: &PaletteInstance) -> Result<(), SolveError> {
    match (0..instance.n()).find(|&v| instance.list_len(v) == 0) {
        Some(node) => Err(SolveError::EmptyList { node }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Sequential greedy over color classes
// ---------------------------------------------------------------------------

/// Greedy program: class `c` activates at round `c-1`, picks a listed color
/// whose consumed defect stays within bounds, announces it and decides.
struct GreedyProgram {
    class: u64,
    list: Vec<(Color, u32)>,
    space: u64,
    consumed: BTreeMap<Color, u32>,
    neighbors: Vec<NodeId>,
}

impl NodeProgram for GreedyProgram {
    fn init(&mut self, view: &LocalView<'_>) {
        self.neighbors = view.neighbors.to_vec();
    }

    fn step(
        &mut self,
        round: usize,
        inbox: &[(NodeId, Payload)],
    ) -> Result<StepOutput, ProgramError> {
        for (_, payload) in inbox {
            if let Payload::FinalColor { color, .. } = payload {
                if self.list.binary_search_by_key(color, |&(c, _)| c).is_ok() {
                    *self.consumed.entry(*color).or_insert(0) += 1;
                }
            }
        }
        if round + 1 == self.class as usize {
            // pigeonhole: Σ(d+1) > deg ≥ Σ consumed leaves a feasible color
            let choice = self
                .list
                .iter()
                .filter_map(|&(x, d)| {
                    let used = self.consumed.get(&x).copied().unwrap_or(0);
                    (used <= d).then_some((d as i64 - used as i64, x))
                })
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            let (_, x) = choice.ok_or(ProgramError::NoFeasibleColor)?;
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

/// Sequential greedy arbdefective coloring: iterates the color classes of
/// the initial coloring; every node picks a color whose defect allowance is
/// not yet consumed by earlier-colored neighbors. Edges are oriented toward
/// the earlier-colored endpoint. Needs slack strictly above 1.
pub fn greedy_sequential_arbdef(
    prob: &ArbdefProblem<'_>,
    cfg: &SolveCfg,
) -> Result<ArbdefOutcome, SolveError> {
    let ArbdefProblem {
        graph,
        init,
        q,
        instance,
        ..
    } = *prob;
    symmetry::check_proper_coloring(graph, init, q)?;
    check_nonempty_lists(instance)?;
    if !compute_slack(graph, instance, Q::one()).strict {
        let node = (0..graph.n())
            .find(|&v| instance.defect_mass(v) <= graph.degree(v) as u128)
            .unwrap_or(0);
        return Err(SolveError::SlackViolated {
            solver: "greedy".into(),
            node,
            requirement: "slack > 1".into(),
        });
    }
    let programs: Vec<Box<dyn NodeProgram>> = (0..graph.n())
        .map(|v| {
            Box::new(GreedyProgram {
                class: init[v],
                list: instance.list(v).to_vec(),
                space: instance.color_space(),
                consumed: BTreeMap::new(),
                neighbors: Vec::new(),
            }) as Box<dyn NodeProgram>
        })
        .collect();
    let trace = sim::run(
        graph,
        None,
        programs,
        cfg.budget,
        sim::default_max_rounds(q, 0),
        cfg.detail,
    )?;
    let coloring: Vec<Color> = (0..graph.n())
        .map(|v| trace.decision(v).expect("greedy decides everywhere") as Color)
        .collect();
    // earlier class = colored earlier: orient toward it
    let orientation = Orientation::from_ranks(graph, |v| init[v]);
    let mut report = RunReport::default();
    report.absorb_trace("greedy", &trace);
    Ok(ArbdefOutcome {
        coloring,
        orientation,
        report,
    })
}

/// Greedy as a composable subsolver (requires slack > 1).
pub struct GreedySolver;

impl ArbdefSolver for GreedySolver {
    fn label(&self) -> String {
        "greedy".into()
    }

    fn required_slack(&self, _prob: &ArbdefProblem<'_>) -> Q {
        Q::one()
    }

    fn solve(&self, prob: &ArbdefProblem<'_>, cfg: &SolveCfg) -> Result<ArbdefOutcome, SolveError> {
        greedy_sequential_arbdef(prob, cfg)
    }
}

/// Uses `preferred` whenever the instance passes its declared slack
/// requirement, greedy otherwise. The reduction drivers hand out instances
/// whose slack is provably above 1 but not always above the preferred
/// solver's constant, so validity never depends on the preferred path.
pub struct FallbackArbdef<'a> {
    pub preferred: &'a dyn ArbdefSolver,
}

impl ArbdefSolver for FallbackArbdef<'_> {
    fn label(&self) -> String {
        format!("{}-or-greedy", self.preferred.label())
    }

    fn required_slack(&self, _prob: &ArbdefProblem<'_>) -> Q {
        Q::one()
    }

    fn solve(&self, prob: &ArbdefProblem<'_>, cfg: &SolveCfg) -> Result<ArbdefOutcome, SolveError> {
        let wanted = self.preferred.required_slack(prob);
        if compute_slack(prob.graph, prob.instance, wanted).strict {
            self.preferred.solve(prob, cfg)
        } else {
            greedy_sequential_arbdef(prob, cfg)
        }
    }
}

// ---------------------------------------------------------------------------
// Theorem-2-style CONGEST OLDC solver
// ---------------------------------------------------------------------------

/// `⌈log₄ x⌉` for `x ≥ 1`.
pub fn ceil_log4(x: u128) -> u32 {
    let mut l = 0u32;
    let mut acc: u128 = 1;
    while acc < x {
        acc = acc.saturating_mul(4);
        l += 1;
    }
    l
}

/// Fast Two-Sweep packaged as a composable OLDC solver with
/// `p = ⌈√Λ⌉`, so `κ(Λ) = (1+ε)·max{p, Λ/p}`.
pub struct FastSweepSolver {
    pub eps: Q,
}

impl OldcSolver for FastSweepSolver {
    fn label(&self) -> String {
        format!("fast-two-sweep(eps={})", self.eps)
    }

    fn kappa(&self, max_list: u64) -> Q {
        let p = ceil_root(max_list.max(1) as u128, 2).max(1);
        let p_q = Q::from_integer(p as u128);
        let ratio = Q::from_integer(max_list.max(1) as u128) / p_q;
        let stake = if p_q >= ratio { p_q } else { ratio };
        (Q::one() + self.eps) * stake
    }

    fn solve(
        &self,
        graph: &Graph,
        orientation: &Orientation,
        init: &[u64],
        q: u64,
        instance: &PaletteInstance,
        cfg: &SolveCfg,
    ) -> Result<(Coloring, RunReport), SolveError> {
        let p = ceil_root(instance.max_list_len().max(1) as u128, 2).max(1) as u32;
        let out = fast_two_sweep(
            graph,
            orientation,
            init,
            q,
            instance,
            p,
            self.eps,
            cfg.budget,
            cfg.detail,
        )?;
        Ok((out.coloring, out.report))
    }
}

/// CONGEST OLDC solver: Fast Two-Sweep with `p = ⌈√Λ⌉` and
/// `ε = 1/(3·⌈log₄ C⌉)` inside a color-space reduction with splitting
/// parameter 4. Needs `Σ(d_v(x)+1) ≥ 3·√C·β_v` on every node; messages stay
/// within `O(log q + log C)` bits.
pub fn oldc_congest(
    graph: &Graph,
    orientation: &Orientation,
    init: &[u64],
    q: u64,
    instance: &PaletteInstance,
    cfg: &SolveCfg,
) -> Result<(Coloring, RunReport), SolveError> {
    let c_space = instance.color_space() as u128;
    // Σ ≥ 3·√C·β_v  ⟺  Σ² ≥ 9·C·β_v² (everything non-negative)
    if let Some(node) = (0..graph.n()).find(|&v| {
        let mass = instance.defect_mass(v);
        let beta = orientation.beta(v) as u128;
        mass * mass < 9 * c_space * beta * beta
    }) {
        return Err(SolveError::SlackViolated {
            solver: "oldc-congest".into(),
            node,
            requirement: format!("Σ(d+1) ≥ 3·√{c_space}·β_v"),
        });
    }
    let eps = Q::new(1, 3 * ceil_log4(c_space).max(1) as u128);
    let solver = FastSweepSolver { eps };
    reduce::oriented_color_space_reduction(graph, orientation, init, q, instance, 4, &solver, cfg)
}

// ---------------------------------------------------------------------------
// deg+1 list coloring baseline
// ---------------------------------------------------------------------------

/// Proper list coloring with lists of size at least `deg(v)+1`: a log*-style
/// reduction of the node ids followed by the sequential greedy, i.e. the
/// `O(Δ² + log* n)`-flavored baseline.
pub fn deg_plus_one_list_coloring(
    graph: &Graph,
    instance: &PaletteInstance,
    cfg: &SolveCfg,
) -> Result<(Coloring, RunReport), SolveError> {
    if let Some(node) =
        (0..graph.n()).find(|&v| instance.list_len(v) < graph.degree(v) + 1)
    {
        return Err(SolveError::ListTooSmall {
            node,
            len: instance.list_len(node),
            needed: graph.degree(node) + 1,
        });
    }
    let mut report = RunReport::default();
    let ids = ids_coloring(graph.n());
    let reduced = symmetry::linial_coloring(graph, &ids, graph.n() as u64, cfg.budget, cfg.detail)?;
    report.absorb_trace("linial", &reduced.trace);
    let prob = ArbdefProblem {
        graph,
        init: &reduced.coloring,
        q: reduced.colors as u64,
        instance,
        theta: 1,
    };
    let greedy = greedy_sequential_arbdef(&prob, cfg)?;
    report.absorb_report("greedy", greedy.report);
    Ok((
        Coloring::total(greedy.coloring).with_orientation(greedy.orientation),
        report,
    ))
}

// ---------------------------------------------------------------------------
// Bounded neighborhood independence pipeline
// ---------------------------------------------------------------------------

/// Recursive solver for slack-2 instances over a shrinking color space:
/// a slack reduction up to `84·θ·⌈log Δ⌉`, the combining step, then
/// recursion on the `⌈√C⌉`-sized space. At depth 0 (or once the space is
/// tiny) the base case runs: the CONGEST OLDC solver under the
/// initial-coloring orientation when the slack admits it, the greedy
/// otherwise.
struct RecursiveTwoSolver {
    depth: u32,
}

impl RecursiveTwoSolver {
    fn base_case(
        &self,
        prob: &ArbdefProblem<'_>,
        cfg: &SolveCfg,
    ) -> Result<ArbdefOutcome, SolveError> {
        // orientation the greedy would produce: toward the smaller class
        let orientation = Orientation::from_ranks(prob.graph, |v| prob.init[v]);
        let c_space = prob.instance.color_space() as u128;
        let oriented_ok = prob.graph.n() > 0
            && (0..prob.graph.n()).all(|v| {
                let mass = prob.instance.defect_mass(v);
                let beta = orientation.beta(v) as u128;
                mass * mass >= 9 * c_space * beta * beta
            });
        if oriented_ok {
            let (coloring, report) = oldc_congest(
                prob.graph,
                &orientation,
                prob.init,
                prob.q,
                prob.instance,
                cfg,
            )?;
            let colors = coloring
                .assignment
                .iter()
                .map(|c| c.expect("total"))
                .collect();
            return Ok(ArbdefOutcome {
                coloring: colors,
                orientation,
                report,
            });
        }
        greedy_sequential_arbdef(prob, cfg)
    }
}

impl ArbdefSolver for RecursiveTwoSolver {
    fn label(&self) -> String {
        format!("recurse(depth={})", self.depth)
    }

    fn required_slack(&self, _prob: &ArbdefProblem<'_>) -> Q {
        Q::from_integer(2)
    }

    fn solve(&self, prob: &ArbdefProblem<'_>, cfg: &SolveCfg) -> Result<ArbdefOutcome, SolveError> {
        if prob.graph.n() == 0 {
            return Ok(ArbdefOutcome {
                coloring: Vec::new(),
                orientation: Orientation::symmetric(prob.graph),
                report: RunReport::default(),
            });
        }
        if self.depth == 0 || prob.instance.color_space() <= 4 {
            return self.base_case(prob, cfg);
        }
        let next = RecursiveTwoSolver {
            depth: self.depth - 1,
        };
        let combiner = CombiningSolver { inner: &next };
        let mu = combiner.required_mu(prob.graph, prob.theta);
        reduce::slack_reduction_2(prob, mu, &combiner, cfg)
    }
}

/// The combining step as a composable solver: color-space reduction to
/// `⌈√C⌉` parts with `σ = 42·θ·⌈log Δ⌉`, subspace choice solved by the
/// defective-from-arbdefective conversion, residual parts by `inner`.
struct CombiningSolver<'a> {
    inner: &'a dyn ArbdefSolver,
}

impl CombiningSolver<'_> {
    fn required_mu(&self, graph: &Graph, theta: usize) -> u64 {
        let lg = ceil_log2(graph.delta() as u64);
        84 * theta as u64 * lg
    }
}

impl ArbdefSolver for CombiningSolver<'_> {
    fn label(&self) -> String {
        format!("combine>{}", self.inner.label())
    }

    fn required_slack(&self, prob: &ArbdefProblem<'_>) -> Q {
        Q::from_integer(self.required_mu(prob.graph, prob.theta) as u128)
    }

    fn solve(&self, prob: &ArbdefProblem<'_>, cfg: &SolveCfg) -> Result<ArbdefOutcome, SolveError> {
        reduce::combining(prob, self.inner, cfg)
    }
}

/// `⌈log₂ x⌉` for `x ≥ 1`.
pub fn ceil_log2(x: u64) -> u64 {
    match x {
        0 | 1 => 0,
        _ => (64 - (x - 1).leading_zeros()) as u64,
    }
}

/// `⌈log log C⌉` as used to pick the recursion depth.
pub fn recursion_depth_for(c_space: u64) -> u32 {
    ceil_log2(ceil_log2(c_space).max(1)).max(1) as u32
}

/// Outcome of the bounded-independence pipeline.
#[derive(Debug, Clone)]
pub struct BoundedThetaOutcome {
    pub coloring: Coloring,
    pub report: RunReport,
    pub depth_used: u32,
}

/// Solver for arbdefective instances with slack above 1 on graphs of
/// neighborhood independence `θ`: a log*-style initial coloring, a slack
/// reduction to 2, then the recursive combine-and-split pipeline. With
/// `depth = None` both candidate depths (1 and `⌈log log C⌉`) are run and
/// the one with fewer measured rounds wins.
pub fn bounded_independence_solver(
    graph: &Graph,
    instance: &PaletteInstance,
    theta: usize,
    depth: Option<u32>,
    cfg: &SolveCfg,
) -> Result<BoundedThetaOutcome, SolveError> {
    match depth {
        Some(d) => bounded_theta_at_depth(graph, instance, theta, d, cfg),
        None => {
            let shallow = bounded_theta_at_depth(graph, instance, theta, 1, cfg)?;
            let deep_depth = recursion_depth_for(instance.color_space());
            if deep_depth <= 1 {
                return Ok(shallow);
            }
            let deep = bounded_theta_at_depth(graph, instance, theta, deep_depth, cfg)?;
            Ok(if deep.report.rounds < shallow.report.rounds {
                deep
            } else {
                shallow
            })
        }
    }
}

fn bounded_theta_at_depth(
    graph: &Graph,
    instance: &PaletteInstance,
    theta: usize,
    depth: u32,
    cfg: &SolveCfg,
) -> Result<BoundedThetaOutcome, SolveError> {
    check_nonempty_lists(instance)?;
    if !compute_slack(graph, instance, Q::one()).strict {
        let node = (0..graph.n())
            .find(|&v| instance.defect_mass(v) <= graph.degree(v) as u128)
            .unwrap_or(0);
        return Err(SolveError::SlackViolated {
            solver: "bounded-theta".into(),
            node,
            requirement: "slack > 1".into(),
        });
    }
    let mut report = RunReport::default();
    let ids = ids_coloring(graph.n());
    let reduced = symmetry::linial_coloring(graph, &ids, graph.n() as u64, cfg.budget, cfg.detail)?;
    report.absorb_trace("linial", &reduced.trace);
    let prob = ArbdefProblem {
        graph,
        init: &reduced.coloring,
        q: reduced.colors as u64,
        instance,
        theta: theta.max(1),
    };
    let two = RecursiveTwoSolver { depth };
    let out = reduce::slack_reduction_1(&prob, 2, &two, cfg)?;
    report.absorb_report("slack1", out.report);
    Ok(BoundedThetaOutcome {
        coloring: Coloring::total(out.coloring).with_orientation(out.orientation),
        report,
        depth_used: depth,
    })
}
