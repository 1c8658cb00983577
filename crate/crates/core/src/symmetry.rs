//! Building-block colorings: the log*-style proper color reduction and the
//! defective coloring black box, both driven by polynomial codes over prime
//! fields.
//!
//! Both algorithms iterate the same reduction step: encode the current color
//! as a polynomial, exchange colors, pick an evaluation point, and adopt
//! `(point, value)` as the new color in a space of size `p̂²`. The proper
//! variant sizes the field so a zero-conflict point always exists
//! (`p̂ ≥ k·Δ + 1`); the defective variant sizes it against a per-iteration
//! defect budget (`p̂ ≥ ⌈2k/ε_j⌉`).

use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::Q;
use crate::poly::{ceil_root, choose_evaluation_point, next_prime, PolynomialCode};
use crate::sim::{
    self, LocalView, ModelBudget, NodeProgram, Payload, ProgramError, RoundTrace, StepOutput,
    TraceDetail,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymmetryError {
    #[error("initial coloring is not proper: edge ({0}, {1}) is monochromatic")]
    ImproperInput(NodeId, NodeId),
    #[error("initial coloring uses color {0} outside 1..={1}")]
    InitialColorOutOfRange(u64, u64),
    #[error("alpha must be positive")]
    NonPositiveAlpha,
    #[error("simulation failed: {0}")]
    Sim(#[from] sim::SimError),
}

/// One iteration of a reduction schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    /// Color-space size entering the iteration.
    pub m_in: u128,
    /// Field size `p̂` (prime).
    pub prime: u64,
    /// Degree bound `k` (codes have `k+1` coefficients).
    pub degree: u32,
    /// Color-space size after the iteration: `p̂²`.
    pub m_out: u128,
}

/// The precomputed iteration list of a color reduction, depending only on
/// `(q, Δ)` for the proper variant and `(q, α)` for the defective one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionSchedule {
    pub q: u128,
    pub steps: Vec<ScheduleStep>,
    /// Color count after the last iteration (`q` if no iteration runs).
    pub final_colors: u128,
    /// Per-iteration defect budget (`None` for the proper variant).
    pub eps_per_iteration: Option<Q>,
}

impl ReductionSchedule {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum FieldBound {
    /// `p̂ ≥ k·Δ + 1`: a zero-conflict point exists under a proper coloring.
    Proper { delta: u64 },
    /// `p̂ ≥ ⌈2k/ε⌉`: per-iteration conflicts at most `(ε/2)·β_v`.
    Defect { eps: Q },
}

impl FieldBound {
    fn lower(&self, k: u32) -> u64 {
        match *self {
            FieldBound::Proper { delta } => k as u64 * delta + 1,
            FieldBound::Defect { eps } => {
                // ceil(2k / eps) = ceil(2k * den / num)
                let num = *eps.numer();
                let den = *eps.denom();
                let t = 2u128 * k as u128 * den;
                ((t + num - 1) / num) as u64
            }
        }
    }
}

/// Picks the degree bound `k` and prime `p̂` for one reduction step of a
/// space of size `m`: the smallest feasible field over all degrees, where
/// feasible means `p̂ ≥ max(bound(k), k+1, ⌈m^(1/(k+1))⌉)` (so codes are
/// injective and the conflict budget holds). Smallest `p̂` wins, smallest
/// `k` on ties.
fn pick_field(m: u128, bound: FieldBound) -> (u64, u32) {
    // raw lower bound per degree; the prime search happens only near the
    // minimum, so huge infeasible candidates never hit trial division
    let raw = |k: u32| -> u64 {
        bound
            .lower(k)
            .max(k as u64 + 1)
            .max(ceil_root(m, k + 1))
    };
    let raws: Vec<u64> = (1..=128).map(raw).collect();
    let min_raw = *raws.iter().min().expect("nonempty");
    let ceiling = next_prime(min_raw);
    let mut best: Option<(u64, u32)> = None;
    for (i, &r) in raws.iter().enumerate() {
        if r > ceiling {
            continue; // next_prime(r) ≥ r > ceiling ≥ best
        }
        let p = next_prime(r);
        if best.is_none_or(|(bp, _)| p < bp) {
            best = Some((p, i as u32 + 1));
        }
    }
    best.expect("at least one degree is feasible")
}

fn schedule_for(q: u128, bound: FieldBound) -> Vec<ScheduleStep> {
    let mut steps = Vec::new();
    let mut m = q;
    while m > 1 && steps.len() < 64 {
        let (prime, degree) = pick_field(m, bound);
        let m_out = (prime as u128) * (prime as u128);
        if m_out >= m {
            break;
        }
        steps.push(ScheduleStep {
            m_in: m,
            prime,
            degree,
            m_out,
        });
        m = m_out;
    }
    steps
}

/// Iteration schedule for the proper (log*-style) color reduction.
pub fn linial_schedule(q: u128, delta: u64) -> ReductionSchedule {
    let steps = schedule_for(q, FieldBound::Proper { delta });
    let final_colors = steps.last().map_or(q, |s| s.m_out);
    ReductionSchedule {
        q,
        steps,
        final_colors,
        eps_per_iteration: None,
    }
}

/// Iteration schedule for the defective reduction with total budget `alpha`.
///
/// The schedule length `J` is fixed up front and every iteration gets the
/// even share `ε_j = α/J`; `J` is found by iterating "guess `J`, recompute"
/// until the computed length no longer exceeds the guess (unused share is
/// simply unspent budget).
pub fn defective_schedule(q: u128, alpha: Q) -> ReductionSchedule {
    assert!(alpha > Q::zero() && alpha < Q::one());
    let mut guess = 1u128;
    loop {
        let eps = alpha / Q::from_integer(guess);
        let steps = schedule_for(q, FieldBound::Defect { eps });
        if steps.len() as u128 <= guess {
            let final_colors = steps.last().map_or(q, |s| s.m_out);
            return ReductionSchedule {
                q,
                steps,
                final_colors,
                eps_per_iteration: Some(eps),
            };
        }
        guess = steps.len() as u128;
    }
}

/// Palette-size bound of [`defective_coloring`] for a given `(q, α)`: the
/// exact schedule fixpoint.
pub fn defective_color_bound(q: u128, alpha: Q) -> u128 {
    if alpha >= Q::one() {
        return 1;
    }
    defective_schedule(q, alpha).final_colors.min(q)
}

/// Palette-size bound of [`linial_coloring`] for a given `(q, Δ)`: the exact
/// schedule fixpoint, at most `8·Δ²` on every measured configuration.
pub fn linial_color_bound(q: u128, delta: u64) -> u128 {
    linial_schedule(q, delta).final_colors
}

/// Measured desk-scale envelope for the defective palette size:
/// `K(α) = 128·(⌈log₂(1/α)⌉ + 1) / α²`. The `O(1/α²)` of the underlying
/// constructions holds up to this logarithmic factor, which the even budget
/// split costs; the constant 128 covers all `q ≤ 2^64`, `α ≥ 1/64`.
pub fn defective_color_envelope(alpha: Q) -> u128 {
    if alpha >= Q::one() {
        return 1;
    }
    let num = *alpha.numer();
    let den = *alpha.denom();
    // L = ceil(log2(1/alpha)): smallest L with 2^L * num >= den
    let mut l = 0u32;
    while (1u128 << l) * num < den {
        l += 1;
    }
    let frac = den * den / (num * num) + u128::from(den * den % (num * num) != 0);
    128 * (l as u128 + 1) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReduceMode {
    /// Zero conflicts against all neighbors (proper output).
    ProperAllNeighbors,
    /// Minimize conflicts against outneighbors.
    DefectiveOutNeighbors,
}

/// Node program executing a reduction schedule: one broadcast round per
/// iteration, decision after the last.
struct ReduceProgram {
    schedule: Arc<ReductionSchedule>,
    mode: ReduceMode,
    /// 0-based current color.
    current: u128,
    neighbors: Vec<NodeId>,
    out_neighbors: Vec<NodeId>,
}

impl ReduceProgram {
    fn new(schedule: Arc<ReductionSchedule>, mode: ReduceMode, initial_color: u64) -> Self {
        ReduceProgram {
            schedule,
            mode,
            current: initial_color as u128 - 1,
            neighbors: Vec::new(),
            out_neighbors: Vec::new(),
        }
    }

    fn space_at(&self, iteration: usize) -> u128 {
        self.schedule.steps[iteration].m_in
    }
}

impl NodeProgram for ReduceProgram {
    fn init(&mut self, view: &LocalView<'_>) {
        self.neighbors = view.neighbors.to_vec();
        self.out_neighbors = view.out_neighbors.to_vec();
    }

    fn step(
        &mut self,
        round: usize,
        inbox: &[(NodeId, Payload)],
    ) -> Result<StepOutput, ProgramError> {
        let total = self.schedule.len();
        if total == 0 {
            return Ok(StepOutput::decide(self.current as u64 + 1));
        }
        if round > 0 {
            // apply iteration round-1 using the colors received
            let step = &self.schedule.steps[round - 1];
            let relevant: &[NodeId] = match self.mode {
                ReduceMode::ProperAllNeighbors => &self.neighbors,
                ReduceMode::DefectiveOutNeighbors => &self.out_neighbors,
            };
            let mut others = Vec::new();
            for (from, payload) in inbox {
                if let Payload::InitialColor { color, .. } = payload {
                    if relevant.binary_search(from).is_ok() {
                        others.push(PolynomialCode::encode(
                            *color as u128,
                            step.prime,
                            step.degree,
                        ));
                    }
                }
            }
            let own = PolynomialCode::encode(self.current, step.prime, step.degree);
            let point = choose_evaluation_point(&own, &others);
            if self.mode == ReduceMode::ProperAllNeighbors
                && own.conflicts_at(point, &others) > 0
            {
                return Err(ProgramError::NoZeroConflictPoint);
            }
            self.current = point as u128 * step.prime as u128 + own.eval(point) as u128;
            if round == total {
                return Ok(StepOutput::decide(self.current as u64 + 1));
            }
        }
        // broadcast the color entering iteration `round`
        Ok(StepOutput::broadcast(
            &self.neighbors,
            Payload::InitialColor {
                color: self.current as u64,
                q: self.space_at(round) as u64 - 1,
            },
        ))
    }
}

/// Rejects colorings that are out of range or have monochromatic edges.
pub(crate) fn check_proper_coloring(
    graph: &Graph,
    coloring: &[u64],
    q: u64,
) -> Result<(), SymmetryError> {
    for (v, &c) in coloring.iter().enumerate() {
        if c == 0 || c > q {
            return Err(SymmetryError::InitialColorOutOfRange(c, q));
        }
        for &u in graph.neighbors(v) {
            if coloring[u] == c {
                return Err(SymmetryError::ImproperInput(v.min(u), v.max(u)));
            }
        }
    }
    Ok(())
}

/// Output of the symmetry-breaking drivers: a coloring in `1..=colors` plus
/// the trace of the run that produced it.
#[derive(Debug, Clone)]
pub struct RecoloringOutcome {
    pub coloring: Vec<u64>,
    pub colors: u128,
    pub trace: RoundTrace,
}

fn run_reduction(
    graph: &Graph,
    orientation: Option<&Orientation>,
    schedule: ReductionSchedule,
    mode: ReduceMode,
    initial: &[u64],
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<RecoloringOutcome, SymmetryError> {
    let colors = schedule.final_colors;
    let schedule = Arc::new(schedule);
    let programs: Vec<Box<dyn NodeProgram>> = initial
        .iter()
        .map(|&c| Box::new(ReduceProgram::new(schedule.clone(), mode, c)) as Box<dyn NodeProgram>)
        .collect();
    let max_rounds = sim::default_max_rounds(schedule.len() as u64, 0);
    let trace = sim::run(graph, orientation, programs, budget, max_rounds, detail)?;
    let coloring = (0..graph.n())
        .map(|v| trace.decision(v).expect("all nodes decide"))
        .collect();
    Ok(RecoloringOutcome {
        coloring,
        colors,
        trace,
    })
}

/// Proper color reduction: from a proper `q`-coloring to a proper coloring
/// with the schedule's fixpoint count, in one round per schedule iteration.
/// If `q` is already at the fixpoint the input passes through unchanged in
/// 0 rounds.
///
/// The fixpoint is `next_prime(2Δ+1)²`: the last productive step needs
/// degree 2, whose zero-conflict field must have `p̂ ≥ 2Δ+1`. Measured over
/// `Δ ≤ 64` this stays below `8·Δ²` (see [`linial_color_bound`]).
pub fn linial_coloring(
    graph: &Graph,
    initial: &[u64],
    q: u64,
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<RecoloringOutcome, SymmetryError> {
    check_proper_coloring(graph, initial, q)?;
    let schedule = linial_schedule(q as u128, graph.delta() as u64);
    run_reduction(
        graph,
        None,
        schedule,
        ReduceMode::ProperAllNeighbors,
        initial,
        budget,
        detail,
    )
}

/// Defective coloring black box: every node ends with at most `α·β_v`
/// outneighbors of its own color, using at most
/// [`defective_color_bound`]`(q, α)` colors, in one round per schedule
/// iteration (`O(log* q)`).
pub fn defective_coloring(
    graph: &Graph,
    orientation: &Orientation,
    alpha: Q,
    initial: &[u64],
    q: u64,
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<RecoloringOutcome, SymmetryError> {
    defective_impl(graph, Some(orientation), alpha, initial, q, budget, detail)
}

/// Undirected variant: at most `α·deg(v)` neighbors share the color. Runs
/// the same machinery with every node treating all neighbors as
/// outneighbors.
pub fn defective_coloring_undirected(
    graph: &Graph,
    alpha: Q,
    initial: &[u64],
    q: u64,
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<RecoloringOutcome, SymmetryError> {
    let symmetric = Orientation::symmetric(graph);
    defective_impl(graph, Some(&symmetric), alpha, initial, q, budget, detail)
}

fn defective_impl(
    graph: &Graph,
    orientation: Option<&Orientation>,
    alpha: Q,
    initial: &[u64],
    q: u64,
    budget: ModelBudget,
    detail: TraceDetail,
) -> Result<RecoloringOutcome, SymmetryError> {
    if alpha <= Q::zero() {
        return Err(SymmetryError::NonPositiveAlpha);
    }
    check_proper_coloring(graph, initial, q)?;
    if alpha >= Q::one() {
        // the defect bound α·β_v is vacuous: one color suffices
        let schedule = ReductionSchedule {
            q: q as u128,
            steps: Vec::new(),
            final_colors: 1,
            eps_per_iteration: Some(alpha),
        };
        let ones = vec![1u64; graph.n()];
        return run_reduction(
            graph,
            orientation,
            schedule,
            ReduceMode::DefectiveOutNeighbors,
            &ones,
            budget,
            detail,
        );
    }
    let schedule = defective_schedule(q as u128, alpha);
    run_reduction(
        graph,
        orientation,
        schedule,
        ReduceMode::DefectiveOutNeighbors,
        initial,
        budget,
        detail,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::q as rat;

    #[test]
    fn linial_schedule_is_identity_when_already_small() {
        // q = 6, delta = 2: fixpoint is 9 >= 6, so no iteration runs
        let s = linial_schedule(6, 2);
        assert!(s.is_empty());
        assert_eq!(s.final_colors, 6);
    }

    #[test]
    fn linial_schedule_stabilizes_fast_from_huge_id_spaces() {
        // 2^64-scale id space, delta = 4: at most 6 iterations
        let s = linial_schedule(1u128 << 64, 4);
        assert!(!s.is_empty());
        assert!(s.len() <= 6, "schedule took {} iterations", s.len());
        // fixpoint is next_prime(2·4+1)² = 121, within the 8·Δ² envelope
        assert_eq!(s.final_colors, 121);
        for w in s.steps.windows(2) {
            assert_eq!(w[0].m_out, w[1].m_in);
        }
    }

    #[test]
    fn linial_fixpoint_stays_under_eight_delta_squared() {
        for delta in 2u64..=64 {
            let fixpoint = linial_color_bound(1u128 << 64, delta);
            assert!(
                fixpoint <= 8 * (delta as u128) * (delta as u128),
                "delta={delta}: fixpoint {fixpoint}"
            );
        }
    }

    #[test]
    fn schedule_length_grows_by_at_most_one_when_bits_double() {
        // start above the fixpoints so every schedule is in its shrinking
        // regime
        for delta in [2u64, 4, 10] {
            let mut prev = linial_schedule(1 << 16, delta).len();
            for bits in [32u32, 64, 127] {
                let cur = linial_schedule(1u128 << bits, delta).len();
                assert!(
                    cur <= prev + 1,
                    "delta={delta} bits={bits}: {prev} -> {cur}"
                );
                prev = cur;
            }
        }
        for alpha in [rat(1, 2), rat(1, 4), rat(1, 8)] {
            let mut prev = defective_schedule(1 << 16, alpha).len();
            for bits in [32u32, 64, 127] {
                let cur = defective_schedule(1u128 << bits, alpha).len();
                assert!(cur <= prev + 1, "alpha={alpha} bits={bits}: {prev} -> {cur}");
                prev = cur;
            }
        }
    }

    #[test]
    fn defective_schedule_spends_at_most_alpha() {
        for alpha in [rat(1, 2), rat(1, 4), rat(1, 8), rat(1, 64)] {
            for q in [64u128, 1 << 16, 1 << 32, 1 << 63] {
                let s = defective_schedule(q, alpha);
                if let Some(eps) = s.eps_per_iteration {
                    assert!(eps * Q::from_integer(s.len() as u128) <= alpha);
                }
                assert!(
                    s.final_colors <= defective_color_envelope(alpha).max(q),
                    "q={q} alpha={alpha}: {} colors",
                    s.final_colors
                );
            }
        }
    }

    #[test]
    fn six_cycle_with_ids_reduces_to_a_proper_coloring() {
        let g = Graph::from_edges(
            6,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
        )
        .unwrap();
        let ids: Vec<u64> = (1..=6).collect();
        let out = linial_coloring(&g, &ids, 6, ModelBudget::Local, TraceDetail::Full).unwrap();
        for (u, v) in g.edges() {
            assert_ne!(out.coloring[u], out.coloring[v]);
        }
        // q = 6 is already at the fixpoint for delta = 2: identity, 0 rounds
        assert_eq!(out.trace.rounds_elapsed, 0);
        assert_eq!(out.coloring, ids);
    }

    #[test]
    fn linial_rejects_improper_input() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let err = linial_coloring(&g, &[3, 3], 5, ModelBudget::Local, TraceDetail::Aggregate);
        assert_eq!(err.unwrap_err(), SymmetryError::ImproperInput(0, 1));
    }

    #[test]
    fn alpha_one_means_one_color_zero_rounds() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let o = Orientation::from_ranks(&g, |v| v as u64);
        let ids: Vec<u64> = (1..=3).collect();
        let out = defective_coloring(
            &g,
            &o,
            rat(1, 1),
            &ids,
            3,
            ModelBudget::Local,
            TraceDetail::Full,
        )
        .unwrap();
        assert!(out.coloring.iter().all(|&c| c == 1));
        assert_eq!(out.colors, 1);
        assert_eq!(out.trace.rounds_elapsed, 0);
        assert!(out.trace.log.is_empty());
    }
}
