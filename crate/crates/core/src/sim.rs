//! Deterministic lock-step message-passing simulator with round counting and
//! per-message bit accounting.
//!
//! Rounds are 0-based. Messages put in the outbox at round `r` arrive in the
//! inboxes of round `r + 1`; the round-0 inbox is empty. A node that emits a
//! decision at round `r` has terminated after `r` communication rounds and is
//! inert afterwards. `rounds_elapsed` is the maximum decision round.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::Color;

/// `⌈log₂(x+1)⌉`: bits to encode a value in `0..=x` (0 for x = 0).
pub fn bits_for(x: u64) -> u64 {
    (64 - x.leading_zeros()) as u64
}

/// Message payloads with canonical bit sizes.
///
/// Each variant carries the parameters of its encoding so the size can always
/// be recomputed from the payload alone:
/// a color out of a space of size `C` takes `⌈log₂(C+1)⌉` bits, an initial
/// color `⌈log₂(q+1)⌉` bits, and a sublist of `k` colors
/// `k·⌈log₂(C+1)⌉ + ⌈log₂(p+1)⌉` bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    /// A color of the (current) initial coloring, space `1..=q`.
    InitialColor { color: u64, q: u64 },
    /// A sublist of at most `p` colors from a space of size `space`.
    Sublist {
        colors: Vec<Color>,
        space: u64,
        p: u32,
    },
    /// A final color from a space of size `space`.
    FinalColor { color: Color, space: u64 },
    /// A chosen subspace index out of `parts` parts.
    SubspaceIndex { index: u32, parts: u32 },
    /// One-bit control token.
    Control { token: bool },
}

impl Payload {
    /// Canonical encoding length in bits; never self-reported by programs.
    pub fn encoded_bits(&self) -> u64 {
        match self {
            Payload::InitialColor { q, .. } => bits_for(*q),
            Payload::Sublist { colors, space, p } => {
                colors.len() as u64 * bits_for(*space) + bits_for(*p as u64)
            }
            Payload::FinalColor { space, .. } => bits_for(*space),
            Payload::SubspaceIndex { parts, .. } => bits_for(*parts as u64),
            Payload::Control { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::InitialColor { .. } => "initial_color",
            Payload::Sublist { .. } => "sublist",
            Payload::FinalColor { .. } => "final_color",
            Payload::SubspaceIndex { .. } => "subspace_index",
            Payload::Control { .. } => "control",
        }
    }
}

/// A payload with its computed size, as stored in traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub payload: Payload,
    pub bits: u64,
}

impl Message {
    pub fn new(payload: Payload) -> Self {
        let bits = payload.encoded_bits();
        Message { payload, bits }
    }
}

/// One directed message in the trace log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub round: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub payload: Payload,
    pub bits: u64,
}

/// LOCAL has unlimited messages; CONGEST caps every message at `bit_limit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelBudget {
    Local,
    Congest { bit_limit: u64 },
}

/// Whether to keep the full replayable message log or only the aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceDetail {
    Full,
    Aggregate,
}

/// The record of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Maximum decision round over all nodes (0 when everything decides
    /// without communicating).
    pub rounds_elapsed: usize,
    /// Per node: decided value and the round it was decided in.
    pub decisions: Vec<Option<(u64, usize)>>,
    /// Full message log (empty under [`TraceDetail::Aggregate`]).
    pub log: Vec<LoggedMessage>,
    pub total_messages: u64,
    pub max_message_bits: u64,
    pub total_bits: u64,
}

impl RoundTrace {
    pub fn decision(&self, v: NodeId) -> Option<u64> {
        self.decisions[v].map(|(value, _)| value)
    }
}

/// Aggregates of a trace, the shape exported as JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub rounds: usize,
    pub max_message_bits: u64,
    pub total_messages: u64,
}

pub fn metrics(trace: &RoundTrace) -> Metrics {
    Metrics {
        rounds: trace.rounds_elapsed,
        max_message_bits: trace.max_message_bits,
        total_messages: trace.total_messages,
    }
}

/// Errors raised by a node program itself (the simulator attributes them).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("no feasible color in the committed sublist")]
    NoFeasibleColor,
    #[error("sweep condition violated: {0}")]
    SweepConditionViolated(String),
    #[error("no conflict-free evaluation point exists")]
    NoZeroConflictPoint,
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error(
        "message of {bits} bits exceeds the CONGEST budget of {limit} bits \
         (round {round}, edge {from} -> {to})"
    )]
    BudgetExceeded {
        round: usize,
        from: NodeId,
        to: NodeId,
        bits: u64,
        limit: u64,
    },
    #[error("{undecided} nodes undecided after {max_rounds} rounds")]
    NonTermination {
        max_rounds: usize,
        undecided: usize,
        /// Everything observed up to the cutoff.
        trace: Box<RoundTrace>,
    },
    #[error("node {node} failed at round {round}: {source}")]
    Program {
        node: NodeId,
        round: usize,
        source: ProgramError,
    },
    #[error("expected one program per node: got {0} for {1} nodes")]
    WrongProgramCount(usize, usize),
}

/// What a node sees at initialization. Lists, defects and initial colors are
/// baked into the program by its factory; this only carries topology.
pub struct LocalView<'a> {
    pub node: NodeId,
    pub neighbors: &'a [NodeId],
    /// Empty when the run has no orientation.
    pub out_neighbors: &'a [NodeId],
}

/// What a node emits in one round.
#[derive(Debug, Default)]
pub struct StepOutput {
    /// Directed messages; targets must be neighbors.
    pub outbox: Vec<(NodeId, Payload)>,
    /// Deciding freezes the node: later steps are skipped.
    pub decision: Option<u64>,
}

impl StepOutput {
    pub fn silent() -> Self {
        StepOutput::default()
    }

    pub fn decide(value: u64) -> Self {
        StepOutput {
            outbox: Vec::new(),
            decision: Some(value),
        }
    }

    pub fn broadcast(neighbors: &[NodeId], payload: Payload) -> Self {
        StepOutput {
            outbox: neighbors.iter().map(|&u| (u, payload.clone())).collect(),
            decision: None,
        }
    }

    pub fn and_decide(mut self, value: u64) -> Self {
        self.decision = Some(value);
        self
    }
}

/// A per-node synchronous state machine. A node reads only its own state and
/// inbox; once it decides, its output never changes.
pub trait NodeProgram {
    fn init(&mut self, view: &LocalView<'_>);

    fn step(
        &mut self,
        round: usize,
        inbox: &[(NodeId, Payload)],
    ) -> Result<StepOutput, ProgramError>;
}

/// Runs the programs in lock-step until every node has decided, or
/// `max_rounds` steps have executed ([`SimError::NonTermination`]).
pub fn run(
    graph: &Graph,
    orientation: Option<&Orientation>,
    mut programs: Vec<Box<dyn NodeProgram>>,
    budget: ModelBudget,
    max_rounds: usize,
    detail: TraceDetail,
) -> Result<RoundTrace, SimError> {
    let n = graph.n();
    if programs.len() != n {
        return Err(SimError::WrongProgramCount(programs.len(), n));
    }
    let empty: &[NodeId] = &[];
    for (v, program) in programs.iter_mut().enumerate() {
        let view = LocalView {
            node: v,
            neighbors: graph.neighbors(v),
            out_neighbors: orientation.map_or(empty, |o| o.out_neighbors(v)),
        };
        program.init(&view);
    }

    let mut decisions: Vec<Option<(u64, usize)>> = vec![None; n];
    let mut undecided = n;
    let mut inboxes: Vec<Vec<(NodeId, Payload)>> = vec![Vec::new(); n];
    let mut log = Vec::new();
    let mut total_messages = 0u64;
    let mut max_message_bits = 0u64;
    let mut total_bits = 0u64;

    let mut round = 0usize;
    while undecided > 0 && round < max_rounds {
        let mut next_inboxes: Vec<Vec<(NodeId, Payload)>> = vec![Vec::new(); n];
        for v in 0..n {
            if decisions[v].is_some() {
                continue;
            }
            let out = programs[v]
                .step(round, &inboxes[v])
                .map_err(|source| SimError::Program {
                    node: v,
                    round,
                    source,
                })?;
            for (to, payload) in out.outbox {
                debug_assert!(graph.has_edge(v, to), "message to non-neighbor");
                let bits = payload.encoded_bits();
                if let ModelBudget::Congest { bit_limit } = budget {
                    if bits > bit_limit {
                        return Err(SimError::BudgetExceeded {
                            round,
                            from: v,
                            to,
                            bits,
                            limit: bit_limit,
                        });
                    }
                }
                total_messages += 1;
                total_bits += bits;
                max_message_bits = max_message_bits.max(bits);
                if matches!(detail, TraceDetail::Full) {
                    log.push(LoggedMessage {
                        round,
                        from: v,
                        to,
                        payload: payload.clone(),
                        bits,
                    });
                }
                next_inboxes[to].push((v, payload));
            }
            if let Some(value) = out.decision {
                decisions[v] = Some((value, round));
                undecided -= 1;
            }
        }
        // deterministic delivery order: by sender id
        for inbox in &mut next_inboxes {
            inbox.sort_by_key(|&(from, _)| from);
        }
        inboxes = next_inboxes;
        round += 1;
    }

    let rounds_elapsed = decisions
        .iter()
        .flatten()
        .map(|&(_, r)| r)
        .max()
        .unwrap_or(0);
    let trace = RoundTrace {
        rounds_elapsed,
        decisions,
        log,
        total_messages,
        max_message_bits,
        total_bits,
    };
    if undecided > 0 {
        return Err(SimError::NonTermination {
            max_rounds,
            undecided,
            trace: Box::new(trace),
        });
    }
    Ok(trace)
}

/// Generous livelock guard: `10·(q + (p/ε)² + 50)` rounds.
pub fn default_max_rounds(q: u64, p_over_eps_squared: u64) -> usize {
    let q = q.min(1 << 40) as usize;
    let poe = p_over_eps_squared.min(1 << 40) as usize;
    10 * (q + poe + 50)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct DecideAtInit(u64);

    impl NodeProgram for DecideAtInit {
        fn init(&mut self, _view: &LocalView<'_>) {}
        fn step(
            &mut self,
            _round: usize,
            _inbox: &[(NodeId, Payload)],
        ) -> Result<StepOutput, ProgramError> {
            Ok(StepOutput::decide(self.0))
        }
    }

    /// Broadcasts a control token every round, never decides.
    struct Echo {
        neighbors: Vec<NodeId>,
    }

    impl NodeProgram for Echo {
        fn init(&mut self, view: &LocalView<'_>) {
            self.neighbors = view.neighbors.to_vec();
        }
        fn step(
            &mut self,
            _round: usize,
            _inbox: &[(NodeId, Payload)],
        ) -> Result<StepOutput, ProgramError> {
            Ok(StepOutput::broadcast(
                &self.neighbors,
                Payload::Control { token: true },
            ))
        }
    }

    #[test]
    fn immediate_decision_is_zero_rounds_and_empty_log() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let trace = run(
            &g,
            None,
            vec![Box::new(DecideAtInit(7))],
            ModelBudget::Local,
            10,
            TraceDetail::Full,
        )
        .unwrap();
        assert_eq!(trace.rounds_elapsed, 0);
        assert!(trace.log.is_empty());
        assert_eq!(trace.decision(0), Some(7));
    }

    #[test]
    fn echo_on_a_path_counts_directed_messages() {
        // path of 3 nodes for 2 rounds: 2 edges x 2 directions x 2 rounds
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let programs: Vec<Box<dyn NodeProgram>> = (0..3)
            .map(|_| Box::new(Echo { neighbors: vec![] }) as Box<dyn NodeProgram>)
            .collect();
        let err = run(&g, None, programs, ModelBudget::Local, 2, TraceDetail::Full)
            .unwrap_err();
        match err {
            SimError::NonTermination { trace, .. } => {
                assert_eq!(trace.log.len(), 2 * 2 * 2);
                assert_eq!(trace.total_messages, 8);
            }
            other => panic!("expected NonTermination, got {other:?}"),
        }
    }

    #[test]
    fn congest_budget_is_enforced_with_position() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        struct BigTalker {
            neighbors: Vec<NodeId>,
        }
        impl NodeProgram for BigTalker {
            fn init(&mut self, view: &LocalView<'_>) {
                self.neighbors = view.neighbors.to_vec();
            }
            fn step(
                &mut self,
                _round: usize,
                _inbox: &[(NodeId, Payload)],
            ) -> Result<StepOutput, ProgramError> {
                Ok(StepOutput::broadcast(
                    &self.neighbors,
                    Payload::FinalColor {
                        color: 1,
                        space: 1 << 20,
                    },
                ))
            }
        }
        let programs: Vec<Box<dyn NodeProgram>> = (0..2)
            .map(|_| Box::new(BigTalker { neighbors: vec![] }) as Box<dyn NodeProgram>)
            .collect();
        let err = run(
            &g,
            None,
            programs,
            ModelBudget::Congest { bit_limit: 8 },
            4,
            TraceDetail::Aggregate,
        )
        .unwrap_err();
        assert_eq!(
            err,
            SimError::BudgetExceeded {
                round: 0,
                from: 0,
                to: 1,
                bits: 21,
                limit: 8
            }
        );
    }

    #[test]
    fn empty_trace_metrics_are_zero() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let trace = run(
            &g,
            None,
            vec![Box::new(DecideAtInit(1))],
            ModelBudget::Local,
            5,
            TraceDetail::Full,
        )
        .unwrap();
        let m = metrics(&trace);
        assert_eq!((m.rounds, m.max_message_bits, m.total_messages), (0, 0, 0));
    }

    #[test]
    fn bit_accounting_is_recomputable_from_payloads() {
        let payloads = [
            Payload::InitialColor { color: 5, q: 17 },
            Payload::Sublist {
                colors: vec![1, 2, 3],
                space: 63,
                p: 4,
            },
            Payload::FinalColor { color: 9, space: 100 },
            Payload::SubspaceIndex { index: 2, parts: 4 },
            Payload::Control { token: false },
        ];
        let expected = [5, 3 * 6 + 3, 7, 3, 1];
        for (payload, want) in payloads.iter().zip(expected) {
            assert_eq!(payload.encoded_bits(), want, "{:?}", payload);
            assert_eq!(Message::new(payload.clone()).bits, want);
        }
    }

    #[test]
    fn one_seventeen_bit_message_shows_in_max() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        struct One {
            neighbors: Vec<NodeId>,
            sent: bool,
        }
        impl NodeProgram for One {
            fn init(&mut self, view: &LocalView<'_>) {
                self.neighbors = view.neighbors.to_vec();
            }
            fn step(
                &mut self,
                round: usize,
                _inbox: &[(NodeId, Payload)],
            ) -> Result<StepOutput, ProgramError> {
                if !self.sent && round == 0 {
                    self.sent = true;
                    // 17 bits: space (1 << 17) - 1
                    Ok(StepOutput::broadcast(
                        &self.neighbors,
                        Payload::FinalColor {
                            color: 1,
                            space: (1 << 17) - 1,
                        },
                    )
                    .and_decide(1))
                } else {
                    Ok(StepOutput::decide(0))
                }
            }
        }
        let programs: Vec<Box<dyn NodeProgram>> = (0..2)
            .map(|_| {
                Box::new(One {
                    neighbors: vec![],
                    sent: false,
                }) as Box<dyn NodeProgram>
            })
            .collect();
        let trace = run(&g, None, programs, ModelBudget::Local, 4, TraceDetail::Full).unwrap();
        assert_eq!(metrics(&trace).max_message_bits, 17);
    }
}
