//! Round/message accounting aggregated across the sequential stages of a
//! composed algorithm.

use serde::{Deserialize, Serialize};

use crate::sim::RoundTrace;

/// One simulator run inside a composed algorithm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub label: String,
    pub rounds: usize,
    pub total_messages: u64,
    pub max_message_bits: u64,
}

/// Accounting for a whole (possibly composed) solve. Stages run back to
/// back in the synchronous model, so rounds add up.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub rounds: usize,
    pub total_messages: u64,
    pub max_message_bits: u64,
    pub total_bits: u64,
    pub stages: Vec<StageReport>,
    /// Subsolver invocations performed by reduction drivers.
    pub subsolver_calls: usize,
}

impl RunReport {
    pub fn absorb_trace(&mut self, label: impl Into<String>, trace: &RoundTrace) {
        self.rounds += trace.rounds_elapsed;
        self.total_messages += trace.total_messages;
        self.max_message_bits = self.max_message_bits.max(trace.max_message_bits);
        self.total_bits += trace.total_bits;
        self.stages.push(StageReport {
            label: label.into(),
            rounds: trace.rounds_elapsed,
            total_messages: trace.total_messages,
            max_message_bits: trace.max_message_bits,
        });
    }

    pub fn absorb_report(&mut self, label: &str, other: RunReport) {
        self.rounds += other.rounds;
        self.total_messages += other.total_messages;
        self.max_message_bits = self.max_message_bits.max(other.max_message_bits);
        self.total_bits += other.total_bits;
        self.subsolver_calls += other.subsolver_calls;
        for stage in other.stages {
            self.stages.push(StageReport {
                label: format!("{label}/{}", stage.label),
                ..stage
            });
        }
    }
}
