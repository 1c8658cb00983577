//! Distributed list defective coloring: algorithms, a synchronous-round
//! simulator with LOCAL/CONGEST accounting, validators, generators and
//! brute-force oracles.
//!
//! The problem family: every node `v` of a graph holds a color list `L_v`
//! from a space `1..=C` and a defect allowance `d_v(x)` per listed color, and
//! must commit to some `x ∈ L_v` with at most `d_v(x)` same-colored
//! (out)neighbors. The `slack` of an instance is the largest `S` with
//! `Σ_{x∈L_v}(d_v(x)+1) > S·deg(v)` everywhere; the solvers in this crate
//! trade slack, color-space size and round complexity against each other.

pub mod gen;
pub mod graph;
pub mod instance;
pub mod oracle;
pub mod poly;
pub mod reduce;
pub mod report;
pub mod sim;
pub mod solvers;
pub mod sweep;
pub mod symmetry;
pub mod validate;

pub use graph::{neighborhood_independence, Graph, GraphError, NodeId, Orientation};
pub use instance::{compute_slack, Color, Coloring, PaletteInstance, Q, SlackReport, SlackValue};
pub use report::RunReport;
pub use sim::{metrics, ModelBudget, NodeProgram, Payload, RoundTrace, TraceDetail};
pub use validate::{validate, ValidationMode, ValidationReport};
