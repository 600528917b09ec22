//! Discrete-event simulation of whole systems: the in-storage pipeline
//! and the two baselines, with metrics, traces and comparisons.

mod compare;
mod event;
mod metrics;
mod run;
mod scenario;

pub use compare::{compare, CompareRow, Comparison};
pub use event::{Event, EventQueue};
pub use metrics::{nearest_rank, traces_csv, FunctionalCheck, LatencySummary, Metrics, Stage, TraceRow, SCHEMA_VERSION};
pub use run::{resolve_kernels, resident_rows, run, RunOutput, SCORE_TOLERANCE};
pub use scenario::{KernelChoice, Mode, ProfileParams, Scenario, WorkloadParams};
