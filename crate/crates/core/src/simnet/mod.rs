//! Discrete-event fluid simulation of FL rounds: max-min fair sharing of link
//! capacity, Poisson background traffic, probe and poll telemetry, the two
//! per-round schedulers and stall timeouts.
//!
//! All randomness comes from ChaCha8 streams keyed by the run seed, so a
//! configuration always produces the same event log.

mod background;
mod config;
mod engine;
mod fairshare;
mod flow;

pub use background::{exp_sample, BackgroundSource, SizeDist, BACKGROUND_STREAM_BASE};
pub use config::{ConfigIssue, LinkLambda, SimConfig, UniformRange};
pub use engine::{
    median, Audit, ClientTime, LogEntry, LogEvent, Phase, PhaseTiming, Recording, RoundReport,
    SimError, SimOutput, Simulation, TelemetryRow,
};
pub use fairshare::{max_min_fair_rates, weighted_max_min_rates};
pub use flow::{detect_timeouts, Flow, FlowKind, TimeoutEvent};
