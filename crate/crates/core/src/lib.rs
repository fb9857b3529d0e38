//! Path selection, telemetry and fluid-flow simulation for federated-learning
//! traffic over a software-defined network.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! wall clocks or the command line lives in the `fedroute` companion crate.
//!
//! Module map:
//! - [`netgraph`]: topologies, loopless K-shortest paths, Gabriel generator
//! - [`telemetry`]: probe-based loss/latency estimation, Client and Link stores
//! - [`pathmetrics`]: RTT, loss, adjusted RTT, bottleneck score, completion time
//! - [`strategies`]: RFWD, FreeCap, greedy and exact min-max path selection
//! - [`scheduler`]: the two-phase flow scheduler
//! - [`simnet`]: discrete-event engine with max-min fair sharing

#![no_std]
// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod netgraph;
pub mod pathmetrics;
pub mod scheduler;
pub mod simnet;
pub mod strategies;
pub mod telemetry;
mod time;

pub use time::{Clock, NullClock, SimTime};
