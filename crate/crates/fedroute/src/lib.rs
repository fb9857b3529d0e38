//! Scenario files, batch runs, result files and the `fedroute` command line
//! on top of [`fedroute_core`].

pub mod bench;
pub mod scenario;
pub mod topofile;

pub use bench::{
    overhead_profile, run_scenario, write_outputs, BatchOutput, ComparisonTable, MonotonicClock,
    OverheadProfile, ReportLine, RunOptions,
};
pub use scenario::{preset, ConfigError, Placement, Scenario, TopologySource};
pub use topofile::{load_topology, parse_topology, write_topology, TopoFileError};
