//! Scenario files: topology source, client placement, simulation settings,
//! strategies and seeds.

use std::fs;
use std::path::{Path, PathBuf};

use fedroute_core::netgraph::{
    generate_gabriel_topology, AccessLink, GabrielParams, NodeId, Topology,
};
use fedroute_core::simnet::{SimConfig, SizeDist, UniformRange};
use fedroute_core::strategies::Strategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topofile::{load_topology, TopoFileError};

pub const PRESETS: [&str; 3] = ["e1-small", "e2-small", "e3-small"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub topology: TopologySource,
    /// Number of FL clients; defaults to every eligible node.
    #[serde(default)]
    pub clients: Option<usize>,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    /// One replication per seed; each overrides `sim.seed`.
    #[serde(default = "one_seed")]
    pub seeds: Vec<u64>,
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn one_seed() -> Vec<u64> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySource {
    /// Gabriel graph of switches; the server and every client get their own
    /// host attached to a switch chosen by the placement rule.
    Gabriel {
        n_nodes: usize,
        /// Generator seed. `null` follows the replication seed, so every
        /// replication sees a different graph.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_capacity")]
        capacity_mbps: (f64, f64),
        #[serde(default = "default_delay")]
        delay_ms: (f64, f64),
        #[serde(default = "default_loss")]
        loss: (f64, f64),
    },
    /// Topology file used as written; the first `clients` clients take part.
    File { path: PathBuf },
}

fn default_capacity() -> (f64, f64) {
    GabrielParams::default().capacity_mbps
}
fn default_delay() -> (f64, f64) {
    GabrielParams::default().delay_ms
}
fn default_loss() -> (f64, f64) {
    GabrielParams::default().loss
}

/// Where hosts attach on a generated topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Server on switch 0; client `i` on switch `(i + 1) mod n`.
    #[default]
    Ring,
    /// Server on the switch with the most links (lowest id on ties); clients
    /// continue around the ring from there.
    MaxDegree,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{key}: {message}")]
    Schema { key: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("topology file: {0}")]
    Topology(#[from] TopoFileError),
}

impl ConfigError {
    /// Key path of the offending setting, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { key, .. } | ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

/// A topology ready to simulate and its label in the outputs.
#[derive(Debug, Clone)]
pub struct BuiltTopology {
    pub label: String,
    pub topology: Topology,
}

impl Scenario {
    /// Parses scenario JSON. Relative topology paths resolve against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Scenario, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::Schema {
                key,
                message: e.into_inner().to_string(),
            }
        })?;
        if let (TopologySource::File { path }, Some(base)) = (&mut scenario.topology, base) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json(&text, path.parent())
    }

    /// A preset name or a path to a scenario file.
    pub fn resolve(arg: &str) -> Result<Scenario, ConfigError> {
        let path = Path::new(arg);
        match preset(arg) {
            Some(s) if !path.exists() => Ok(s),
            _ => Scenario::load(path),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    /// Checks everything that can be checked without running; fills in the
    /// client count.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(|i| ConfigError::Invalid {
            key: format!("sim.{}", i.key),
            message: i.message,
        })?;
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "at least one strategy is required"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let eligible = match &self.topology {
            TopologySource::Gabriel {
                n_nodes,
                capacity_mbps,
                delay_ms,
                loss,
                ..
            } => {
                if *n_nodes < 2 {
                    return Err(invalid(
                        "topology.n_nodes",
                        format!("need at least 2 switches, got {n_nodes}"),
                    ));
                }
                let params = GabrielParams {
                    capacity_mbps: *capacity_mbps,
                    delay_ms: *delay_ms,
                    loss: *loss,
                };
                params
                    .validate()
                    .map_err(|e| invalid("topology", e.to_string()))?;
                *n_nodes
            }
            TopologySource::File { path } => load_topology(path)?.clients().len(),
        };
        let clients = *self.clients.get_or_insert(eligible);
        if clients == 0 || clients > eligible {
            return Err(invalid(
                "clients",
                format!("must lie in 1..={eligible}, got {clients}"),
            ));
        }
        Ok(())
    }

    /// The configuration of one replication.
    pub fn sim_config(&self, strategy: Strategy, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            strategy,
            ..self.sim.clone()
        }
    }

    pub fn build_topology(&self, seed: u64) -> Result<BuiltTopology, ConfigError> {
        match &self.topology {
            TopologySource::Gabriel {
                n_nodes,
                seed: fixed,
                capacity_mbps,
                delay_ms,
                loss,
            } => {
                let params = GabrielParams {
                    capacity_mbps: *capacity_mbps,
                    delay_ms: *delay_ms,
                    loss: *loss,
                };
                let graph_seed = fixed.unwrap_or(seed);
                let switches = generate_gabriel_topology(*n_nodes, graph_seed, &params)
                    .map_err(|e| invalid("topology", format!("seed {graph_seed}: {e}")))?;
                let clients = self.clients.unwrap_or(*n_nodes);
                let topology = place_hosts(&switches, clients, self.placement)
                    .map_err(|e| invalid("placement", e.to_string()))?;
                Ok(BuiltTopology {
                    label: format!("gabriel{n_nodes}"),
                    topology,
                })
            }
            TopologySource::File { path } => {
                let full = load_topology(path)?;
                let clients = self.clients.unwrap_or(full.clients().len());
                let topology = full
                    .with_endpoints(full.server(), full.clients()[..clients].to_vec())
                    .map_err(|e| invalid("clients", e.to_string()))?;
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(BuiltTopology { label, topology })
            }
        }
    }
}

/// Attaches the server and `clients` client hosts to a switch graph.
pub fn place_hosts(
    switches: &Topology,
    clients: usize,
    placement: Placement,
) -> Result<Topology, fedroute_core::netgraph::TopologyError> {
    let nodes = switches.nodes();
    let n = nodes.len();
    let server_pos = match placement {
        Placement::Ring => 0,
        Placement::MaxDegree => (0..n)
            .max_by_key(|&i| (switches.out_links(nodes[i]).len(), std::cmp::Reverse(i)))
            .unwrap_or(0),
    };
    let client_switches: Vec<NodeId> = (0..clients)
        .map(|i| nodes[(server_pos + 1 + i) % n])
        .collect();
    switches.attach_hosts(nodes[server_pos], &client_switches, AccessLink::default())
}

/// Built-in scenarios sized like the three evaluation topologies.
pub fn preset(name: &str) -> Option<Scenario> {
    let (n_nodes, clients, k_paths) = match name {
        "e1-small" => (15, 15, 10),
        "e2-small" => (30, 25, 15),
        "e3-small" => (50, 50, 25),
        _ => return None,
    };
    Some(Scenario {
        name: name.into(),
        topology: TopologySource::Gabriel {
            n_nodes,
            seed: None,
            capacity_mbps: (5.0, 100.0),
            delay_ms: default_delay(),
            loss: default_loss(),
        },
        clients: Some(clients),
        placement: Placement::Ring,
        sim: congested_sim(k_paths),
        strategies: all_strategies(),
        seeds: (1..=20).collect(),
    })
}

/// Moderate background load: roughly 60-65% median core-link utilization
/// under shortest-path routing on the e1-sized graphs.
fn congested_sim(k_paths: usize) -> SimConfig {
    SimConfig {
        k_paths,
        local_epoch_time_s: UniformRange { lo: 2.0, hi: 8.0 },
        bg_lambda: 0.035,
        bg_lambda_spread: 1.0,
        bg_flow_size: SizeDist::ExponentialDuration { mean_s: 20.0 },
        bg_flow_weight: 4.0,
        min_progress_mbps: 1.0,
        stall_timeout_s: 30.0,
        ..SimConfig::default()
    }
}
