use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DirectedLink, NodeId, Topology, TopologyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    fn dist2(self, o: Point) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }
}

/// Attribute ranges for generated links. Each range is `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GabrielParams {
    pub capacity_mbps: (f64, f64),
    pub delay_ms: (f64, f64),
    pub loss: (f64, f64),
}

impl Default for GabrielParams {
    fn default() -> Self {
        GabrielParams {
            capacity_mbps: (20.0, 100.0),
            delay_ms: (1.0, 10.0),
            loss: (0.0, 0.002),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GabrielError {
    #[error("need at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid {name} range [{lo}, {hi}]")]
    InvalidRange {
        name: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("generated graph is disconnected")]
    DisconnectedResult,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl GabrielParams {
    pub fn validate(&self) -> Result<(), GabrielError> {
        let checks = [
            ("capacity", self.capacity_mbps, self.capacity_mbps.0 > 0.0),
            ("delay", self.delay_ms, self.delay_ms.0 >= 0.0),
            ("loss", self.loss, self.loss.0 >= 0.0 && self.loss.1 < 1.0),
        ];
        for (name, (lo, hi), ok) in checks {
            if !ok || !(lo <= hi) || !hi.is_finite() {
                return Err(GabrielError::InvalidRange { name, lo, hi });
            }
        }
        Ok(())
    }
}

/// Index pairs `(u, v)`, `u < v`, such that no third point lies strictly
/// inside the disk with diameter `uv`.
pub fn gabriel_edges(points: &[Point]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..points.len() {
        for v in u + 1..points.len() {
            let duv = points[u].dist2(points[v]);
            let empty = (0..points.len())
                .filter(|&w| w != u && w != v)
                .all(|w| points[u].dist2(points[w]) + points[v].dist2(points[w]) >= duv);
            if empty {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// One uniform draw per call, even for a degenerate range, so the other
/// parameters do not shift when one range collapses.
fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Generates a Gabriel topology and returns the node coordinates with it.
///
/// Node `i` gets id `i`. Node 0 is the server and every other node a client;
/// callers re-designate endpoints or attach hosts as needed.
pub fn generate_gabriel_layout(
    n_nodes: usize,
    seed: u64,
    params: &GabrielParams,
) -> Result<(Vec<Point>, Topology), GabrielError> {
    if n_nodes < 2 {
        return Err(GabrielError::TooFewNodes(n_nodes));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point> = (0..n_nodes)
        .map(|_| Point {
            x: rng.gen::<f64>(),
            y: rng.gen::<f64>(),
        })
        .collect();

    let mut links = Vec::new();
    for (u, v) in gabriel_edges(&points) {
        let capacity = draw(&mut rng, params.capacity_mbps);
        for (src, dst) in [(u, v), (v, u)] {
            let delay = draw(&mut rng, params.delay_ms);
            let loss = draw(&mut rng, params.loss);
            links.push(DirectedLink {
                src: NodeId(src as u32),
                dst: NodeId(dst as u32),
                capacity_mbps: capacity,
                delay_ms: delay,
                loss,
            });
        }
    }
    let nodes: Vec<NodeId> = (0..n_nodes as u32).map(NodeId).collect();
    let clients = nodes[1..].to_vec();
    let topo = match Topology::new(nodes, links, NodeId(0), clients) {
        Ok(t) => t,
        Err(TopologyError::Disconnected(_)) => return Err(GabrielError::DisconnectedResult),
        Err(e) => return Err(e.into()),
    };
    Ok((points, topo))
}

pub fn generate_gabriel_topology(
    n_nodes: usize,
    seed: u64,
    params: &GabrielParams,
) -> Result<Topology, GabrielError> {
    generate_gabriel_layout(n_nodes, seed, params).map(|(_, t)| t)
}
