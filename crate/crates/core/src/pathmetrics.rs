//! Path-level quantities used by the path selection strategies: round-trip
//! time, end-to-end loss, loss-adjusted RTT, per-flow bottleneck score and
//! estimated completion time.
//!
//! Scores are a rate proxy in Mbps per millisecond of adjusted RTT. Multiplying
//! by [`SCORE_RTT_UNIT_MS`] turns a score back into an effective rate, so a
//! lossless path with an adjusted RTT at or below the floor is credited with its
//! full bottleneck fair share.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{LinkId, NodeId, Path};

/// Adjusted RTT at which a score equals the bottleneck rate.
pub const SCORE_RTT_UNIT_MS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricParams {
    /// Added to the loss rate under the square root of the RTT adjustment.
    pub epsilon: f64,
    /// Lower bound on the adjusted RTT used as a divisor.
    pub rtt_floor_ms: f64,
    /// Available capacity never drops below this fraction of the link's
    /// default capacity.
    pub capacity_floor_fraction: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            epsilon: 1e-6,
            rtt_floor_ms: 1.0,
            capacity_floor_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("link {0:?} has no latency measurement")]
    MissingLinkMetric(LinkId),
    #[error("link {0:?} has no usable capacity")]
    ZeroCapacity(LinkId),
    #[error("link {0:?} is not in the snapshot")]
    UnknownLink(LinkId),
    #[error("client {0} has no candidate paths")]
    NoCandidates(NodeId),
    #[error("client {client} has non-positive remaining data {remaining_mb}")]
    NoDemand { client: NodeId, remaining_mb: f64 },
}

/// Controller view of one directed link at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkView {
    /// Estimated capacity left for FL flows (`cap_l`).
    pub available_mbps: f64,
    pub default_capacity_mbps: f64,
    pub throughput_mbps: f64,
    /// Smoothed one-way delay; `None` until the first probe arrives.
    pub latency_ms: Option<f64>,
    pub base_delay_ms: f64,
    pub loss: f64,
    /// Opposite-direction link, used for the acknowledgement half of the RTT.
    pub reverse: LinkId,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub links: Vec<LinkView>,
}

impl Snapshot {
    pub fn link(&self, l: LinkId) -> Result<&LinkView, MetricError> {
        self.links.get(l.index()).ok_or(MetricError::UnknownLink(l))
    }
}

/// Sum of one-way latencies over the forward path and its reverse path.
pub fn path_rtt(path: &Path, reverse: &Path, snapshot: &Snapshot) -> Result<f64, MetricError> {
    let mut rtt = 0.0;
    for &l in path.links.iter().chain(reverse.links.iter()) {
        rtt += snapshot
            .link(l)?
            .latency_ms
            .ok_or(MetricError::MissingLinkMetric(l))?;
    }
    Ok(rtt)
}

/// Like [`path_rtt`] over `path` and the reverse of each of its links, using
/// the base delay for links that have not been measured yet.
pub fn path_rtt_or_base(path: &Path, snapshot: &Snapshot) -> Result<f64, MetricError> {
    let mut rtt = 0.0;
    for &l in &path.links {
        let fwd = snapshot.link(l)?;
        let rev = snapshot.link(fwd.reverse)?;
        rtt += fwd.latency_ms.unwrap_or(fwd.base_delay_ms)
            + rev.latency_ms.unwrap_or(rev.base_delay_ms);
    }
    Ok(rtt)
}

/// End-to-end loss assuming independent link losses.
pub fn path_loss(path: &Path, snapshot: &Snapshot) -> Result<f64, MetricError> {
    let mut delivered = 1.0;
    for &l in &path.links {
        delivered *= 1.0 - snapshot.link(l)?.loss;
    }
    Ok((1.0 - delivered).clamp(0.0, 1.0))
}

pub fn adjusted_rtt(rtt_ms: f64, loss: f64, epsilon: f64) -> f64 {
    rtt_ms * libm::sqrt(loss + epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub rtt: f64,
    pub packet_loss: f64,
    pub adj_rtt: f64,
}

pub fn path_metrics(
    path: &Path,
    snapshot: &Snapshot,
    params: &MetricParams,
) -> Result<PathMetrics, MetricError> {
    let rtt = path_rtt_or_base(path, snapshot)?;
    let packet_loss = path_loss(path, snapshot)?;
    Ok(PathMetrics {
        rtt,
        packet_loss,
        adj_rtt: adjusted_rtt(rtt, packet_loss, params.epsilon),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub path: Path,
    pub metrics: PathMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDemand {
    pub client: NodeId,
    pub candidates: Vec<Candidate>,
    /// Data still to transfer (`D_c`).
    pub remaining_mb: f64,
    /// Index of the path the client currently uses, if any.
    pub current: Option<usize>,
}

/// Everything a strategy needs to assign a batch of clients.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentContext {
    pub clients: Vec<ClientDemand>,
    pub snapshot: Snapshot,
    /// Active FL flows per link that are not part of this batch.
    pub base_active: Vec<u32>,
    pub params: MetricParams,
}

impl AssignmentContext {
    /// Builds a context, computing path metrics for every candidate.
    pub fn new(
        batch: Vec<(NodeId, Vec<Path>, f64, Option<usize>)>,
        snapshot: Snapshot,
        base_active: Vec<u32>,
        params: MetricParams,
    ) -> Result<Self, MetricError> {
        let mut clients = Vec::with_capacity(batch.len());
        for (client, paths, remaining_mb, current) in batch {
            if paths.is_empty() {
                return Err(MetricError::NoCandidates(client));
            }
            if !(remaining_mb > 0.0) {
                return Err(MetricError::NoDemand {
                    client,
                    remaining_mb,
                });
            }
            let mut candidates = Vec::with_capacity(paths.len());
            for path in paths {
                let metrics = path_metrics(&path, &snapshot, &params)?;
                candidates.push(Candidate { path, metrics });
            }
            clients.push(ClientDemand {
                client,
                candidates,
                remaining_mb,
                current,
            });
        }
        if base_active.len() != snapshot.links.len() {
            return Err(MetricError::UnknownLink(LinkId(
                base_active.len().min(snapshot.links.len()) as u32,
            )));
        }
        Ok(AssignmentContext {
            clients,
            snapshot,
            base_active,
            params,
        })
    }

    pub fn path(&self, client: usize, candidate: usize) -> &Path {
        &self.clients[client].candidates[candidate].path
    }

    /// Active-flow counts per link with every batch client placed on its chosen
    /// candidate (`choices[i]` is the candidate index of client `i`).
    pub fn link_loads(&self, choices: &[usize]) -> Vec<u32> {
        let mut loads = self.base_active.clone();
        for (i, &j) in choices.iter().enumerate() {
            for &l in &self.path(i, j).links {
                loads[l.index()] += 1;
            }
        }
        loads
    }
}

/// Flows on `link` under a complete assignment: batch clients whose chosen
/// path crosses it plus flows already active there.
pub fn active_flows(ctx: &AssignmentContext, choices: &[usize], link: LinkId) -> u32 {
    let batch = choices
        .iter()
        .enumerate()
        .filter(|&(i, &j)| ctx.path(i, j).contains_link(link))
        .count();
    ctx.base_active[link.index()] + batch as u32
}

/// Bottleneck per-flow capacity of a path divided by its adjusted RTT.
///
/// `loads` are active-flow counts that already include the client under
/// evaluation; counts below one are treated as one.
pub fn path_score(
    ctx: &AssignmentContext,
    client: usize,
    candidate: usize,
    loads: &[u32],
) -> Result<f64, MetricError> {
    score_with_extra(ctx, client, candidate, loads, 0)
}

/// [`path_score`] with `extra` flows added on every link of the path. Passing
/// one evaluates a client that is not yet counted in `loads`.
pub fn score_with_extra(
    ctx: &AssignmentContext,
    client: usize,
    candidate: usize,
    loads: &[u32],
    extra: u32,
) -> Result<f64, MetricError> {
    let cand = &ctx.clients[client].candidates[candidate];
    let mut bottleneck = f64::INFINITY;
    for &l in &cand.path.links {
        let cap = ctx.snapshot.link(l)?.available_mbps;
        if !(cap > 0.0) {
            return Err(MetricError::ZeroCapacity(l));
        }
        let flows = (loads[l.index()] + extra).max(1);
        let per_flow = cap / flows as f64;
        if per_flow < bottleneck {
            bottleneck = per_flow;
        }
    }
    Ok(bottleneck / cand.metrics.adj_rtt.max(ctx.params.rtt_floor_ms))
}

/// Effective rate credited to a score.
pub fn score_rate_mbps(score: f64) -> f64 {
    score * SCORE_RTT_UNIT_MS
}

/// Seconds to move `remaining_mb` at the rate implied by `score`.
pub fn completion_from_score(remaining_mb: f64, score: f64) -> f64 {
    remaining_mb * 8.0 / score_rate_mbps(score)
}

pub fn completion_time(
    ctx: &AssignmentContext,
    client: usize,
    candidate: usize,
    loads: &[u32],
) -> Result<f64, MetricError> {
    let score = path_score(ctx, client, candidate, loads)?;
    Ok(completion_from_score(
        ctx.clients[client].remaining_mb,
        score,
    ))
}

/// The min-max objective `T` of a complete assignment, evaluated jointly.
pub fn max_completion_time(ctx: &AssignmentContext, choices: &[usize]) -> Result<f64, MetricError> {
    let loads = ctx.link_loads(choices);
    let mut worst = 0.0f64;
    for (i, &j) in choices.iter().enumerate() {
        worst = worst.max(completion_time(ctx, i, j, &loads)?);
    }
    Ok(worst)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::vec;

    pub fn view(cap: f64, lat: f64, loss: f64, reverse: u32) -> LinkView {
        LinkView {
            available_mbps: cap,
            default_capacity_mbps: cap,
            throughput_mbps: 0.0,
            latency_ms: Some(lat),
            base_delay_ms: lat,
            loss,
            reverse: LinkId(reverse),
        }
    }

    fn path(links: &[u32]) -> Path {
        Path {
            nodes: (0..=links.len() as u32).map(NodeId).collect(),
            links: links.iter().map(|&l| LinkId(l)).collect(),
        }
    }

    #[test]
    fn rtt_sums_both_directions() {
        let snap = Snapshot {
            links: vec![view(1.0, 5.0, 0.0, 1), view(1.0, 5.0, 0.0, 0)],
        };
        assert_eq!(path_rtt(&path(&[0]), &path(&[1]), &snap).unwrap(), 10.0);

        let snap = Snapshot {
            links: vec![
                view(1.0, 3.0, 0.0, 2),
                view(1.0, 2.0, 0.0, 3),
                view(1.0, 4.0, 0.0, 0),
                view(1.0, 1.0, 0.0, 1),
            ],
        };
        assert_eq!(
            path_rtt(&path(&[0, 1]), &path(&[3, 2]), &snap).unwrap(),
            10.0
        );
        assert_eq!(path_rtt_or_base(&path(&[0, 1]), &snap).unwrap(), 10.0);
    }

    #[test]
    fn rtt_without_measurement_errors() {
        let mut a = view(1.0, 5.0, 0.0, 1);
        a.latency_ms = None;
        let snap = Snapshot {
            links: vec![a, view(1.0, 5.0, 0.0, 0)],
        };
        assert_eq!(
            path_rtt(&path(&[0]), &path(&[1]), &snap),
            Err(MetricError::MissingLinkMetric(LinkId(0)))
        );
        assert_eq!(path_rtt_or_base(&path(&[0]), &snap).unwrap(), 10.0);
    }

    #[test]
    fn loss_closed_forms() {
        let snap = Snapshot {
            links: vec![
                view(1.0, 1.0, 0.0, 0),
                view(1.0, 1.0, 0.1, 1),
                view(1.0, 1.0, 0.1, 2),
            ],
        };
        assert_eq!(path_loss(&path(&[0]), &snap).unwrap(), 0.0);
        assert!((path_loss(&path(&[1, 2]), &snap).unwrap() - 0.19).abs() < 1e-15);
    }

    #[test]
    fn adjusted_rtt_examples() {
        assert!((adjusted_rtt(100.0, 0.0, 1e-6) - 0.1).abs() < 1e-12);
        let v = adjusted_rtt(50.0, 0.04, 1e-6);
        assert!((v - 50.0 * libm::sqrt(0.040001)).abs() < 1e-12);
        assert!((v - 10.0001).abs() < 1e-4);
    }

    fn ctx_one_link(cap: f64, lat: f64, base: u32, remaining: f64) -> AssignmentContext {
        let snap = Snapshot {
            links: vec![view(cap, lat, 0.0, 0)],
        };
        AssignmentContext::new(
            vec![(NodeId(9), vec![path(&[0])], remaining, None)],
            snap,
            vec![base],
            MetricParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn score_solo_and_shared() {
        // rtt = 2 ms, adj ~ 0.002 ms, floor of 1 ms applies.
        let ctx = ctx_one_link(100.0, 1.0, 0, 12.5);
        let loads = ctx.link_loads(&[0]);
        assert_eq!(path_score(&ctx, 0, 0, &loads).unwrap(), 100.0);
        assert_eq!(completion_time(&ctx, 0, 0, &loads).unwrap(), 1.0);

        let ctx = ctx_one_link(100.0, 1.0, 3, 12.5);
        let loads = ctx.link_loads(&[0]);
        assert_eq!(active_flows(&ctx, &[0], LinkId(0)), 4);
        assert_eq!(path_score(&ctx, 0, 0, &loads).unwrap(), 25.0);
    }

    #[test]
    fn completion_scales_with_demand() {
        let a = ctx_one_link(80.0, 1.0, 0, 10.0);
        let b = ctx_one_link(80.0, 1.0, 0, 20.0);
        let ta = completion_time(&a, 0, 0, &a.link_loads(&[0])).unwrap();
        let tb = completion_time(&b, 0, 0, &b.link_loads(&[0])).unwrap();
        assert_eq!(tb, 2.0 * ta);
    }

    #[test]
    fn zero_capacity_is_an_error() {
        let mut ctx = ctx_one_link(10.0, 1.0, 0, 1.0);
        ctx.snapshot.links[0].available_mbps = 0.0;
        assert_eq!(
            path_score(&ctx, 0, 0, &[1]),
            Err(MetricError::ZeroCapacity(LinkId(0)))
        );
    }

    #[test]
    fn rejects_empty_demand() {
        let snap = Snapshot {
            links: vec![view(1.0, 1.0, 0.0, 0)],
        };
        let err = AssignmentContext::new(
            vec![(NodeId(1), vec![path(&[0])], 0.0, None)],
            snap.clone(),
            vec![0],
            MetricParams::default(),
        );
        assert!(matches!(err, Err(MetricError::NoDemand { .. })));
        let err = AssignmentContext::new(
            vec![(NodeId(1), vec![], 1.0, None)],
            snap,
            vec![0],
            MetricParams::default(),
        );
        assert_eq!(err.unwrap_err(), MetricError::NoCandidates(NodeId(1)));
    }
}
