//! Controller-side statistics: probe-based loss and latency estimation, the
//! periodic statistics poll, and the Client and Link stores.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::netgraph::{hop_delay, k_shortest_paths, LinkId, NodeId, Path, PathError, Topology};
use crate::pathmetrics::{AssignmentContext, LinkView, MetricError, MetricParams, Snapshot};
use crate::SimTime;

/// Probe outcomes kept per link for the loss estimate.
pub const LOSS_WINDOW: usize = 100;
/// Raw estimates kept for smoothing.
pub const RECENT_ESTIMATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "s2c")]
    S2C,
    #[serde(rename = "c2s")]
    C2S,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::S2C, Direction::C2S];

    pub fn index(self) -> usize {
        match self {
            Direction::S2C => 0,
            Direction::C2S => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::S2C => "s2c",
            Direction::C2S => "c2s",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weights for the three most recent raw estimates, oldest to newest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingWeights {
    pub oldest: f64,
    pub middle: f64,
    pub newest: f64,
}

impl Default for SmoothingWeights {
    fn default() -> Self {
        SmoothingWeights {
            oldest: 0.2,
            middle: 0.3,
            newest: 0.5,
        }
    }
}

impl SmoothingWeights {
    /// Weighted average of up to three values ordered oldest to newest. With
    /// fewer values the newest weights are used and renormalized.
    pub fn apply(&self, recent: &VecDeque<f64>) -> f64 {
        let w = [self.oldest, self.middle, self.newest];
        let n = recent.len().min(RECENT_ESTIMATES);
        if n == 0 {
            return 0.0;
        }
        let w = &w[RECENT_ESTIMATES - n..];
        let skip = recent.len() - n;
        let total: f64 = w.iter().sum();
        let sum: f64 = recent.iter().skip(skip).zip(w).map(|(v, w)| v * w).sum();
        sum / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub link: LinkId,
    pub seq: u64,
    pub sent_at: SimTime,
    pub received: bool,
    /// Present iff `received`.
    pub measured_delay_ms: Option<f64>,
}

/// Synthetic probe delay: base delay inflated by `1 + utilization^2`, capped
/// at three times the base delay.
pub fn queueing_delay_ms(base_delay_ms: f64, utilization: f64) -> f64 {
    let u = utilization.max(0.0);
    (base_delay_ms * (1.0 + u * u)).min(3.0 * base_delay_ms)
}

/// One Link Store row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub link: LinkId,
    pub default_capacity_mbps: f64,
    pub current_throughput_mbps: f64,
    pub s2c_clients: BTreeSet<NodeId>,
    pub c2s_clients: BTreeSet<NodeId>,
    pub packet_loss: f64,
    /// `None` until the first probe arrives.
    pub latency_ms: Option<f64>,
    pub loss_window: VecDeque<bool>,
    pub recent_latency: VecDeque<f64>,
    pub recent_loss: VecDeque<f64>,
    last_seq: Option<u64>,
}

impl LinkRecord {
    pub fn new(link: LinkId, default_capacity_mbps: f64) -> Self {
        LinkRecord {
            link,
            default_capacity_mbps,
            current_throughput_mbps: 0.0,
            s2c_clients: BTreeSet::new(),
            c2s_clients: BTreeSet::new(),
            packet_loss: 0.0,
            latency_ms: None,
            loss_window: VecDeque::with_capacity(LOSS_WINDOW),
            recent_latency: VecDeque::with_capacity(RECENT_ESTIMATES),
            recent_loss: VecDeque::with_capacity(RECENT_ESTIMATES),
            last_seq: None,
        }
    }

    pub fn clients(&self, direction: Direction) -> &BTreeSet<NodeId> {
        match direction {
            Direction::S2C => &self.s2c_clients,
            Direction::C2S => &self.c2s_clients,
        }
    }

    pub fn clients_mut(&mut self, direction: Direction) -> &mut BTreeSet<NodeId> {
        match direction {
            Direction::S2C => &mut self.s2c_clients,
            Direction::C2S => &mut self.c2s_clients,
        }
    }

    /// Raw loss over the current window: one minus the reception rate.
    pub fn raw_loss(&self) -> f64 {
        if self.loss_window.is_empty() {
            return 0.0;
        }
        let received = self.loss_window.iter().filter(|&&r| r).count();
        1.0 - received as f64 / self.loss_window.len() as f64
    }

    pub fn update_loss_estimate(&mut self, sample: &ProbeSample, weights: &SmoothingWeights) {
        debug_assert_eq!(sample.link, self.link);
        debug_assert!(
            self.last_seq.is_none_or(|s| sample.seq > s),
            "probe sequence must increase"
        );
        self.last_seq = Some(sample.seq);
        if self.loss_window.len() == LOSS_WINDOW {
            self.loss_window.pop_front();
        }
        self.loss_window.push_back(sample.received);
        let raw = self.raw_loss();
        push_recent(&mut self.recent_loss, raw);
        self.packet_loss = weights.apply(&self.recent_loss).clamp(0.0, 1.0);
    }

    /// Lost probes carry no delay and leave the estimate untouched.
    pub fn update_latency_estimate(&mut self, sample: &ProbeSample, weights: &SmoothingWeights) {
        let Some(delay) = sample.measured_delay_ms.filter(|_| sample.received) else {
            return;
        };
        push_recent(&mut self.recent_latency, delay.max(0.0));
        self.latency_ms = Some(weights.apply(&self.recent_latency));
    }
}

fn push_recent(q: &mut VecDeque<f64>, v: f64) {
    if q.len() == RECENT_ESTIMATES {
        q.pop_front();
    }
    q.push_back(v);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkStore {
    records: Vec<LinkRecord>,
    weights: SmoothingWeights,
    next_seq: Vec<u64>,
    polled_megabits: Vec<f64>,
    last_poll: SimTime,
}

impl LinkStore {
    pub fn new(topo: &Topology, weights: SmoothingWeights) -> Self {
        let records: Vec<LinkRecord> = topo
            .link_ids()
            .map(|l| LinkRecord::new(l, topo.link(l).capacity_mbps))
            .collect();
        let n = records.len();
        LinkStore {
            records,
            weights,
            next_seq: alloc::vec![0; n],
            polled_megabits: alloc::vec![0.0; n],
            last_poll: SimTime::ZERO,
        }
    }

    pub fn records(&self) -> &[LinkRecord] {
        &self.records
    }

    pub fn record(&self, l: LinkId) -> &LinkRecord {
        &self.records[l.index()]
    }

    pub fn record_mut(&mut self, l: LinkId) -> &mut LinkRecord {
        &mut self.records[l.index()]
    }

    pub fn weights(&self) -> &SmoothingWeights {
        &self.weights
    }

    pub fn last_poll(&self) -> SimTime {
        self.last_poll
    }

    pub fn ingest(&mut self, sample: &ProbeSample) {
        let w = self.weights;
        let rec = &mut self.records[sample.link.index()];
        rec.update_loss_estimate(sample, &w);
        rec.update_latency_estimate(sample, &w);
    }

    fn next_seq(&mut self, l: LinkId) -> u64 {
        let s = self.next_seq[l.index()];
        self.next_seq[l.index()] += 1;
        s
    }
}

/// Sends `per_link` probes over every directed link, spaced evenly over the
/// next second. Each probe is lost with the link's true loss probability,
/// drawn as `rng.gen::<f64>() < loss` in link order then probe order.
pub fn emit_probes<R: Rng + ?Sized>(
    store: &mut LinkStore,
    topo: &Topology,
    now: SimTime,
    true_load_mbps: &[f64],
    per_link: u32,
    rng: &mut R,
) -> Vec<ProbeSample> {
    let mut out = Vec::with_capacity(topo.links().len() * per_link as usize);
    let spacing = if per_link == 0 {
        0
    } else {
        1_000_000 / per_link as u64
    };
    for l in topo.link_ids() {
        let link = topo.link(l);
        let util = true_load_mbps.get(l.index()).copied().unwrap_or(0.0) / link.capacity_mbps;
        let delay = queueing_delay_ms(link.delay_ms, util);
        for i in 0..per_link {
            let lost = rng.gen::<f64>() < link.loss;
            out.push(ProbeSample {
                link: l,
                seq: store.next_seq(l),
                sent_at: now + SimTime(i as u64 * spacing),
                received: !lost,
                measured_delay_ms: if lost { None } else { Some(delay) },
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferStatus {
    Waiting,
    Phase1,
    Phase2,
    Done,
}

/// Per-direction half of a Client Store row.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRecord {
    /// K-shortest candidate paths.
    pub paths: Vec<Path>,
    /// Index into `paths` of the installed path.
    pub current: Option<usize>,
    pub rate_mbps: f64,
    pub round_data_mb: f64,
    pub remaining_mb: f64,
    pub last_switch: Option<SimTime>,
    pub status: TransferStatus,
    polled_mb: f64,
}

impl DirectionRecord {
    fn new(paths: Vec<Path>) -> Self {
        DirectionRecord {
            paths,
            current: None,
            rate_mbps: 0.0,
            round_data_mb: 0.0,
            remaining_mb: 0.0,
            last_switch: None,
            status: TransferStatus::Done,
            polled_mb: 0.0,
        }
    }

    pub fn current_path(&self) -> Option<&Path> {
        self.current.map(|i| &self.paths[i])
    }
}

/// One Client Store row.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord {
    pub client: NodeId,
    pub s2c: DirectionRecord,
    pub c2s: DirectionRecord,
}

impl ClientRecord {
    pub fn dir(&self, d: Direction) -> &DirectionRecord {
        match d {
            Direction::S2C => &self.s2c,
            Direction::C2S => &self.c2s,
        }
    }

    pub fn dir_mut(&mut self, d: Direction) -> &mut DirectionRecord {
        match d {
            Direction::S2C => &mut self.s2c,
            Direction::C2S => &mut self.c2s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClientStore {
    records: BTreeMap<NodeId, ClientRecord>,
    last_poll: SimTime,
}

impl ClientStore {
    /// Computes `k` shortest S2C and C2S candidates for every client of `topo`.
    pub fn new(topo: &Topology, k: usize) -> Result<Self, PathError> {
        let mut records = BTreeMap::new();
        for &c in topo.clients() {
            let s2c = k_shortest_paths(topo, topo.server(), c, k, hop_delay)?;
            let c2s = k_shortest_paths(topo, c, topo.server(), k, hop_delay)?;
            records.insert(
                c,
                ClientRecord {
                    client: c,
                    s2c: DirectionRecord::new(s2c),
                    c2s: DirectionRecord::new(c2s),
                },
            );
        }
        Ok(ClientStore {
            records,
            last_poll: SimTime::ZERO,
        })
    }

    pub fn get(&self, c: NodeId) -> Option<&ClientRecord> {
        self.records.get(&c)
    }

    pub fn get_mut(&mut self, c: NodeId) -> Option<&mut ClientRecord> {
        self.records.get_mut(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClientRecord> {
        self.records.values()
    }

    pub fn last_poll(&self) -> SimTime {
        self.last_poll
    }
}

/// Ground-truth byte counters kept by the simulator. Polling reads them and
/// never writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransferLedger {
    /// Cumulative megabits carried per link.
    pub link_megabits: Vec<f64>,
    pub clients: BTreeMap<NodeId, [TransferCounters; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransferCounters {
    pub cumulative_mb: f64,
    pub round_total_mb: f64,
    pub round_delivered_mb: f64,
}

impl TransferCounters {
    pub fn remaining_mb(&self) -> f64 {
        (self.round_total_mb - self.round_delivered_mb).max(0.0)
    }
}

/// Refreshes link throughput and client progress from the ledger.
///
/// Rates are averages over the interval since the previous poll.
pub fn poll_statistics(
    ledger: &TransferLedger,
    clients: &mut ClientStore,
    links: &mut LinkStore,
    now: SimTime,
) {
    let dt = now.saturating_sub(links.last_poll).as_secs_f64();
    for (i, rec) in links.records.iter_mut().enumerate() {
        let total = ledger.link_megabits.get(i).copied().unwrap_or(0.0);
        if dt > 0.0 {
            rec.current_throughput_mbps = ((total - links.polled_megabits[i]) / dt).max(0.0);
        }
        links.polled_megabits[i] = total;
    }
    links.last_poll = now;

    let dt = now.saturating_sub(clients.last_poll).as_secs_f64();
    for (c, rec) in clients.records.iter_mut() {
        let counters = ledger.clients.get(c).copied().unwrap_or_default();
        for d in Direction::BOTH {
            let k = counters[d.index()];
            let r = rec.dir_mut(d);
            if dt > 0.0 {
                r.rate_mbps = ((k.cumulative_mb - r.polled_mb) * 8.0 / dt).max(0.0);
            }
            r.polled_mb = k.cumulative_mb;
            r.round_data_mb = k.round_delivered_mb;
            r.remaining_mb = k.remaining_mb();
        }
    }
    clients.last_poll = now;
}

/// Both stores, owned by the simulation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Stores {
    pub clients: ClientStore,
    pub links: LinkStore,
}

impl Stores {
    pub fn new(topo: &Topology, k: usize, weights: SmoothingWeights) -> Result<Self, PathError> {
        Ok(Stores {
            clients: ClientStore::new(topo, k)?,
            links: LinkStore::new(topo, weights),
        })
    }

    /// Resets a client's direction for a fresh transfer of `size_mb`.
    pub fn begin_transfer(&mut self, client: NodeId, d: Direction, size_mb: f64) {
        if let Some(rec) = self.clients.get_mut(client) {
            let r = rec.dir_mut(d);
            r.current = None;
            r.round_data_mb = 0.0;
            r.remaining_mb = size_mb;
            r.rate_mbps = 0.0;
            r.status = TransferStatus::Waiting;
        }
    }

    /// Installs candidate `index` as the client's path, moving its Link Store
    /// membership from the old path to the new one.
    pub fn install_path(&mut self, client: NodeId, d: Direction, index: usize, now: SimTime) {
        let Some(rec) = self.clients.get_mut(client) else {
            return;
        };
        let r = rec.dir_mut(d);
        if let Some(old) = r.current {
            for &l in &r.paths[old].links {
                self.links.records[l.index()].clients_mut(d).remove(&client);
            }
        }
        for &l in &r.paths[index].links {
            self.links.records[l.index()].clients_mut(d).insert(client);
        }
        r.current = Some(index);
        r.last_switch = Some(now);
    }

    /// Flow-removed notification: the transfer is complete.
    pub fn finish_transfer(&mut self, client: NodeId, d: Direction, delivered_mb: f64) {
        let Some(rec) = self.clients.get_mut(client) else {
            return;
        };
        let r = rec.dir_mut(d);
        if let Some(cur) = r.current {
            for &l in &r.paths[cur].links {
                self.links.records[l.index()].clients_mut(d).remove(&client);
            }
        }
        r.round_data_mb = delivered_mb;
        r.remaining_mb = 0.0;
        r.rate_mbps = 0.0;
    }

    /// Point-in-time controller view of every link.
    ///
    /// Available capacity is the default capacity minus the estimated non-FL
    /// load, where non-FL load is the polled link throughput minus the polled
    /// rates of FL clients whose installed path crosses the link.
    pub fn snapshot(&self, topo: &Topology, params: &MetricParams) -> Snapshot {
        let n = topo.links().len();
        let mut fl_rate = alloc::vec![0.0; n];
        for rec in self.clients.iter() {
            for d in Direction::BOTH {
                let r = rec.dir(d);
                if let (Some(p), true) = (r.current_path(), r.remaining_mb > 0.0) {
                    for &l in &p.links {
                        fl_rate[l.index()] += r.rate_mbps;
                    }
                }
            }
        }
        let links = topo
            .link_ids()
            .map(|l| {
                let rec = &self.links.records[l.index()];
                let other = (rec.current_throughput_mbps - fl_rate[l.index()]).max(0.0);
                let floor = params.capacity_floor_fraction * rec.default_capacity_mbps;
                LinkView {
                    available_mbps: (rec.default_capacity_mbps - other).max(floor),
                    default_capacity_mbps: rec.default_capacity_mbps,
                    throughput_mbps: rec.current_throughput_mbps,
                    latency_ms: rec.latency_ms,
                    base_delay_ms: topo.link(l).delay_ms,
                    loss: rec.packet_loss,
                    reverse: topo.reverse_link(l),
                }
            })
            .collect();
        Snapshot { links }
    }

    /// Assignment context for `batch` in direction `d`. Clients of the batch
    /// are excluded from the pre-existing per-link flow counts.
    pub fn assignment_context(
        &self,
        batch: &[NodeId],
        d: Direction,
        topo: &Topology,
        params: &MetricParams,
    ) -> Result<AssignmentContext, MetricError> {
        let snapshot = self.snapshot(topo, params);
        let in_batch: BTreeSet<NodeId> = batch.iter().copied().collect();
        let base_active = self
            .links
            .records
            .iter()
            .map(|rec| {
                let same = rec
                    .clients(d)
                    .iter()
                    .filter(|c| !in_batch.contains(c))
                    .count();
                let other = match d {
                    Direction::S2C => rec.c2s_clients.len(),
                    Direction::C2S => rec.s2c_clients.len(),
                };
                (same + other) as u32
            })
            .collect();
        let mut demands = Vec::with_capacity(batch.len());
        for &c in batch {
            let rec = self.clients.get(c).ok_or(MetricError::NoCandidates(c))?;
            let r = rec.dir(d);
            demands.push((c, r.paths.clone(), r.remaining_mb, r.current));
        }
        AssignmentContext::new(demands, snapshot, base_active, *params)
    }
}
