use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::background::BackgroundSource;
use super::config::{ConfigIssue, SimConfig};
use super::fairshare::weighted_max_min_rates;
use super::flow::{detect_timeouts, Flow, FlowKind, TimeoutEvent};
use crate::netgraph::{LinkId, NodeId, Path, PathError, Topology};
use crate::pathmetrics::adjusted_rtt;
use crate::scheduler::{self, SchedulerConfig, SchedulerError, SchedulerState, TraceRecord};
use crate::strategies::{AppliedChange, Selector};
use crate::telemetry::{
    emit_probes, poll_statistics, Direction, Stores, TransferCounters, TransferLedger,
};
use crate::{Clock, SimTime};

const PROBE_STREAM: u64 = 1;
const COMPUTE_STREAM: u64 = 2;
const LAMBDA_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigIssue),
    #[error("candidate paths: {0}")]
    Paths(#[from] PathError),
    #[error("round aborted: {0}")]
    Scheduler(#[from] SchedulerError),
    #[error("round {round} exceeded the sim-time cap at {at}")]
    RoundStalled { round: u32, at: SimTime },
    #[error("no pending events or flows at {at}")]
    Stalled { at: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Probe,
    Poll,
    Phase2 { sched: usize },
    Wake,
    ComputeDone { client: NodeId, round: u32 },
    BgArrival { link: LinkId },
}

impl EventKind {
    /// Tie order at equal times; completions are handled before any event.
    fn class(&self) -> u8 {
        match self {
            EventKind::Probe => 1,
            EventKind::Poll => 2,
            EventKind::Phase2 { .. } | EventKind::Wake | EventKind::ComputeDone { .. } => 3,
            EventKind::BgArrival { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    at: SimTime,
    class: u8,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.class, self.seq).cmp(&(other.at, other.class, other.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    RoundStart {
        round: u32,
    },
    RoundEnd {
        round: u32,
    },
    FlowStart {
        flow: u64,
        kind: FlowKind,
        client: Option<NodeId>,
        links: Vec<LinkId>,
        size_mb: f64,
    },
    FlowEnd {
        flow: u64,
    },
    PathInstall {
        client: NodeId,
        direction: Direction,
        from: Option<usize>,
        to: usize,
    },
    Timeout {
        flow: u64,
        client: NodeId,
        direction: Direction,
    },
    ComputeDone {
        client: NodeId,
    },
    Done {
        client: NodeId,
        direction: Direction,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub at: SimTime,
    #[serde(flatten)]
    pub event: LogEvent,
}

/// Invariant checks made while the simulation runs. All zero in a healthy run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Audit {
    /// Link allocations above capacity.
    pub capacity_violations: u64,
    /// Reassignments inside the hold time of the previous change.
    pub guard_violations: u64,
    /// Assignments without exactly one path per batch client.
    pub assignment_violations: u64,
    /// Clients marked done while data remained.
    pub premature_done: u64,
    /// Scheduler queue bookkeeping failures.
    pub conservation_violations: u64,
    /// Phase 1 invocations checked.
    pub assignments_checked: u64,
}

impl Audit {
    pub fn is_clean(&self) -> bool {
        self.capacity_violations == 0
            && self.guard_violations == 0
            && self.assignment_violations == 0
            && self.premature_done == 0
            && self.conservation_violations == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientTime {
    pub client: NodeId,
    /// Seconds since the round started.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub round_time_s: f64,
    pub s2c_completion_s: Vec<ClientTime>,
    pub c2s_completion_s: Vec<ClientTime>,
    pub s2c_reassignments: u32,
    pub c2s_reassignments: u32,
    pub timeouts: u32,
    /// Exact solves that ran out of budget and used the heuristic answer.
    pub cp_fallbacks: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Phase1,
    Phase2,
}

/// Wall-clock cost of one scheduler phase invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub round: u32,
    pub direction: Direction,
    pub phase: Phase,
    pub at: SimTime,
    pub batch: usize,
    pub wall_ns: u64,
    pub fallback: bool,
}

/// One polled row of the controller's link view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub time_ms: f64,
    pub link_src: NodeId,
    pub link_dst: NodeId,
    pub throughput_mbps: f64,
    pub loss_est: f64,
    pub latency_est_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Recording {
    /// Keep the event log.
    pub log: bool,
    /// Keep scheduler and telemetry traces.
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub reports: Vec<RoundReport>,
    pub timings: Vec<PhaseTiming>,
    pub audit: Audit,
    pub log: Vec<LogEntry>,
    pub scheduler_trace: Vec<TraceRecord>,
    pub telemetry_trace: Vec<TelemetryRow>,
    /// Mean utilization of every link over the whole run.
    pub link_utilization: Vec<f64>,
    /// Links eligible for background traffic.
    pub core_links: Vec<LinkId>,
    pub end_time: SimTime,
}

impl SimOutput {
    /// Median utilization over the core links, 0 when there are none.
    pub fn median_core_utilization(&self) -> f64 {
        let mut u: Vec<f64> = self
            .core_links
            .iter()
            .map(|l| self.link_utilization[l.index()])
            .collect();
        median(&mut u)
    }
}

/// Median of `v` (mean of the two middle values for even lengths); 0 when empty.
pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct BgLink {
    source: BackgroundSource,
    backlog: u32,
    active: Option<u64>,
}

struct ActiveScheduler {
    state: SchedulerState,
    round: u32,
    selector: Selector,
    finished: bool,
}

struct RoundState {
    index: u32,
    start: SimTime,
    s2c_finish: BTreeMap<NodeId, SimTime>,
    c2s_finish: BTreeMap<NodeId, SimTime>,
    reassign: [u32; 2],
    timeouts: u32,
    fallbacks: u32,
    sched: [usize; 2],
    closed: bool,
}

/// Discrete-event simulation of FL rounds over one topology.
pub struct Simulation<'a> {
    topo: &'a Topology,
    cfg: SimConfig,
    sched_cfg: SchedulerConfig,
    clock: &'a dyn Clock,
    recording: Recording,
    started: bool,
    now: SimTime,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    flows: BTreeMap<u64, Flow>,
    next_flow: u64,
    fl_flow: BTreeMap<(NodeId, Direction), u64>,
    stores: Stores,
    ledger: TransferLedger,
    probe_rng: ChaCha8Rng,
    bg: Vec<Option<BgLink>>,
    compute_delay: BTreeMap<NodeId, SimTime>,
    rounds: Vec<RoundState>,
    scheds: Vec<ActiveScheduler>,
    link_load: Vec<f64>,
    dirty: bool,
    last_change: BTreeMap<(NodeId, Direction), SimTime>,
    audit: Audit,
    log: Vec<LogEntry>,
    scheduler_trace: Vec<TraceRecord>,
    telemetry_trace: Vec<TelemetryRow>,
    timings: Vec<PhaseTiming>,
    core_links: Vec<LinkId>,
}

impl<'a> Simulation<'a> {
    pub fn new(topo: &'a Topology, cfg: SimConfig, clock: &'a dyn Clock) -> Result<Self, SimError> {
        cfg.validate()?;
        let stores = Stores::new(topo, cfg.k_paths, cfg.smoothing)?;
        let n_links = topo.links().len();

        let mut compute_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        compute_rng.set_stream(COMPUTE_STREAM);
        let r = cfg.local_epoch_time_s;
        let compute_delay = topo
            .clients()
            .iter()
            .map(|&c| {
                (
                    c,
                    SimTime::from_secs_f64(r.lo + (r.hi - r.lo) * compute_rng.gen::<f64>()),
                )
            })
            .collect();

        let core_links: Vec<LinkId> = topo
            .link_ids()
            .filter(|&l| {
                let d = topo.link(l);
                !topo.is_endpoint(d.src) && !topo.is_endpoint(d.dst)
            })
            .collect();
        let mut lambda_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        lambda_rng.set_stream(LAMBDA_STREAM);
        let mut lambda = vec![0.0; n_links];
        for &l in &core_links {
            let u: f64 = lambda_rng.gen();
            lambda[l.index()] = cfg.bg_lambda * (1.0 + cfg.bg_lambda_spread * (2.0 * u - 1.0));
        }
        for o in &cfg.bg_lambda_links {
            if let Some(l) = topo.find_link(o.src, o.dst) {
                lambda[l.index()] = o.lambda;
            }
        }
        let bg = topo
            .link_ids()
            .map(|l| {
                let lam = lambda[l.index()];
                (lam > 0.0).then(|| BgLink {
                    source: BackgroundSource::new(
                        cfg.seed,
                        l.index(),
                        lam,
                        topo.link(l).capacity_mbps,
                        cfg.bg_flow_size,
                    ),
                    backlog: 0,
                    active: None,
                })
            })
            .collect();

        let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        probe_rng.set_stream(PROBE_STREAM);

        let ledger = TransferLedger {
            link_megabits: vec![0.0; n_links],
            clients: topo
                .clients()
                .iter()
                .map(|&c| (c, [TransferCounters::default(); 2]))
                .collect(),
        };

        Ok(Simulation {
            topo,
            sched_cfg: cfg.scheduler(),
            cfg,
            clock,
            recording: Recording::default(),
            started: false,
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            flows: BTreeMap::new(),
            next_flow: 0,
            fl_flow: BTreeMap::new(),
            stores,
            ledger,
            probe_rng,
            bg,
            compute_delay,
            rounds: Vec::new(),
            scheds: Vec::new(),
            link_load: vec![0.0; n_links],
            dirty: false,
            last_change: BTreeMap::new(),
            audit: Audit::default(),
            log: Vec::new(),
            scheduler_trace: Vec::new(),
            telemetry_trace: Vec::new(),
            timings: Vec::new(),
            core_links,
        })
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stores(&self) -> &Stores {
        &self.stores
    }

    pub fn ledger(&self) -> &TransferLedger {
        &self.ledger
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.flows.values()
    }

    pub fn audit(&self) -> &Audit {
        &self.audit
    }

    pub fn compute_delay(&self, client: NodeId) -> Option<SimTime> {
        self.compute_delay.get(&client).copied()
    }

    /// Runs every configured round and the trailing scheduler bookkeeping.
    pub fn run(mut self) -> Result<SimOutput, SimError> {
        let mut reports = Vec::with_capacity(self.cfg.n_rounds as usize);
        for _ in 0..self.cfg.n_rounds {
            reports.push(self.run_round()?);
        }
        Ok(self.finish(reports))
    }

    /// Runs the next round to completion: the S2C broadcast, local compute and
    /// C2S uploads, until both schedulers have marked every client done.
    pub fn run_round(&mut self) -> Result<RoundReport, SimError> {
        if !self.started {
            self.bootstrap();
        }
        let round = self.rounds.len() as u32;
        if round >= self.cfg.n_rounds {
            return Err(SimError::Config(ConfigIssue {
                key: "n_rounds".into(),
                message: alloc::format!("all {} rounds already ran", self.cfg.n_rounds),
            }));
        }
        let warmup_end = SimTime::from_secs_f64(self.cfg.warmup_s);
        while self.now < warmup_end {
            self.step(Some(warmup_end))?;
        }
        self.start_round();
        self.settle()?;
        while !self.rounds[round as usize].closed {
            self.step(None)?;
        }
        Ok(self.report(round as usize))
    }

    fn bootstrap(&mut self) {
        self.started = true;
        self.push(SimTime::ZERO, EventKind::Probe);
        self.push(self.cfg.polling_period(), EventKind::Poll);
        for i in 0..self.bg.len() {
            let link = LinkId(i as u32);
            let next = self.bg[i].as_mut().and_then(|b| b.source.next_gap_s());
            if let Some(gap) = next {
                self.push(SimTime::from_secs_f64(gap), EventKind::BgArrival { link });
            }
        }
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Queued {
            at,
            class: kind.class(),
            seq: self.seq,
            kind,
        }));
    }

    fn record(&mut self, event: LogEvent) {
        if self.recording.log {
            self.log.push(LogEntry {
                at: self.now,
                event,
            });
        }
    }

    /// Advances to the next boundary no later than `limit` and processes it.
    fn step(&mut self, limit: Option<SimTime>) -> Result<(), SimError> {
        let t_flow = self.flows.values().filter_map(|f| f.finish_at).min();
        let t_evt = self.queue.peek().map(|q| q.0.at);
        let next = match (t_flow, t_evt) {
            (Some(a), Some(b)) => a.min(b),
            (a, b) => a.or(b).ok_or(SimError::Stalled { at: self.now })?,
        };
        let next = limit.map_or(next, |l| next.min(l));
        if let Some(r) = self.rounds.last().filter(|r| !r.closed) {
            let cap = r
                .start
                .saturating_add(SimTime::from_secs_f64(self.cfg.max_round_time_s));
            if next > cap {
                return Err(SimError::RoundStalled {
                    round: r.index,
                    at: next,
                });
            }
        }
        self.advance(next);

        let done: Vec<u64> = self
            .flows
            .values()
            .filter(|f| f.finish_at.is_some_and(|t| t <= self.now))
            .map(|f| f.id)
            .collect();
        for id in done {
            self.complete_flow(id);
        }
        let stall = SimTime::from_secs_f64(self.cfg.stall_timeout_s);
        let timeouts = detect_timeouts(self.flows.values_mut(), self.now, stall);
        for t in timeouts {
            self.on_timeout(t, stall);
        }
        while let Some(q) = self.queue.peek().filter(|q| q.0.at <= self.now) {
            let kind = q.0.kind;
            self.queue.pop();
            self.handle(kind);
        }
        self.settle()
    }

    /// Runs the schedulers, re-solves rates and closes finished rounds.
    fn settle(&mut self) -> Result<(), SimError> {
        self.run_schedulers()?;
        if self.dirty {
            self.recompute_rates();
        }
        self.try_close_round();
        Ok(())
    }

    fn advance(&mut self, to: SimTime) {
        let dt = to.saturating_sub(self.now).as_secs_f64();
        if dt > 0.0 {
            for f in self.flows.values_mut() {
                if f.rate_mbps <= 0.0 {
                    continue;
                }
                let mb = (f.rate_mbps * dt / 8.0).min(f.remaining_mb());
                f.delivered_mb += mb;
                f.last_progress_at = to;
                for &l in &f.path.links {
                    self.ledger.link_megabits[l.index()] += mb * 8.0;
                }
                if let (Some(c), Some(d)) = (f.client, f.kind.direction()) {
                    if let Some(k) = self.ledger.clients.get_mut(&c) {
                        k[d.index()].cumulative_mb += mb;
                        k[d.index()].round_delivered_mb += mb;
                    }
                }
            }
        }
        self.now = self.now.max(to);
    }

    fn complete_flow(&mut self, id: u64) {
        let Some(f) = self.flows.remove(&id) else {
            return;
        };
        let rest = f.remaining_mb();
        for &l in &f.path.links {
            self.ledger.link_megabits[l.index()] += rest * 8.0;
        }
        self.record(LogEvent::FlowEnd { flow: id });
        self.dirty = true;
        match (f.client, f.kind.direction()) {
            (Some(c), Some(d)) => {
                if let Some(k) = self.ledger.clients.get_mut(&c) {
                    let k = &mut k[d.index()];
                    k.cumulative_mb += rest;
                    k.round_delivered_mb = k.round_total_mb;
                }
                self.stores.finish_transfer(c, d, f.total_mb);
                self.fl_flow.remove(&(c, d));
                let r = &mut self.rounds[f.round as usize];
                match d {
                    Direction::S2C => {
                        r.s2c_finish.insert(c, self.now);
                        let at = self.now + self.compute_delay[&c];
                        self.push(
                            at,
                            EventKind::ComputeDone {
                                client: c,
                                round: f.round,
                            },
                        );
                    }
                    Direction::C2S => {
                        r.c2s_finish.insert(c, self.now);
                    }
                }
            }
            _ => {
                let l = f.path.links[0];
                let next = match self.bg[l.index()].as_mut() {
                    Some(b) => {
                        b.active = None;
                        if b.backlog > 0 {
                            b.backlog -= 1;
                            true
                        } else {
                            false
                        }
                    }
                    None => false,
                };
                if next {
                    self.start_background(l);
                }
            }
        }
    }

    fn on_timeout(&mut self, t: TimeoutEvent, stall: SimTime) {
        if let Some(r) = self.rounds.get_mut(t.round as usize) {
            r.timeouts += 1;
        }
        self.record(LogEvent::Timeout {
            flow: t.flow,
            client: t.client,
            direction: t.direction,
        });
        self.push(self.now + stall, EventKind::Wake);
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Probe => {
                let samples = emit_probes(
                    &mut self.stores.links,
                    self.topo,
                    self.now,
                    &self.link_load,
                    self.cfg.probe_rate,
                    &mut self.probe_rng,
                );
                for s in &samples {
                    self.stores.links.ingest(s);
                }
                self.push(self.now + SimTime::from_secs(1), EventKind::Probe);
            }
            EventKind::Poll => {
                poll_statistics(
                    &self.ledger,
                    &mut self.stores.clients,
                    &mut self.stores.links,
                    self.now,
                );
                if self.recording.traces {
                    for rec in self.stores.links.records() {
                        let d = self.topo.link(rec.link);
                        self.telemetry_trace.push(TelemetryRow {
                            time_ms: self.now.as_millis_f64(),
                            link_src: d.src,
                            link_dst: d.dst,
                            throughput_mbps: rec.current_throughput_mbps,
                            loss_est: rec.packet_loss,
                            latency_est_ms: rec.latency_ms,
                        });
                    }
                }
                self.push(self.now + self.cfg.polling_period(), EventKind::Poll);
            }
            EventKind::Phase2 { sched } => self.on_phase2(sched),
            EventKind::Wake => {}
            EventKind::ComputeDone { client, round } => {
                self.record(LogEvent::ComputeDone { client });
                let size = self.cfg.model_size_mb;
                self.begin_transfer(client, Direction::C2S, size);
                let s = self.rounds[round as usize].sched[Direction::C2S.index()];
                let rec = self.scheds[s]
                    .state
                    .enqueue(client, &mut self.stores, self.now);
                self.trace(rec);
            }
            EventKind::BgArrival { link } => {
                let (busy, gap) = match self.bg[link.index()].as_mut() {
                    Some(b) => {
                        let busy = b.active.is_some();
                        if busy {
                            b.backlog += 1;
                        }
                        (busy, b.source.next_gap_s())
                    }
                    None => return,
                };
                if !busy {
                    self.start_background(link);
                }
                if let Some(g) = gap {
                    self.push(
                        self.now + SimTime::from_secs_f64(g),
                        EventKind::BgArrival { link },
                    );
                }
            }
        }
    }

    fn trace(&mut self, rec: TraceRecord) {
        if self.recording.traces {
            self.scheduler_trace.push(rec);
        }
    }

    fn begin_transfer(&mut self, c: NodeId, d: Direction, size: f64) {
        self.stores.begin_transfer(c, d, size);
        if let Some(k) = self.ledger.clients.get_mut(&c) {
            k[d.index()].round_total_mb = size;
            k[d.index()].round_delivered_mb = 0.0;
        }
    }

    fn start_background(&mut self, l: LinkId) {
        let Some(b) = self.bg[l.index()].as_mut() else {
            return;
        };
        let size = b.source.next_size_mb();
        let id = self.next_flow;
        b.active = Some(id);
        let d = self.topo.link(l);
        let path = Path {
            nodes: vec![d.src, d.dst],
            links: vec![l],
        };
        self.insert_flow(FlowKind::Background, None, 0, path, size, 1.0);
    }

    fn insert_flow(
        &mut self,
        kind: FlowKind,
        client: Option<NodeId>,
        round: u32,
        path: Path,
        size: f64,
        discount: f64,
    ) -> u64 {
        let id = self.next_flow;
        self.next_flow += 1;
        self.record(LogEvent::FlowStart {
            flow: id,
            kind,
            client,
            links: path.links.clone(),
            size_mb: size,
        });
        self.flows.insert(
            id,
            Flow {
                id,
                kind,
                client,
                round,
                path,
                total_mb: size,
                delivered_mb: 0.0,
                rate_mbps: 0.0,
                discount,
                started_at: self.now,
                last_progress_at: self.now,
                finish_at: None,
                starved_since: None,
            },
        );
        self.dirty = true;
        id
    }

    /// Ground-truth slowdown of an FL flow on `path` from its base RTT and
    /// true loss.
    fn discount(&self, path: &Path) -> f64 {
        let mut rtt = 0.0;
        let mut delivered = 1.0;
        for &l in &path.links {
            let d = self.topo.link(l);
            rtt += d.delay_ms + self.topo.link(self.topo.reverse_link(l)).delay_ms;
            delivered *= 1.0 - d.loss;
        }
        let adj = adjusted_rtt(rtt, 1.0 - delivered, self.cfg.metric.epsilon);
        1.0 / (1.0 + adj / self.cfg.rtt_ref_ms)
    }

    fn start_round(&mut self) {
        let index = self.rounds.len() as u32;
        let clients: Vec<NodeId> = self.topo.clients().to_vec();
        let size = self.cfg.model_size_mb;
        let p2 = self.sched_cfg.phase2_delay;
        let base = self.scheds.len();
        for d in Direction::BOTH {
            let selector = self.cfg.strategy.selector(d, self.cfg.cp_node_budget);
            self.scheds.push(ActiveScheduler {
                state: SchedulerState::new(d, clients.iter().copied(), p2),
                round: index,
                selector,
                finished: false,
            });
        }
        self.rounds.push(RoundState {
            index,
            start: self.now,
            s2c_finish: BTreeMap::new(),
            c2s_finish: BTreeMap::new(),
            reassign: [0; 2],
            timeouts: 0,
            fallbacks: 0,
            sched: [base, base + 1],
            closed: false,
        });
        self.record(LogEvent::RoundStart { round: index });
        for &c in &clients {
            self.begin_transfer(c, Direction::S2C, size);
            let rec = self.scheds[base]
                .state
                .enqueue(c, &mut self.stores, self.now);
            self.trace(rec);
        }
    }

    fn run_schedulers(&mut self) -> Result<(), SimError> {
        for i in 0..self.scheds.len() {
            let s = &mut self.scheds[i];
            if s.finished || (s.state.q_wait.is_empty() && s.state.q_p1.is_empty()) {
                continue;
            }
            let out = scheduler::main_loop_step(
                &mut s.state,
                &s.selector,
                &mut self.stores,
                self.topo,
                &self.sched_cfg,
                self.now,
                self.clock,
            )?;
            let (round, direction) = (s.round, s.state.direction);
            if !s.state.check_conservation() {
                self.audit.conservation_violations += 1;
            }
            for rec in out.trace {
                self.trace(rec);
            }
            if let Some(p1) = out.phase1 {
                self.audit.assignments_checked += 1;
                if !p1.well_formed {
                    self.audit.assignment_violations += 1;
                }
                if p1.assignment.fallback {
                    self.rounds[round as usize].fallbacks += 1;
                }
                self.timings.push(PhaseTiming {
                    round,
                    direction,
                    phase: Phase::Phase1,
                    at: self.now,
                    batch: p1.batch.len(),
                    wall_ns: p1.compute_ns,
                    fallback: p1.assignment.fallback,
                });
                for ch in &p1.changes {
                    self.apply_change(ch, round);
                }
                if let Some(at) = p1.phase2_at {
                    self.push(at, EventKind::Phase2 { sched: i });
                }
            }
        }
        Ok(())
    }

    fn apply_change(&mut self, ch: &AppliedChange, round: u32) {
        let key = (ch.client, ch.direction);
        if ch.is_reassignment() {
            let hold = self.sched_cfg.guard.hold_time();
            if let Some(&last) = self.last_change.get(&key) {
                if self.now.saturating_sub(last) < hold {
                    self.audit.guard_violations += 1;
                }
            }
            self.rounds[round as usize].reassign[ch.direction.index()] += 1;
        }
        self.last_change.insert(key, self.now);
        self.record(LogEvent::PathInstall {
            client: ch.client,
            direction: ch.direction,
            from: ch.from,
            to: ch.to,
        });

        let Some(path) = self
            .stores
            .clients
            .get(ch.client)
            .map(|r| r.dir(ch.direction).paths[ch.to].clone())
        else {
            return;
        };
        let discount = self.discount(&path);
        match self.fl_flow.get(&key).copied() {
            Some(id) => {
                if let Some(f) = self.flows.get_mut(&id) {
                    f.path = path;
                    f.discount = discount;
                    self.dirty = true;
                }
            }
            None => {
                let size = self.cfg.model_size_mb;
                let id = self.insert_flow(
                    FlowKind::fl(ch.direction),
                    Some(ch.client),
                    round,
                    path,
                    size,
                    discount,
                );
                self.fl_flow.insert(key, id);
            }
        }
    }

    fn on_phase2(&mut self, i: usize) {
        let started = self.clock.now_ns();
        let s = &mut self.scheds[i];
        let checked = s.state.q_p2.len();
        let out = scheduler::phase2(&mut s.state, &mut self.stores, self.now);
        let wall_ns = self.clock.now_ns().saturating_sub(started);
        let (round, direction) = (s.round, s.state.direction);
        if s.state.is_complete() {
            s.finished = true;
        }
        if !s.state.check_conservation() {
            self.audit.conservation_violations += 1;
        }
        self.timings.push(PhaseTiming {
            round,
            direction,
            phase: Phase::Phase2,
            at: self.now,
            batch: checked,
            wall_ns,
            fallback: false,
        });
        for c in &out.done {
            let left = self
                .ledger
                .clients
                .get(c)
                .map_or(0.0, |k| k[direction.index()].remaining_mb());
            if left > 0.0 || self.fl_flow.contains_key(&(*c, direction)) {
                self.audit.premature_done += 1;
            }
            self.record(LogEvent::Done {
                client: *c,
                direction,
            });
        }
        for rec in out.trace {
            self.trace(rec);
        }
    }

    fn recompute_rates(&mut self) {
        self.dirty = false;
        let caps: Vec<f64> = self.topo.links().iter().map(|l| l.capacity_mbps).collect();
        let paths: Vec<Vec<usize>> = self
            .flows
            .values()
            .map(|f| f.path.links.iter().map(|l| l.index()).collect())
            .collect();
        let bg_weight = self.cfg.bg_flow_weight;
        let weights: Vec<f64> = self
            .flows
            .values()
            .map(|f| if f.is_fl() { 1.0 } else { bg_weight })
            .collect();
        let fair = weighted_max_min_rates(&paths, &weights, &caps);
        self.link_load.iter_mut().for_each(|x| *x = 0.0);
        let stall = SimTime::from_secs_f64(self.cfg.stall_timeout_s);
        let mut wakes = Vec::new();
        for (f, share) in self.flows.values_mut().zip(fair) {
            f.rate_mbps = share * f.discount;
            for &l in &f.path.links {
                self.link_load[l.index()] += f.rate_mbps;
            }
            f.finish_at = (f.rate_mbps > 0.0)
                .then(|| self.now + SimTime::from_secs_f64(f.remaining_mb() * 8.0 / f.rate_mbps));
            if f.observe_rate(self.now, self.cfg.min_progress_mbps) {
                wakes.push(self.now + stall);
            }
        }
        for (load, cap) in self.link_load.iter().zip(&caps) {
            if *load > cap * (1.0 + 1e-9) + 1e-9 {
                self.audit.capacity_violations += 1;
            }
        }
        for at in wakes {
            self.push(at, EventKind::Wake);
        }
    }

    fn try_close_round(&mut self) {
        let n = self.topo.clients().len();
        let Some(r) = self.rounds.last_mut() else {
            return;
        };
        if r.closed || r.c2s_finish.len() < n {
            return;
        }
        if r.sched.iter().all(|&s| self.scheds[s].finished) {
            r.closed = true;
            let index = r.index;
            self.record(LogEvent::RoundEnd { round: index });
        }
    }

    fn report(&self, i: usize) -> RoundReport {
        let r = &self.rounds[i];
        let rel = |m: &BTreeMap<NodeId, SimTime>| -> Vec<ClientTime> {
            m.iter()
                .map(|(&client, &t)| ClientTime {
                    client,
                    seconds: t.saturating_sub(r.start).as_secs_f64(),
                })
                .collect()
        };
        let last = r.c2s_finish.values().copied().max().unwrap_or(r.start);
        RoundReport {
            round: r.index,
            round_time_s: last.saturating_sub(r.start).as_secs_f64(),
            s2c_completion_s: rel(&r.s2c_finish),
            c2s_completion_s: rel(&r.c2s_finish),
            s2c_reassignments: r.reassign[0],
            c2s_reassignments: r.reassign[1],
            timeouts: r.timeouts,
            cp_fallbacks: r.fallbacks,
        }
    }

    /// Consumes the simulation after `reports` were collected.
    pub fn finish(self, reports: Vec<RoundReport>) -> SimOutput {
        let secs = self.now.as_secs_f64();
        let link_utilization = self
            .topo
            .links()
            .iter()
            .zip(&self.ledger.link_megabits)
            .map(|(l, mb)| {
                if secs > 0.0 {
                    mb / (l.capacity_mbps * secs)
                } else {
                    0.0
                }
            })
            .collect();
        SimOutput {
            reports,
            timings: self.timings,
            audit: self.audit,
            log: self.log,
            scheduler_trace: self.scheduler_trace,
            telemetry_trace: self.telemetry_trace,
            link_utilization,
            core_links: self.core_links,
            end_time: self.now,
        }
    }
}
