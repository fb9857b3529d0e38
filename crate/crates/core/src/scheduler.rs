//! Two-phase flow scheduler.
//!
//! Phase 1 assigns paths to every client in `q_p1` through the configured
//! strategy and schedules a Phase 2 check after a fixed delay. Phase 2 reads
//! each waiting client's remaining data: finished clients are marked done,
//! the rest go back to `q_p1` for possible reassignment. One scheduler runs
//! per direction per round; the simulation loop drives it with arrival and
//! timer events.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{NodeId, Topology};
use crate::pathmetrics::{MetricError, MetricParams};
use crate::strategies::{AppliedChange, Assignment, PathSelection, StrategyError, SwitchGuard};
use crate::telemetry::{Direction, Stores, TransferStatus};
use crate::{Clock, SimTime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("{direction} phase 1 at {at}: {source}")]
    Strategy {
        direction: Direction,
        at: SimTime,
        source: StrategyError,
    },
    #[error("{direction} phase 1 at {at}: {source}")]
    Context {
        direction: Direction,
        at: SimTime,
        source: MetricError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub phase2_delay: SimTime,
    pub guard: SwitchGuard,
    pub metric: MetricParams,
    /// Skip scheduling a Phase 2 trigger while one is already pending.
    pub coalesce_phase2: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            phase2_delay: SimTime::from_secs(5),
            guard: SwitchGuard::default(),
            metric: MetricParams::default(),
            coalesce_phase2: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    #[serde(rename = "enqueue")]
    Enqueue,
    #[serde(rename = "phase1")]
    Phase1,
    #[serde(rename = "switch")]
    Switch,
    #[serde(rename = "phase2")]
    Phase2,
    #[serde(rename = "done")]
    Done,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Enqueue => "enqueue",
            TraceKind::Phase1 => "phase1",
            TraceKind::Switch => "switch",
            TraceKind::Phase2 => "phase2",
            TraceKind::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub direction: Direction,
    pub event: TraceKind,
    pub client: Option<NodeId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub direction: Direction,
    pub q_wait: VecDeque<NodeId>,
    pub q_p1: VecDeque<NodeId>,
    pub q_p2: VecDeque<NodeId>,
    pub c_done: usize,
    pub c_total: usize,
    pub phase2_delay: SimTime,
    members: BTreeSet<NodeId>,
    arrived: BTreeSet<NodeId>,
    done: BTreeSet<NodeId>,
    pending_phase2: usize,
}

impl SchedulerState {
    /// A scheduler responsible for `clients`; none of them has arrived yet.
    pub fn new(
        direction: Direction,
        clients: impl IntoIterator<Item = NodeId>,
        phase2_delay: SimTime,
    ) -> Self {
        let members: BTreeSet<NodeId> = clients.into_iter().collect();
        SchedulerState {
            direction,
            q_wait: VecDeque::new(),
            q_p1: VecDeque::new(),
            q_p2: VecDeque::new(),
            c_done: 0,
            c_total: members.len(),
            phase2_delay,
            members,
            arrived: BTreeSet::new(),
            done: BTreeSet::new(),
            pending_phase2: 0,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.c_done >= self.c_total
    }

    pub fn is_done(&self, c: NodeId) -> bool {
        self.done.contains(&c)
    }

    pub fn pending_phase2(&self) -> usize {
        self.pending_phase2
    }

    /// A client's transfer is ready: it joins `q_wait`.
    pub fn enqueue(&mut self, client: NodeId, stores: &mut Stores, now: SimTime) -> TraceRecord {
        debug_assert!(self.members.contains(&client) && !self.arrived.contains(&client));
        self.arrived.insert(client);
        self.q_wait.push_back(client);
        set_status(stores, client, self.direction, TransferStatus::Waiting);
        self.trace(now, TraceKind::Enqueue, Some(client), String::new())
    }

    /// Every member is in exactly one of: not arrived, `q_wait`, `q_p1`,
    /// `q_p2`, done.
    pub fn check_conservation(&self) -> bool {
        let mut seen = BTreeSet::new();
        let queued = self
            .q_wait
            .iter()
            .chain(&self.q_p1)
            .chain(&self.q_p2)
            .chain(&self.done);
        for &c in queued {
            if !seen.insert(c) || !self.arrived.contains(&c) {
                return false;
            }
        }
        let waiting_arrival = self.members.len() - self.arrived.len();
        seen.len() + waiting_arrival == self.c_total
            && self.done.len() == self.c_done
            && self.c_done <= self.c_total
    }

    fn trace(
        &self,
        time: SimTime,
        event: TraceKind,
        client: Option<NodeId>,
        detail: String,
    ) -> TraceRecord {
        TraceRecord {
            time,
            direction: self.direction,
            event,
            client,
            detail,
        }
    }
}

fn set_status(stores: &mut Stores, c: NodeId, d: Direction, s: TransferStatus) {
    if let Some(r) = stores.clients.get_mut(c) {
        r.dir_mut(d).status = s;
    }
}

/// Result of one Phase 1 run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOne {
    pub batch: Vec<NodeId>,
    pub assignment: Assignment,
    pub changes: Vec<AppliedChange>,
    /// Time of the scheduled Phase 2 trigger, unless coalesced away.
    pub phase2_at: Option<SimTime>,
    /// Wall-clock nanoseconds spent in `compute_paths`.
    pub compute_ns: u64,
    /// Every batch client got exactly one candidate.
    pub well_formed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutcome {
    pub phase1: Option<PhaseOne>,
    pub completed: bool,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseTwo {
    pub done: Vec<NodeId>,
    pub requeued: Vec<NodeId>,
    pub trace: Vec<TraceRecord>,
}

/// One pass of the main loop: moves `q_wait` into `q_p1` and runs Phase 1 if
/// `q_p1` is non-empty.
pub fn main_loop_step(
    state: &mut SchedulerState,
    strategy: &dyn PathSelection,
    stores: &mut Stores,
    topo: &Topology,
    cfg: &SchedulerConfig,
    now: SimTime,
    clock: &dyn Clock,
) -> Result<StepOutcome, SchedulerError> {
    let mut out = StepOutcome::default();
    if state.is_complete() {
        out.completed = true;
        return Ok(out);
    }
    while let Some(c) = state.q_wait.pop_front() {
        state.q_p1.push_back(c);
    }
    if !state.q_p1.is_empty() {
        let (p1, trace) = phase1(state, strategy, stores, topo, cfg, now, clock)?;
        out.phase1 = Some(p1);
        out.trace = trace;
    }
    Ok(out)
}

/// Assigns paths to the whole of `q_p1`, applies them through the strategy's
/// guards and moves the batch to `q_p2`.
pub fn phase1(
    state: &mut SchedulerState,
    strategy: &dyn PathSelection,
    stores: &mut Stores,
    topo: &Topology,
    cfg: &SchedulerConfig,
    now: SimTime,
    clock: &dyn Clock,
) -> Result<(PhaseOne, Vec<TraceRecord>), SchedulerError> {
    let d = state.direction;
    let batch: Vec<NodeId> = state.q_p1.iter().copied().collect();
    for &c in &batch {
        set_status(stores, c, d, TransferStatus::Phase1);
    }
    // A transfer can finish between Phase 2 and the next Phase 1; such
    // clients skip path computation and are settled by the next Phase 2.
    let active: Vec<NodeId> = batch
        .iter()
        .copied()
        .filter(|&c| {
            stores
                .clients
                .get(c)
                .is_some_and(|r| r.dir(d).remaining_mb > 0.0)
        })
        .collect();
    let (assignment, compute_ns, well_formed, changes) = if active.is_empty() {
        (
            Assignment {
                choices: Vec::new(),
                objective_t: None,
                fallback: false,
            },
            0,
            true,
            Vec::new(),
        )
    } else {
        let ctx = stores
            .assignment_context(&active, d, topo, &cfg.metric)
            .map_err(|source| SchedulerError::Context {
                direction: d,
                at: now,
                source,
            })?;
        let started = clock.now_ns();
        let assignment =
            strategy
                .compute_paths(&ctx)
                .map_err(|source| SchedulerError::Strategy {
                    direction: d,
                    at: now,
                    source,
                })?;
        let compute_ns = clock.now_ns().saturating_sub(started);
        let well_formed = assignment.is_well_formed(&ctx);
        let changes = strategy.switch_paths(&assignment, stores, d, now, &cfg.guard);
        (assignment, compute_ns, well_formed, changes)
    };

    let mut trace = Vec::with_capacity(changes.len() + 1);
    let detail = format!(
        "batch={} strategy={}{}",
        active.len(),
        strategy.name(),
        if assignment.fallback { " fallback" } else { "" }
    );
    trace.push(state.trace(now, TraceKind::Phase1, None, detail));
    for ch in &changes {
        let from = ch
            .from
            .map_or_else(|| String::from("none"), |f| format!("{f}"));
        trace.push(state.trace(
            now,
            TraceKind::Switch,
            Some(ch.client),
            format!("{from}->{}", ch.to),
        ));
    }

    state.q_p1.clear();
    for &c in &batch {
        set_status(stores, c, d, TransferStatus::Phase2);
        state.q_p2.push_back(c);
    }
    let phase2_at = if cfg.coalesce_phase2 && state.pending_phase2 > 0 {
        None
    } else {
        state.pending_phase2 += 1;
        Some(now + state.phase2_delay)
    };

    Ok((
        PhaseOne {
            batch,
            assignment,
            changes,
            phase2_at,
            compute_ns,
            well_formed,
        },
        trace,
    ))
}

/// A scheduled Phase 2 trigger fired: settle every client in `q_p2`.
pub fn phase2(state: &mut SchedulerState, stores: &mut Stores, now: SimTime) -> PhaseTwo {
    let d = state.direction;
    state.pending_phase2 = state.pending_phase2.saturating_sub(1);
    let mut out = PhaseTwo::default();
    out.trace.push(state.trace(
        now,
        TraceKind::Phase2,
        None,
        format!("checked={}", state.q_p2.len()),
    ));
    while let Some(c) = state.q_p2.pop_front() {
        let remaining = stores.clients.get(c).map_or(0.0, |r| r.dir(d).remaining_mb);
        if remaining <= 0.0 {
            state.c_done += 1;
            state.done.insert(c);
            set_status(stores, c, d, TransferStatus::Done);
            out.trace
                .push(state.trace(now, TraceKind::Done, Some(c), String::new()));
            out.done.push(c);
        } else {
            set_status(stores, c, d, TransferStatus::Phase1);
            state.q_p1.push_back(c);
            out.requeued.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::test_util::symmetric;
    use crate::strategies::{Greedy, Rfwd};
    use crate::telemetry::SmoothingWeights;
    use crate::NullClock;
    use alloc::vec;

    fn setup() -> (Topology, Stores) {
        let t = symmetric(
            5,
            &[
                (0, 1, 50.0, 1.0),
                (1, 2, 50.0, 1.0),
                (1, 3, 50.0, 1.0),
                (1, 4, 50.0, 1.0),
                (0, 4, 20.0, 1.0),
            ],
            0,
            &[2, 3, 4],
        );
        let mut s = Stores::new(&t, 3, SmoothingWeights::default()).unwrap();
        for c in [2, 3, 4] {
            s.begin_transfer(NodeId(c), Direction::S2C, 10.0);
        }
        (t, s)
    }

    #[test]
    fn empty_step_is_noop() {
        let (t, mut s) = setup();
        let mut st = SchedulerState::new(Direction::S2C, [NodeId(2)], SimTime::from_secs(5));
        let out = main_loop_step(
            &mut st,
            &Rfwd,
            &mut s,
            &t,
            &SchedulerConfig::default(),
            SimTime::ZERO,
            &NullClock,
        )
        .unwrap();
        assert!(out.phase1.is_none());
        assert!(!out.completed);
    }

    #[test]
    fn batch_moves_through_phase1_with_one_trigger() {
        let (t, mut s) = setup();
        let mut st = SchedulerState::new(
            Direction::S2C,
            [NodeId(2), NodeId(3), NodeId(4)],
            SimTime::from_secs(5),
        );
        for c in [2, 3, 4] {
            st.enqueue(NodeId(c), &mut s, SimTime::ZERO);
        }
        let out = main_loop_step(
            &mut st,
            &Greedy,
            &mut s,
            &t,
            &SchedulerConfig::default(),
            SimTime::ZERO,
            &NullClock,
        )
        .unwrap();
        let p1 = out.phase1.unwrap();
        assert_eq!(p1.batch.len(), 3);
        assert_eq!(p1.phase2_at, Some(SimTime::from_secs(5)));
        assert_eq!(p1.changes.len(), 3);
        assert!(p1.well_formed);
        assert!(st.q_wait.is_empty() && st.q_p1.is_empty());
        assert_eq!(st.q_p2.len(), 3);
        assert_eq!(st.pending_phase2(), 1);
        assert!(st.check_conservation());
    }

    #[test]
    fn phase2_splits_done_and_active() {
        let (t, mut s) = setup();
        let clients = [NodeId(2), NodeId(3), NodeId(4)];
        let mut st = SchedulerState::new(Direction::S2C, clients, SimTime::from_secs(5));
        for c in clients {
            st.enqueue(c, &mut s, SimTime::ZERO);
        }
        main_loop_step(
            &mut st,
            &Rfwd,
            &mut s,
            &t,
            &SchedulerConfig::default(),
            SimTime::ZERO,
            &NullClock,
        )
        .unwrap();
        s.finish_transfer(NodeId(3), Direction::S2C, 10.0);
        s.clients.get_mut(NodeId(2)).unwrap().s2c.remaining_mb = 6.0;
        let p2 = phase2(&mut st, &mut s, SimTime::from_secs(5));
        assert_eq!(p2.done, vec![NodeId(3)]);
        assert_eq!(p2.requeued, vec![NodeId(2), NodeId(4)]);
        assert_eq!(st.c_done, 1);
        assert!(st.q_p2.is_empty());
        assert_eq!(st.q_p1.len(), 2);
        assert!(st.check_conservation());
        assert_eq!(
            s.clients.get(NodeId(3)).unwrap().s2c.status,
            TransferStatus::Done
        );

        s.finish_transfer(NodeId(2), Direction::S2C, 10.0);
        s.finish_transfer(NodeId(4), Direction::S2C, 10.0);
        main_loop_step(
            &mut st,
            &Rfwd,
            &mut s,
            &t,
            &SchedulerConfig::default(),
            SimTime::from_secs(5),
            &NullClock,
        )
        .unwrap();
        phase2(&mut st, &mut s, SimTime::from_secs(10));
        assert!(st.is_complete());
        let out = main_loop_step(
            &mut st,
            &Rfwd,
            &mut s,
            &t,
            &SchedulerConfig::default(),
            SimTime::from_secs(10),
            &NullClock,
        )
        .unwrap();
        assert!(out.completed);
    }

    #[test]
    fn blocked_switch_still_moves_to_phase2() {
        let (t, mut s) = setup();
        let mut st = SchedulerState::new(Direction::S2C, [NodeId(4)], SimTime::from_secs(5));
        st.enqueue(NodeId(4), &mut s, SimTime::ZERO);
        s.install_path(NodeId(4), Direction::S2C, 1, SimTime::ZERO);
        let cfg = SchedulerConfig::default();
        let out = main_loop_step(
            &mut st,
            &Greedy,
            &mut s,
            &t,
            &cfg,
            SimTime::from_secs(1),
            &NullClock,
        )
        .unwrap();
        assert!(out.phase1.unwrap().changes.is_empty());
        assert_eq!(st.q_p2.len(), 1);
    }

    #[test]
    fn coalesced_triggers() {
        let (t, mut s) = setup();
        let cfg = SchedulerConfig {
            coalesce_phase2: true,
            ..SchedulerConfig::default()
        };
        let mut st = SchedulerState::new(
            Direction::C2S,
            [NodeId(2), NodeId(3)],
            SimTime::from_secs(5),
        );
        for c in [2, 3] {
            s.begin_transfer(NodeId(c), Direction::C2S, 10.0);
        }
        st.enqueue(NodeId(2), &mut s, SimTime::ZERO);
        let a =
            main_loop_step(&mut st, &Rfwd, &mut s, &t, &cfg, SimTime::ZERO, &NullClock).unwrap();
        st.enqueue(NodeId(3), &mut s, SimTime::from_secs(1));
        let b = main_loop_step(
            &mut st,
            &Rfwd,
            &mut s,
            &t,
            &cfg,
            SimTime::from_secs(1),
            &NullClock,
        )
        .unwrap();
        assert!(a.phase1.unwrap().phase2_at.is_some());
        assert!(b.phase1.unwrap().phase2_at.is_none());
    }
}
