use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Assignment;
use crate::netgraph::NodeId;
use crate::telemetry::{Direction, Stores};
use crate::SimTime;

/// Stability guards applied before changing an installed path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchGuard {
    pub polling_period: SimTime,
    /// Polling intervals that must pass between two changes.
    pub interval_multiplier: u32,
    /// Relative score gain required by the greedy guard.
    pub improvement_threshold: f64,
}

impl Default for SwitchGuard {
    fn default() -> Self {
        SwitchGuard {
            polling_period: SimTime::from_secs(5),
            interval_multiplier: 2,
            improvement_threshold: 0.30,
        }
    }
}

impl SwitchGuard {
    pub fn hold_time(&self) -> SimTime {
        SimTime(self.polling_period.as_micros() * self.interval_multiplier as u64)
    }

    pub fn elapsed_ok(&self, last_switch: Option<SimTime>, now: SimTime) -> bool {
        match last_switch {
            None => true,
            Some(t) => now.saturating_sub(t) >= self.hold_time(),
        }
    }
}

/// A path installation or change that was applied to the stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedChange {
    pub client: NodeId,
    pub direction: Direction,
    /// Previously installed candidate; `None` for a first installation.
    pub from: Option<usize>,
    pub to: usize,
    pub at: SimTime,
}

impl AppliedChange {
    /// True when an installed path was replaced.
    pub fn is_reassignment(&self) -> bool {
        self.from.is_some()
    }
}

fn apply(
    stores: &mut Stores,
    client: NodeId,
    d: Direction,
    from: Option<usize>,
    to: usize,
    now: SimTime,
) -> AppliedChange {
    stores.install_path(client, d, to, now);
    AppliedChange {
        client,
        direction: d,
        from,
        to,
        at: now,
    }
}

/// Installs paths for clients that have none; leaves installed paths alone.
pub(crate) fn install_new(
    assignment: &Assignment,
    stores: &mut Stores,
    d: Direction,
    now: SimTime,
) -> Vec<AppliedChange> {
    let mut out = Vec::new();
    for c in &assignment.choices {
        let current = stores.clients.get(c.client).and_then(|r| r.dir(d).current);
        if current.is_none() {
            out.push(apply(stores, c.client, d, None, c.index, now));
        }
    }
    out
}

/// Moves a client iff the recommendation differs from its path and the hold
/// time since its last change has passed.
pub fn switch_paths_cp(
    assignment: &Assignment,
    stores: &mut Stores,
    d: Direction,
    now: SimTime,
    guard: &SwitchGuard,
) -> Vec<AppliedChange> {
    let mut out = Vec::new();
    for c in &assignment.choices {
        let Some(rec) = stores.clients.get(c.client) else {
            continue;
        };
        let r = rec.dir(d);
        match r.current {
            None => out.push(apply(stores, c.client, d, None, c.index, now)),
            Some(cur) if cur != c.index && guard.elapsed_ok(r.last_switch, now) => {
                out.push(apply(stores, c.client, d, Some(cur), c.index, now))
            }
            Some(_) => {}
        }
    }
    out
}

/// Like [`switch_paths_cp`], and additionally requires the new path's score to
/// beat the installed path's by the improvement threshold.
pub fn switch_paths_greedy(
    assignment: &Assignment,
    stores: &mut Stores,
    d: Direction,
    now: SimTime,
    guard: &SwitchGuard,
) -> Vec<AppliedChange> {
    let mut out = Vec::new();
    for c in &assignment.choices {
        let Some(rec) = stores.clients.get(c.client) else {
            continue;
        };
        let r = rec.dir(d);
        match r.current {
            None => out.push(apply(stores, c.client, d, None, c.index, now)),
            Some(cur) if cur != c.index => {
                let gain_ok = match c.incumbent_score {
                    Some(old) => c.score >= (1.0 + guard.improvement_threshold) * old,
                    None => false,
                };
                if gain_ok && guard.elapsed_ok(r.last_switch, now) {
                    out.push(apply(stores, c.client, d, Some(cur), c.index, now));
                }
            }
            Some(_) => {}
        }
    }
    out
}
