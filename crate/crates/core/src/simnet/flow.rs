use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::netgraph::{NodeId, Path};
use crate::telemetry::Direction;
use crate::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    FlS2c,
    FlC2s,
    Background,
}

impl FlowKind {
    pub fn fl(d: Direction) -> Self {
        match d {
            Direction::S2C => FlowKind::FlS2c,
            Direction::C2S => FlowKind::FlC2s,
        }
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            FlowKind::FlS2c => Some(Direction::S2C),
            FlowKind::FlC2s => Some(Direction::C2S),
            FlowKind::Background => None,
        }
    }
}

/// Ground-truth state of one fluid flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u64,
    pub kind: FlowKind,
    /// Set for FL flows.
    pub client: Option<NodeId>,
    pub round: u32,
    pub path: Path,
    pub total_mb: f64,
    pub delivered_mb: f64,
    /// Current rate, after the path discount for FL flows.
    pub rate_mbps: f64,
    /// Factor applied to the fair share; 1 for background flows.
    pub discount: f64,
    pub started_at: SimTime,
    pub last_progress_at: SimTime,
    /// Finish time at the current rate.
    pub finish_at: Option<SimTime>,
    /// Start of the current stall window.
    pub starved_since: Option<SimTime>,
}

impl Flow {
    pub fn remaining_mb(&self) -> f64 {
        (self.total_mb - self.delivered_mb).max(0.0)
    }

    pub fn is_fl(&self) -> bool {
        self.kind != FlowKind::Background
    }

    /// Updates the stall window after a rate change. Returns true when a new
    /// window opens at `now`.
    pub fn observe_rate(&mut self, now: SimTime, min_progress_mbps: f64) -> bool {
        if !self.is_fl() {
            return false;
        }
        if self.rate_mbps < min_progress_mbps {
            if self.starved_since.is_none() {
                self.starved_since = Some(now);
                return true;
            }
        } else {
            self.starved_since = None;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeoutEvent {
    pub flow: u64,
    pub client: NodeId,
    pub direction: Direction,
    pub round: u32,
    pub at: SimTime,
}

/// Emits one timeout per FL flow whose stall window has lasted at least
/// `stall_timeout` (closed interval), then restarts that window at `now`.
/// The transfer resumes from its delivered bytes.
pub fn detect_timeouts<'a>(
    flows: impl IntoIterator<Item = &'a mut Flow>,
    now: SimTime,
    stall_timeout: SimTime,
) -> Vec<TimeoutEvent> {
    let mut out = Vec::new();
    for f in flows {
        let (Some(since), Some(client), Some(direction)) =
            (f.starved_since, f.client, f.kind.direction())
        else {
            continue;
        };
        if now.saturating_sub(since) >= stall_timeout {
            out.push(TimeoutEvent {
                flow: f.id,
                client,
                direction,
                round: f.round,
                at: now,
            });
            f.starved_since = Some(now);
        }
    }
    out
}
