//! Path selection strategies behind one interface.
//!
//! A strategy computes an [`Assignment`] for a batch of clients from an
//! immutable [`AssignmentContext`], then applies it to the stores through its
//! switching guards.

mod baseline;
mod cp;
mod greedy;
mod switching;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{NodeId, Path};
use crate::pathmetrics::{AssignmentContext, MetricError};
use crate::telemetry::{Direction, Stores};
use crate::SimTime;

pub use baseline::{freecap_select, rfwd_select, FreeCap, Rfwd};
pub use cp::{cp_assign, cp_assign_with_stats, CpSolver, CpStats};
pub use greedy::{greedy_assign, Greedy};
pub use switching::{switch_paths_cp, switch_paths_greedy, AppliedChange, SwitchGuard};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("client {0} has no candidate paths")]
    NoCandidates(NodeId),
    #[error("search budget of {0} nodes exhausted")]
    BudgetExceeded(u64),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One client's selection: `x_{c,p} = 1` for `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub client: NodeId,
    /// Candidate index into the client's path list.
    pub index: usize,
    /// Score of the chosen path when it was picked.
    pub score: f64,
    /// Score of the client's installed path under the same loads, if any.
    pub incumbent_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// One entry per batch client, in batch order.
    pub choices: Vec<Choice>,
    /// Optimal min-max completion time in seconds, when computed exactly.
    pub objective_t: Option<f64>,
    /// Set when an exact solve gave up and a heuristic answer was returned.
    pub fallback: bool,
}

impl Assignment {
    pub fn indices(&self) -> Vec<usize> {
        self.choices.iter().map(|c| c.index).collect()
    }

    pub fn choice(&self, client: NodeId) -> Option<&Choice> {
        self.choices.iter().find(|c| c.client == client)
    }

    /// Checks that every batch client has exactly one in-range choice.
    pub fn is_well_formed(&self, ctx: &AssignmentContext) -> bool {
        self.choices.len() == ctx.clients.len()
            && self
                .choices
                .iter()
                .zip(&ctx.clients)
                .all(|(c, d)| c.client == d.client && c.index < d.candidates.len())
    }
}

/// A pluggable path selection strategy.
pub trait PathSelection {
    fn name(&self) -> &'static str;

    /// Pure given the context.
    fn compute_paths(&self, ctx: &AssignmentContext) -> Result<Assignment, StrategyError>;

    /// Applies the guarded subset of `assignment` to the stores.
    fn switch_paths(
        &self,
        assignment: &Assignment,
        stores: &mut Stores,
        direction: Direction,
        now: SimTime,
        guard: &SwitchGuard,
    ) -> Vec<AppliedChange>;
}

/// Strategy composition selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "rfwd")]
    Rfwd,
    #[serde(rename = "freecap")]
    FreeCap,
    #[serde(rename = "smartflow-greedy")]
    SmartFlowGreedy,
    /// Exact solver for the S2C broadcast, greedy for C2S uploads.
    #[serde(rename = "smartflow-cp")]
    SmartFlowCp,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Rfwd,
        Strategy::FreeCap,
        Strategy::SmartFlowGreedy,
        Strategy::SmartFlowCp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Rfwd => "rfwd",
            Strategy::FreeCap => "freecap",
            Strategy::SmartFlowGreedy => "smartflow-greedy",
            Strategy::SmartFlowCp => "smartflow-cp",
        }
    }

    /// The selector used for `direction`.
    pub fn selector(self, direction: Direction, cp_node_budget: u64) -> Selector {
        match (self, direction) {
            (Strategy::Rfwd, _) => Selector::Rfwd(Rfwd),
            (Strategy::FreeCap, _) => Selector::FreeCap(FreeCap),
            (Strategy::SmartFlowGreedy, _) | (Strategy::SmartFlowCp, Direction::C2S) => {
                Selector::Greedy(Greedy)
            }
            (Strategy::SmartFlowCp, Direction::S2C) => Selector::Cp(CpSolver {
                node_budget: cp_node_budget,
            }),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy `{0}` (expected rfwd, freecap, smartflow-greedy or smartflow-cp)")]
pub struct UnknownStrategy(pub alloc::string::String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownStrategy(s.into()))
    }
}

/// Concrete strategy for one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Rfwd(Rfwd),
    FreeCap(FreeCap),
    Greedy(Greedy),
    Cp(CpSolver),
}

impl Selector {
    fn inner(&self) -> &dyn PathSelection {
        match self {
            Selector::Rfwd(s) => s,
            Selector::FreeCap(s) => s,
            Selector::Greedy(s) => s,
            Selector::Cp(s) => s,
        }
    }
}

impl PathSelection for Selector {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn compute_paths(&self, ctx: &AssignmentContext) -> Result<Assignment, StrategyError> {
        self.inner().compute_paths(ctx)
    }

    fn switch_paths(
        &self,
        assignment: &Assignment,
        stores: &mut Stores,
        direction: Direction,
        now: SimTime,
        guard: &SwitchGuard,
    ) -> Vec<AppliedChange> {
        self.inner()
            .switch_paths(assignment, stores, direction, now, guard)
    }
}

/// Tie-break between candidates: fewer hops, then smaller node sequence.
pub(crate) fn prefer(a: &Path, b: &Path) -> core::cmp::Ordering {
    a.hops().cmp(&b.hops()).then_with(|| a.nodes.cmp(&b.nodes))
}
