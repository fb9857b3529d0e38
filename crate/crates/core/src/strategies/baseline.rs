//! Static baselines: shortest path (RFWD) and freest bottleneck (FreeCap).
//! Both pick once when a transfer starts and never move it.

use alloc::vec::Vec;

use super::switching::install_new;
use super::{prefer, AppliedChange, Assignment, Choice, PathSelection, StrategyError, SwitchGuard};
use crate::pathmetrics::AssignmentContext;
use crate::telemetry::{Direction, Stores};
use crate::SimTime;

/// Index of the first precomputed candidate; candidates are already sorted
/// by weight and then node sequence.
pub fn rfwd_select(ctx: &AssignmentContext, client: usize) -> Result<usize, StrategyError> {
    let d = &ctx.clients[client];
    if d.candidates.is_empty() {
        return Err(StrategyError::NoCandidates(d.client));
    }
    Ok(0)
}

/// Candidate with the largest bottleneck free capacity
/// (`default_capacity - current_throughput`).
pub fn freecap_select(ctx: &AssignmentContext, client: usize) -> Result<usize, StrategyError> {
    let d = &ctx.clients[client];
    if d.candidates.is_empty() {
        return Err(StrategyError::NoCandidates(d.client));
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, cand) in d.candidates.iter().enumerate() {
        let mut free = f64::INFINITY;
        for &l in &cand.path.links {
            let v = ctx.snapshot.link(l)?;
            free = free.min(v.default_capacity_mbps - v.throughput_mbps);
        }
        let better = match best {
            None => true,
            Some((b, bf)) => {
                free > bf || (free == bf && prefer(&cand.path, &d.candidates[b].path).is_lt())
            }
        };
        if better {
            best = Some((j, free));
        }
    }
    Ok(best.expect("non-empty").0)
}

fn assign_each(
    ctx: &AssignmentContext,
    pick: fn(&AssignmentContext, usize) -> Result<usize, StrategyError>,
) -> Result<Assignment, StrategyError> {
    let mut choices = Vec::with_capacity(ctx.clients.len());
    for (i, d) in ctx.clients.iter().enumerate() {
        // Assign-once: an installed path stays.
        let index = match d.current {
            Some(cur) => cur,
            None => pick(ctx, i)?,
        };
        choices.push(Choice {
            client: d.client,
            index,
            score: 0.0,
            incumbent_score: None,
        });
    }
    Ok(Assignment {
        choices,
        objective_t: None,
        fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rfwd;

impl PathSelection for Rfwd {
    fn name(&self) -> &'static str {
        "rfwd"
    }

    fn compute_paths(&self, ctx: &AssignmentContext) -> Result<Assignment, StrategyError> {
        assign_each(ctx, rfwd_select)
    }

    fn switch_paths(
        &self,
        assignment: &Assignment,
        stores: &mut Stores,
        direction: Direction,
        now: SimTime,
        _guard: &SwitchGuard,
    ) -> Vec<AppliedChange> {
        install_new(assignment, stores, direction, now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FreeCap;

impl PathSelection for FreeCap {
    fn name(&self) -> &'static str {
        "freecap"
    }

    fn compute_paths(&self, ctx: &AssignmentContext) -> Result<Assignment, StrategyError> {
        assign_each(ctx, freecap_select)
    }

    fn switch_paths(
        &self,
        assignment: &Assignment,
        stores: &mut Stores,
        direction: Direction,
        now: SimTime,
        _guard: &SwitchGuard,
    ) -> Vec<AppliedChange> {
        install_new(assignment, stores, direction, now)
    }
}
