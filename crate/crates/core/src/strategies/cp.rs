//! Exact min-max assignment by branch and bound.
//!
//! Completion times couple clients through shared links, so they are only
//! evaluated exactly at complete assignments. Interior nodes use a lower
//! bound that stays valid because adding flows never raises a score: every
//! assigned client is timed under the partial loads, and every unassigned
//! client at its best candidate with itself added to those loads.

use alloc::vec;
use alloc::vec::Vec;

use super::greedy::{greedy_assign, weakest_first};
use super::switching::switch_paths_cp;
use super::{AppliedChange, Assignment, Choice, PathSelection, StrategyError, SwitchGuard};
use crate::pathmetrics::{
    completion_from_score, max_completion_time, score_with_extra, AssignmentContext,
};
use crate::telemetry::{Direction, Stores};
use crate::SimTime;

const UNSET: usize = usize::MAX;

/// Search counters from one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CpStats {
    pub nodes: u64,
}

struct Search<'a> {
    ctx: &'a AssignmentContext,
    order: Vec<usize>,
    choice: Vec<usize>,
    loads: Vec<u32>,
    best: Vec<usize>,
    best_t: f64,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    fn time(&self, client: usize, candidate: usize, extra: u32) -> Result<f64, StrategyError> {
        let score = score_with_extra(self.ctx, client, candidate, &self.loads, extra)?;
        Ok(completion_from_score(
            self.ctx.clients[client].remaining_mb,
            score,
        ))
    }

    fn shift(&mut self, client: usize, candidate: usize, up: bool) {
        for &l in &self.ctx.path(client, candidate).links {
            let v = &mut self.loads[l.index()];
            if up {
                *v += 1;
            } else {
                *v -= 1;
            }
        }
    }

    fn visit(&mut self, depth: usize) -> Result<(), StrategyError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(StrategyError::BudgetExceeded(self.budget));
        }

        let mut bound = 0.0f64;
        for k in 0..depth {
            let i = self.order[k];
            bound = bound.max(self.time(i, self.choice[i], 0)?);
            if bound >= self.best_t {
                return Ok(());
            }
        }
        if depth == self.order.len() {
            self.best_t = bound;
            self.best.clone_from(&self.choice);
            return Ok(());
        }
        for k in depth..self.order.len() {
            let i = self.order[k];
            let mut solo = f64::INFINITY;
            for j in 0..self.ctx.clients[i].candidates.len() {
                solo = solo.min(self.time(i, j, 1)?);
            }
            bound = bound.max(solo);
            if bound >= self.best_t {
                return Ok(());
            }
        }

        let client = self.order[depth];
        let n_cand = self.ctx.clients[client].candidates.len();
        let mut branches = Vec::with_capacity(n_cand);
        for j in 0..n_cand {
            branches.push((self.time(client, j, 1)?, j));
        }
        branches.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, j) in branches {
            self.choice[client] = j;
            self.shift(client, j, true);
            let r = self.visit(depth + 1);
            self.shift(client, j, false);
            r?;
        }
        self.choice[client] = UNSET;
        Ok(())
    }
}

/// Assignment minimizing the maximum estimated completion time, seeded with
/// the greedy answer as the incumbent.
///
/// Among equally good assignments the greedy answer is kept, otherwise the
/// first one found in search order. Fails with
/// [`StrategyError::BudgetExceeded`] after `node_budget` search nodes.
pub fn cp_assign(ctx: &AssignmentContext, node_budget: u64) -> Result<Assignment, StrategyError> {
    cp_assign_with_stats(ctx, node_budget).map(|(a, _)| a)
}

pub fn cp_assign_with_stats(
    ctx: &AssignmentContext,
    node_budget: u64,
) -> Result<(Assignment, CpStats), StrategyError> {
    let seed = greedy_assign(ctx)?;
    let seed_idx = seed.indices();
    let seed_t = max_completion_time(ctx, &seed_idx)?;
    let mut search = Search {
        ctx,
        order: weakest_first(ctx, &ctx.base_active)?,
        choice: vec![UNSET; ctx.clients.len()],
        loads: ctx.base_active.clone(),
        best: seed_idx,
        best_t: seed_t,
        nodes: 0,
        budget: node_budget,
    };
    search.visit(0)?;
    let stats = CpStats {
        nodes: search.nodes,
    };

    let loads = ctx.link_loads(&search.best);
    let mut choices = Vec::with_capacity(ctx.clients.len());
    for (i, &j) in search.best.iter().enumerate() {
        let d = &ctx.clients[i];
        choices.push(Choice {
            client: d.client,
            index: j,
            score: score_with_extra(ctx, i, j, &loads, 0)?,
            incumbent_score: None,
        });
    }
    let objective = max_completion_time(ctx, &search.best)?;
    Ok((
        Assignment {
            choices,
            objective_t: Some(objective),
            fallback: false,
        },
        stats,
    ))
}

/// Exact solver with a node budget; falls back to greedy when the budget runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpSolver {
    pub node_budget: u64,
}

impl Default for CpSolver {
    fn default() -> Self {
        CpSolver {
            node_budget: 20_000,
        }
    }
}

impl PathSelection for CpSolver {
    fn name(&self) -> &'static str {
        "cp"
    }

    fn compute_paths(&self, ctx: &AssignmentContext) -> Result<Assignment, StrategyError> {
        match cp_assign(ctx, self.node_budget) {
            Err(StrategyError::BudgetExceeded(_)) => {
                let mut a = greedy_assign(ctx)?;
                a.fallback = true;
                Ok(a)
            }
            other => other,
        }
    }

    fn switch_paths(
        &self,
        assignment: &Assignment,
        stores: &mut Stores,
        direction: Direction,
        now: SimTime,
        guard: &SwitchGuard,
    ) -> Vec<AppliedChange> {
        switch_paths_cp(assignment, stores, direction, now, guard)
    }
}
