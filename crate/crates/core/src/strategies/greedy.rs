use alloc::vec;
use alloc::vec::Vec;

use super::switching::switch_paths_greedy;
use super::{prefer, AppliedChange, Assignment, Choice, PathSelection, StrategyError, SwitchGuard};
use crate::pathmetrics::{score_with_extra, AssignmentContext};
use crate::telemetry::{Direction, Stores};
use crate::SimTime;

/// Batch indices ordered by ascending best-candidate score under `loads`
/// (weakest options first). Ties keep batch order.
pub(crate) fn weakest_first(
    ctx: &AssignmentContext,
    loads: &[u32],
) -> Result<Vec<usize>, StrategyError> {
    let mut best = Vec::with_capacity(ctx.clients.len());
    for (i, d) in ctx.clients.iter().enumerate() {
        if d.candidates.is_empty() {
            return Err(StrategyError::NoCandidates(d.client));
        }
        let mut s_max = f64::NEG_INFINITY;
        for j in 0..d.candidates.len() {
            s_max = s_max.max(score_with_extra(ctx, i, j, loads, 1)?);
        }
        best.push(s_max);
    }
    let mut order: Vec<usize> = (0..ctx.clients.len()).collect();
    order.sort_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Min-max normalization; a constant vector maps to all ones.
fn normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![1.0; scores.len()];
    }
    scores.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}

/// Sequential greedy assignment.
///
/// Clients are visited weakest first. Each picks its highest normalized
/// score given the flows placed so far, and its pick is counted before the
/// next client is scored.
pub fn greedy_assign(ctx: &AssignmentContext) -> Result<Assignment, StrategyError> {
    let mut loads = ctx.base_active.clone();
    let order = weakest_first(ctx, &loads)?;
    let mut picked: Vec<Option<Choice>> = vec![None; ctx.clients.len()];

    for i in order {
        let d = &ctx.clients[i];
        let scores = (0..d.candidates.len())
            .map(|j| score_with_extra(ctx, i, j, &loads, 1))
            .collect::<Result<Vec<f64>, _>>()?;
        let norm = normalize(&scores);
        let mut best = 0;
        for j in 1..norm.len() {
            let better = norm[j] > norm[best]
                || (norm[j] == norm[best]
                    && prefer(&d.candidates[j].path, &d.candidates[best].path).is_lt());
            if better {
                best = j;
            }
        }
        for &l in &d.candidates[best].path.links {
            loads[l.index()] += 1;
        }
        picked[i] = Some(Choice {
            client: d.client,
            index: best,
            score: scores[best],
            incumbent_score: d.current.map(|c| scores[c]),
        });
    }

    Ok(Assignment {
        choices: picked
            .into_iter()
            .map(|c| c.expect("every client visited"))
            .collect(),
        objective_t: None,
        fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Greedy;

impl PathSelection for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn compute_paths(&self, ctx: &AssignmentContext) -> Result<Assignment, StrategyError> {
        greedy_assign(ctx)
    }

    fn switch_paths(
        &self,
        assignment: &Assignment,
        stores: &mut Stores,
        direction: Direction,
        now: SimTime,
        guard: &SwitchGuard,
    ) -> Vec<AppliedChange> {
        switch_paths_greedy(assignment, stores, direction, now, guard)
    }
}
