use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::background::SizeDist;
use crate::netgraph::NodeId;
use crate::pathmetrics::MetricParams;
use crate::scheduler::SchedulerConfig;
use crate::strategies::{Strategy, SwitchGuard};
use crate::telemetry::SmoothingWeights;
use crate::SimTime;

/// Closed interval `[lo, hi]` for a uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

/// Arrival rate override for one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkLambda {
    pub src: NodeId,
    pub dst: NodeId,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

fn issue(key: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    /// Model transfer size per client per direction.
    pub model_size_mb: f64,
    pub n_rounds: u32,
    /// Background-only time before the first round starts.
    pub warmup_s: f64,
    /// Per-client local training time, drawn once per run.
    pub local_epoch_time_s: UniformRange,
    pub polling_period_s: f64,
    /// Probes per link per second.
    pub probe_rate: u32,
    pub phase2_delay_s: f64,
    /// Background arrival rate on every core link.
    pub bg_lambda: f64,
    /// Relative spread of per-link rates: each core link draws its rate
    /// uniformly from `bg_lambda * [1 - spread, 1 + spread]`.
    pub bg_lambda_spread: f64,
    /// Per-link overrides of `bg_lambda`.
    pub bg_lambda_links: Vec<LinkLambda>,
    pub bg_flow_size: SizeDist,
    /// Fair-share weight of a background flow, i.e. its parallel streams.
    pub bg_flow_weight: f64,
    pub stall_timeout_s: f64,
    /// FL flows below this rate count as stalled.
    pub min_progress_mbps: f64,
    pub k_paths: usize,
    pub strategy: Strategy,
    pub switch_threshold: f64,
    pub guard_intervals: u32,
    pub cp_node_budget: u64,
    /// Reference RTT of the ground-truth path discount.
    pub rtt_ref_ms: f64,
    /// A round that runs longer than this aborts the run.
    pub max_round_time_s: f64,
    pub coalesce_phase2: bool,
    pub metric: MetricParams,
    pub smoothing: SmoothingWeights,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            model_size_mb: 20.0,
            n_rounds: 3,
            warmup_s: 20.0,
            local_epoch_time_s: UniformRange { lo: 2.0, hi: 8.0 },
            polling_period_s: 5.0,
            probe_rate: 10,
            phase2_delay_s: 5.0,
            bg_lambda: 0.0,
            bg_lambda_spread: 0.0,
            bg_lambda_links: Vec::new(),
            bg_flow_size: SizeDist::default(),
            bg_flow_weight: 1.0,
            stall_timeout_s: 30.0,
            min_progress_mbps: 0.1,
            k_paths: 10,
            strategy: Strategy::SmartFlowGreedy,
            switch_threshold: 0.30,
            guard_intervals: 2,
            cp_node_budget: 20_000,
            rtt_ref_ms: 100.0,
            max_round_time_s: 3600.0,
            coalesce_phase2: false,
            metric: MetricParams::default(),
            smoothing: SmoothingWeights::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigIssue> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(issue(key, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigIssue> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(issue(
            key,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

impl SimConfig {
    /// Checks every field; the returned key names the offending field.
    pub fn validate(&self) -> Result<(), ConfigIssue> {
        positive("model_size_mb", self.model_size_mb)?;
        if self.n_rounds == 0 {
            return Err(issue("n_rounds", "must be at least 1"));
        }
        non_negative("warmup_s", self.warmup_s)?;
        non_negative("local_epoch_time_s.lo", self.local_epoch_time_s.lo)?;
        non_negative("local_epoch_time_s.hi", self.local_epoch_time_s.hi)?;
        if self.local_epoch_time_s.hi < self.local_epoch_time_s.lo {
            return Err(issue("local_epoch_time_s", "hi must not be below lo"));
        }
        positive("polling_period_s", self.polling_period_s)?;
        if self.probe_rate == 0 {
            return Err(issue("probe_rate", "must be at least 1"));
        }
        positive("phase2_delay_s", self.phase2_delay_s)?;
        non_negative("bg_lambda", self.bg_lambda)?;
        if !(0.0..=1.0).contains(&self.bg_lambda_spread) {
            return Err(issue(
                "bg_lambda_spread",
                format!("must lie in [0, 1], got {}", self.bg_lambda_spread),
            ));
        }
        for (i, l) in self.bg_lambda_links.iter().enumerate() {
            non_negative(&format!("bg_lambda_links[{i}].lambda"), l.lambda)?;
        }
        self.bg_flow_size
            .validate()
            .map_err(|m| issue("bg_flow_size", m))?;
        positive("bg_flow_weight", self.bg_flow_weight)?;
        positive("stall_timeout_s", self.stall_timeout_s)?;
        non_negative("min_progress_mbps", self.min_progress_mbps)?;
        if self.k_paths == 0 {
            return Err(issue("k_paths", "must be at least 1"));
        }
        non_negative("switch_threshold", self.switch_threshold)?;
        if self.guard_intervals == 0 {
            return Err(issue("guard_intervals", "must be at least 1"));
        }
        if self.cp_node_budget == 0 {
            return Err(issue("cp_node_budget", "must be at least 1"));
        }
        positive("rtt_ref_ms", self.rtt_ref_ms)?;
        positive("max_round_time_s", self.max_round_time_s)?;
        positive("metric.epsilon", self.metric.epsilon)?;
        positive("metric.rtt_floor_ms", self.metric.rtt_floor_ms)?;
        let f = self.metric.capacity_floor_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(issue(
                "metric.capacity_floor_fraction",
                format!("must lie in [0, 1], got {f}"),
            ));
        }
        let w = self.smoothing;
        for (k, v) in [
            ("smoothing.oldest", w.oldest),
            ("smoothing.middle", w.middle),
            ("smoothing.newest", w.newest),
        ] {
            non_negative(k, v)?;
        }
        if !(w.newest > 0.0) {
            return Err(issue("smoothing.newest", "must be positive"));
        }
        Ok(())
    }

    pub fn polling_period(&self) -> SimTime {
        SimTime::from_secs_f64(self.polling_period_s)
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            phase2_delay: SimTime::from_secs_f64(self.phase2_delay_s),
            guard: SwitchGuard {
                polling_period: self.polling_period(),
                interval_multiplier: self.guard_intervals,
                improvement_threshold: self.switch_threshold,
            },
            metric: self.metric,
            coalesce_phase2: self.coalesce_phase2,
        }
    }
}
