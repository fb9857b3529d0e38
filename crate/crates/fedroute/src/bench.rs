//! Batch runs over strategies and seeds, the comparison table and the
//! output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use fedroute_core::simnet::{
    median, Audit, LogEntry, Phase, PhaseTiming, Recording, RoundReport, SimOutput, Simulation,
};
use fedroute_core::strategies::Strategy;
use fedroute_core::telemetry::Direction;
use fedroute_core::Clock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{ConfigError, Scenario};

/// Wall clock for phase timing.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep event logs and scheduler/telemetry traces.
    pub trace: bool,
    /// Run replications one after another, for cleaner wall-clock timings.
    pub sequential: bool,
}

/// One line of the raw report stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub strategy: Strategy,
    pub topology: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: RoundReport,
}

/// Per-replication summary of the deterministic outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub strategy: Strategy,
    pub topology: String,
    pub seed: u64,
    pub error: Option<String>,
    pub median_core_utilization: Option<f64>,
    pub end_time_s: Option<f64>,
    pub audit: Option<Audit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub strategy: Strategy,
    pub seed: u64,
    pub round: u32,
    pub direction: Direction,
    pub phase: Phase,
    pub sim_time_s: f64,
    pub batch: usize,
    pub wall_ns: u64,
    pub fallback: bool,
}

impl TimingRow {
    fn new(strategy: Strategy, seed: u64, t: &PhaseTiming) -> Self {
        TimingRow {
            strategy,
            seed,
            round: t.round,
            direction: t.direction,
            phase: t.phase,
            sim_time_s: t.at.as_secs_f64(),
            batch: t.batch,
            wall_ns: t.wall_ns,
            fallback: t.fallback,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub topology: String,
    pub outcome: Result<SimOutput, String>,
}

impl RunResult {
    pub fn line(&self) -> RunLine {
        let ok = self.outcome.as_ref().ok();
        RunLine {
            strategy: self.strategy,
            topology: self.topology.clone(),
            seed: self.seed,
            error: self.outcome.as_ref().err().cloned(),
            median_core_utilization: ok.map(SimOutput::median_core_utilization),
            end_time_s: ok.map(|o| o.end_time.as_secs_f64()),
            audit: ok.map(|o| o.audit),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub runs: Vec<RunResult>,
    pub table: ComparisonTable,
}

impl BatchOutput {
    pub fn report_lines(&self) -> Vec<ReportLine> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| (r, o)))
            .flat_map(|(r, o)| {
                o.reports.iter().map(|rep| ReportLine {
                    strategy: r.strategy,
                    topology: r.topology.clone(),
                    seed: r.seed,
                    report: rep.clone(),
                })
            })
            .collect()
    }

    pub fn timing_rows(&self) -> Vec<TimingRow> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| (r, o)))
            .flat_map(|(r, o)| {
                o.timings
                    .iter()
                    .map(|t| TimingRow::new(r.strategy, r.seed, t))
            })
            .collect()
    }

    pub fn run_lines(&self) -> Vec<RunLine> {
        self.runs.iter().map(RunResult::line).collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Runs every strategy on every seed. Configuration problems are returned
/// as errors; a failing replication is recorded in its [`RunResult`].
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<BatchOutput, ConfigError> {
    let mut topologies = BTreeMap::new();
    for &seed in &scenario.seeds {
        topologies.insert(seed, scenario.build_topology(seed)?);
    }
    let jobs: Vec<(Strategy, u64)> = scenario
        .strategies
        .iter()
        .flat_map(|&s| scenario.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let run_one = |&(strategy, seed): &(Strategy, u64)| {
        let built = &topologies[&seed];
        let clock = MonotonicClock::new();
        let outcome = Simulation::new(&built.topology, scenario.sim_config(strategy, seed), &clock)
            .map(|s| {
                s.with_recording(Recording {
                    log: opts.trace,
                    traces: opts.trace,
                })
            })
            .and_then(Simulation::run)
            .map_err(|e| e.to_string());
        RunResult {
            strategy,
            seed,
            topology: built.label.clone(),
            outcome,
        }
    };
    let runs: Vec<RunResult> = if opts.sequential {
        jobs.iter().map(run_one).collect()
    } else {
        jobs.par_iter().map(run_one).collect()
    };
    let mut batch = BatchOutput {
        runs,
        table: ComparisonTable::default(),
    };
    batch.table = ComparisonTable::from_records(
        &scenario.strategies,
        &batch.report_lines(),
        &batch.timing_rows(),
        &batch.run_lines(),
    );
    Ok(batch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub strategy: Strategy,
    pub runs: usize,
    pub failed: usize,
    pub rounds: usize,
    pub mean_round_s: f64,
    pub median_round_s: f64,
    pub s2c_reassign: u64,
    pub c2s_reassign: u64,
    pub timeouts: u64,
    pub cp_fallbacks: u64,
    pub phase1_mean_ms: f64,
    pub phase2_mean_ms: f64,
    pub median_core_utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl ComparisonTable {
    /// Aggregates raw records; rows follow `strategies`.
    pub fn from_records(
        strategies: &[Strategy],
        reports: &[ReportLine],
        timings: &[TimingRow],
        runs: &[RunLine],
    ) -> Self {
        let rows = strategies
            .iter()
            .map(|&s| {
                let reps: Vec<&RoundReport> = reports
                    .iter()
                    .filter(|r| r.strategy == s)
                    .map(|r| &r.report)
                    .collect();
                let mut times: Vec<f64> = reps.iter().map(|r| r.round_time_s).collect();
                let phase_ms = |phase: Phase| {
                    let v: Vec<f64> = timings
                        .iter()
                        .filter(|t| t.strategy == s && t.phase == phase)
                        .map(|t| t.wall_ns as f64 / 1e6)
                        .collect();
                    mean(&v)
                };
                let runs_s: Vec<&RunLine> = runs.iter().filter(|r| r.strategy == s).collect();
                let mut util: Vec<f64> = runs_s
                    .iter()
                    .filter_map(|r| r.median_core_utilization)
                    .collect();
                TableRow {
                    strategy: s,
                    runs: runs_s.len(),
                    failed: runs_s.iter().filter(|r| r.error.is_some()).count(),
                    rounds: reps.len(),
                    mean_round_s: mean(&times),
                    median_round_s: median(&mut times),
                    s2c_reassign: reps.iter().map(|r| u64::from(r.s2c_reassignments)).sum(),
                    c2s_reassign: reps.iter().map(|r| u64::from(r.c2s_reassignments)).sum(),
                    timeouts: reps.iter().map(|r| u64::from(r.timeouts)).sum(),
                    cp_fallbacks: reps.iter().map(|r| u64::from(r.cp_fallbacks)).sum(),
                    phase1_mean_ms: phase_ms(Phase::Phase1),
                    phase2_mean_ms: phase_ms(Phase::Phase2),
                    median_core_utilization: median(&mut util),
                }
            })
            .collect();
        ComparisonTable { rows }
    }

    pub fn row(&self, strategy: Strategy) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>5} {:>6} {:>6} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>6}",
            "strategy",
            "runs",
            "failed",
            "rounds",
            "mean_s",
            "median_s",
            "s2c_re",
            "c2s_re",
            "timeouts",
            "cp_fb",
            "phase1_ms",
            "phase2_ms",
            "util"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:>5} {:>6} {:>6} {:>10.2} {:>10.2} {:>8} {:>8} {:>8} {:>7}{} {:>10.3} {:>10.3} {:>6.2}",
                r.strategy.as_str(),
                r.runs,
                r.failed,
                r.rounds,
                r.mean_round_s,
                r.median_round_s,
                r.s2c_reassign,
                r.c2s_reassign,
                r.timeouts,
                r.cp_fallbacks,
                if r.cp_fallbacks > 0 { "*" } else { " " },
                r.phase1_mean_ms,
                r.phase2_mean_ms,
                r.median_core_utilization,
            );
        }
        if self.rows.iter().any(|r| r.cp_fallbacks > 0) {
            out.push_str("* exact solver hit its node budget and used the greedy answer\n");
        }
        out
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    strategy: &'a str,
    topology: &'a str,
    seed: u64,
    round: u32,
    round_time_s: f64,
    s2c_reassign: u32,
    c2s_reassign: u32,
    timeouts: u32,
}

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const RUNS_FILE: &str = "runs.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TABLE_FILE: &str = "table.txt";
pub const RESOLVED_FILE: &str = "resolved_config.json";

/// Writes the resolved scenario, raw reports, summaries, timings and, for
/// traced runs, one directory of traces per replication.
pub fn write_outputs(dir: &Path, scenario: &Scenario, batch: &BatchOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESOLVED_FILE), scenario.to_json())?;
    let reports = batch.report_lines();
    write_jsonl(&dir.join(REPORTS_FILE), &reports)?;
    write_jsonl(&dir.join(RUNS_FILE), batch.run_lines())?;

    let mut csv = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    for l in &reports {
        csv.serialize(SummaryRow {
            strategy: l.strategy.as_str(),
            topology: &l.topology,
            seed: l.seed,
            round: l.report.round,
            round_time_s: l.report.round_time_s,
            s2c_reassign: l.report.s2c_reassignments,
            c2s_reassign: l.report.c2s_reassignments,
            timeouts: l.report.timeouts,
        })?;
    }
    csv.flush()?;

    let mut csv = csv::Writer::from_path(dir.join(TIMINGS_FILE))?;
    for t in batch.timing_rows() {
        csv.serialize(t)?;
    }
    csv.flush()?;

    fs::write(dir.join(TABLE_FILE), batch.table.render())?;

    for run in &batch.runs {
        let Ok(out) = &run.outcome else { continue };
        if out.log.is_empty() && out.scheduler_trace.is_empty() && out.telemetry_trace.is_empty() {
            continue;
        }
        let tdir = dir
            .join("traces")
            .join(format!("{}-s{}", run.strategy, run.seed));
        fs::create_dir_all(&tdir)?;
        write_jsonl::<&LogEntry>(&tdir.join("events.jsonl"), &out.log)?;
        let mut w = csv::Writer::from_path(tdir.join("scheduler.csv"))?;
        w.write_record(["time_ms", "direction", "event", "client", "detail"])?;
        for t in &out.scheduler_trace {
            w.write_record([
                format!("{}", t.time.as_millis_f64()),
                serde_json::to_value(t.direction)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                t.event.as_str().to_string(),
                t.client.map(|c| c.to_string()).unwrap_or_default(),
                t.detail.clone(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(tdir.join("telemetry.csv"))?;
        for row in &out.telemetry_trace {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Parses a report stream written by [`write_outputs`].
pub fn read_report_lines(text: &str) -> serde_json::Result<Vec<ReportLine>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadRow {
    pub strategy: Strategy,
    pub phase: Phase,
    /// Smallest batch size included.
    pub min_batch: usize,
    pub invocations: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadProfile {
    pub rows: Vec<OverheadRow>,
    /// Mean S2C phase-1 time over batches of at least [`ORDERING_MIN_BATCH`]
    /// clients: greedy first, then the exact solver. `None` when either has
    /// no such batch.
    pub large_batch_means_ms: Option<(f64, f64)>,
}

pub const ORDERING_MIN_BATCH: usize = 20;

impl OverheadProfile {
    /// Greedy is faster than the exact solver on large batches.
    pub fn ordering_holds(&self) -> Option<bool> {
        self.large_batch_means_ms.map(|(g, cp)| g < cp)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<18} {:<7} {:>9} {:>11} {:>10} {:>10} {:>9}\n",
            "strategy", "phase", "min_batch", "invocations", "mean_ms", "max_ms", "fallbacks"
        );
        for r in &self.rows {
            let phase = if r.phase == Phase::Phase1 {
                "phase1"
            } else {
                "phase2"
            };
            let _ = writeln!(
                out,
                "{:<18} {:<7} {:>9} {:>11} {:>10.3} {:>10.3} {:>9}",
                r.strategy.as_str(),
                phase,
                r.min_batch,
                r.invocations,
                r.mean_ms,
                r.max_ms,
                r.fallbacks
            );
        }
        match self.large_batch_means_ms {
            Some((g, cp)) => {
                let verdict = if g < cp { "holds" } else { "VIOLATED" };
                let _ = writeln!(
                    out,
                    "s2c batches >= {ORDERING_MIN_BATCH}: greedy {g:.3} ms, cp {cp:.3} ms, ordering {verdict}"
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "no s2c batch of {ORDERING_MIN_BATCH}+ clients; ordering not checked"
                );
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OverheadError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{strategy} seed {seed}: {message}")]
    Run {
        strategy: Strategy,
        seed: u64,
        message: String,
    },
}

/// Phase timing distribution of the two SmartFLow variants, run one
/// replication at a time.
pub fn overhead_profile(scenario: &Scenario) -> Result<OverheadProfile, OverheadError> {
    let wanted = [Strategy::SmartFlowGreedy, Strategy::SmartFlowCp];
    for s in wanted {
        if !scenario.strategies.contains(&s) {
            return Err(ConfigError::Invalid {
                key: "strategies".into(),
                message: format!("overhead profiling needs {s}"),
            }
            .into());
        }
    }
    let mut sc = scenario.clone();
    sc.strategies = wanted.to_vec();
    let batch = run_scenario(
        &sc,
        RunOptions {
            trace: false,
            sequential: true,
        },
    )?;
    if let Some(failed) = batch.runs.iter().find(|r| r.outcome.is_err()) {
        return Err(OverheadError::Run {
            strategy: failed.strategy,
            seed: failed.seed,
            message: failed.outcome.clone().unwrap_err(),
        });
    }
    Ok(profile_timings(&batch.timing_rows()))
}

pub fn profile_timings(timings: &[TimingRow]) -> OverheadProfile {
    let mut rows = Vec::new();
    for s in [Strategy::SmartFlowGreedy, Strategy::SmartFlowCp] {
        for phase in [Phase::Phase1, Phase::Phase2] {
            for min_batch in [1, ORDERING_MIN_BATCH] {
                let sel: Vec<&TimingRow> = timings
                    .iter()
                    .filter(|t| t.strategy == s && t.phase == phase && t.batch >= min_batch)
                    .collect();
                if sel.is_empty() {
                    continue;
                }
                let ms: Vec<f64> = sel.iter().map(|t| t.wall_ns as f64 / 1e6).collect();
                rows.push(OverheadRow {
                    strategy: s,
                    phase,
                    min_batch,
                    invocations: sel.len(),
                    mean_ms: mean(&ms),
                    max_ms: ms.iter().copied().fold(0.0, f64::max),
                    fallbacks: sel.iter().filter(|t| t.fallback).count(),
                });
            }
        }
    }
    let large = |s: Strategy| {
        let ms: Vec<f64> = timings
            .iter()
            .filter(|t| {
                t.strategy == s
                    && t.phase == Phase::Phase1
                    && t.direction == Direction::S2C
                    && t.batch >= ORDERING_MIN_BATCH
            })
            .map(|t| t.wall_ns as f64 / 1e6)
            .collect();
        (!ms.is_empty()).then(|| mean(&ms))
    };
    let large_batch_means_ms = large(Strategy::SmartFlowGreedy).zip(large(Strategy::SmartFlowCp));
    OverheadProfile {
        rows,
        large_batch_means_ms,
    }
}
