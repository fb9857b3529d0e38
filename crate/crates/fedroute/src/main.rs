use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedroute::bench::{overhead_profile, run_scenario, write_outputs, OverheadError, RunOptions};
use fedroute::scenario::{place_hosts, Placement, Scenario, PRESETS};
use fedroute::topofile::write_topology;
use fedroute_core::netgraph::{generate_gabriel_topology, GabrielParams};
use fedroute_core::strategies::Strategy;

const CONFIG_ERROR: u8 = 1;
const RUN_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "fedroute",
    version,
    about = "Simulate FL rounds under SDN path selection strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy on every seed of a scenario and write the results.
    Run {
        /// Scenario JSON file, or one of the built-in presets.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated strategies, replacing the scenario's list.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        /// Seeds as a list (`1,2,5`) or an inclusive range (`1-20`).
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Seeds>,
        /// Also write event logs, scheduler and telemetry traces per run.
        #[arg(long)]
        trace: bool,
    },
    /// Generate a Gabriel topology file with server and client hosts attached.
    GenTopo {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Client hosts to attach (default: one per switch).
        #[arg(long)]
        clients: Option<usize>,
    },
    /// Profile phase 1 and phase 2 compute time of the SmartFLow variants.
    Overhead {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Seeds>,
    },
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if let Some((a, b)) = s.split_once('-') {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|e| format!("bad range end: {e}"))?;
        if b < a {
            return Err(format!("empty range {a}-{b}"));
        }
        return Ok(Seeds((a..=b).collect()));
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|e| format!("bad seed `{p}`: {e}"))
        })
        .collect::<Result<_, _>>()
        .map(Seeds)
}

fn load(arg: &str, strategies: Vec<Strategy>, seeds: Option<Seeds>) -> Result<Scenario, ExitCode> {
    let mut sc = Scenario::resolve(arg).map_err(|e| {
        eprintln!("error: {e}");
        if !PRESETS.contains(&arg) {
            eprintln!("(presets: {})", PRESETS.join(", "));
        }
        ExitCode::from(CONFIG_ERROR)
    })?;
    if !strategies.is_empty() {
        sc.strategies = strategies;
    }
    if let Some(Seeds(seeds)) = seeds {
        sc.seeds = seeds;
    }
    sc.validate().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })?;
    Ok(sc)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run {
            scenario,
            out,
            strategies,
            seeds,
            trace,
        } => {
            let sc = match load(&scenario, strategies, seeds) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let batch = match run_scenario(
                &sc,
                RunOptions {
                    trace,
                    sequential: false,
                },
            ) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            if let Err(e) = write_outputs(&out, &sc, &batch) {
                eprintln!("error: writing {}: {e}", out.display());
                return ExitCode::from(RUN_FAILURE);
            }
            print!("{}", batch.table.render());
            for r in batch.runs.iter().filter(|r| r.outcome.is_err()) {
                eprintln!(
                    "run failed: {} seed {}: {}",
                    r.strategy,
                    r.seed,
                    r.outcome.as_ref().unwrap_err()
                );
            }
            if batch.failures() > 0 {
                ExitCode::from(RUN_FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::GenTopo {
            nodes,
            seed,
            out,
            clients,
        } => {
            let switches = match generate_gabriel_topology(nodes, seed, &GabrielParams::default()) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            let clients = clients.unwrap_or(nodes);
            if clients == 0 || clients > nodes {
                eprintln!("error: clients must lie in 1..={nodes}");
                return ExitCode::from(CONFIG_ERROR);
            }
            let topo = place_hosts(&switches, clients, Placement::Ring)
                .expect("ring placement on a valid graph");
            if let Err(e) = write_topology(&out, &topo) {
                eprintln!("error: writing {}: {e}", out.display());
                return ExitCode::from(RUN_FAILURE);
            }
            println!(
                "wrote {} ({} nodes, {} links)",
                out.display(),
                topo.nodes().len(),
                topo.links().len()
            );
            ExitCode::SUCCESS
        }
        Command::Overhead { scenario, seeds } => {
            let sc = match load(&scenario, Vec::new(), seeds) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match overhead_profile(&sc) {
                Ok(p) => {
                    print!("{}", p.render());
                    if p.ordering_holds() == Some(false) {
                        ExitCode::from(RUN_FAILURE)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(match e {
                        OverheadError::Config(_) => CONFIG_ERROR,
                        OverheadError::Run { .. } => RUN_FAILURE,
                    })
                }
            }
        }
    }
}
