mod common;

use std::collections::BTreeMap;

use common::symmetric;
use fedroute_core::netgraph::{
    generate_gabriel_topology, AccessLink, GabrielParams, LinkId, NodeId, Topology,
};
use fedroute_core::simnet::{
    BackgroundSource, FlowKind, LogEvent, Recording, SimConfig, SimOutput, Simulation, SizeDist,
    UniformRange,
};
use fedroute_core::strategies::Strategy;
use fedroute_core::telemetry::Direction;
use fedroute_core::NullClock;
use proptest::prelude::*;

/// Switch graph with the server host on switch 0 and one client host per
/// entry of `client_switches`.
fn hosted(n: u32, edges: &[(u32, u32, f64, f64)], client_switches: &[u32]) -> Topology {
    let sw = symmetric(n, edges, 0, &[]);
    let cs: Vec<NodeId> = client_switches.iter().copied().map(NodeId).collect();
    sw.attach_hosts(NodeId(0), &cs, AccessLink::default())
        .unwrap()
}

fn gabriel(n: usize, seed: u64, clients: usize) -> Topology {
    let sw = generate_gabriel_topology(n, seed, &GabrielParams::default()).unwrap();
    let cs: Vec<NodeId> = (0..clients).map(|i| NodeId(((i + 1) % n) as u32)).collect();
    sw.attach_hosts(NodeId(0), &cs, AccessLink::default())
        .unwrap()
}

/// No background, no compute time, no warmup.
fn quiet(model_mb: f64) -> SimConfig {
    SimConfig {
        model_size_mb: model_mb,
        n_rounds: 1,
        warmup_s: 0.0,
        local_epoch_time_s: UniformRange { lo: 0.0, hi: 0.0 },
        ..SimConfig::default()
    }
}

fn busy(strategy: Strategy, seed: u64, lambda: f64) -> SimConfig {
    SimConfig {
        seed,
        strategy,
        n_rounds: 2,
        bg_lambda: lambda,
        bg_lambda_spread: 0.5,
        bg_flow_size: SizeDist::ExponentialDuration { mean_s: 10.0 },
        bg_flow_weight: 2.0,
        min_progress_mbps: 1.0,
        k_paths: 4,
        ..SimConfig::default()
    }
}

fn run(topo: &Topology, cfg: SimConfig) -> SimOutput {
    Simulation::new(topo, cfg, &NullClock)
        .unwrap()
        .with_recording(Recording {
            log: true,
            traces: true,
        })
        .run()
        .unwrap()
}

fn completion(out: &SimOutput, d: Direction, c: NodeId) -> f64 {
    let v = match d {
        Direction::S2C => &out.reports[0].s2c_completion_s,
        Direction::C2S => &out.reports[0].c2s_completion_s,
    };
    v.iter().find(|t| t.client == c).unwrap().seconds
}

#[test]
fn reruns_are_identical() {
    let topo = gabriel(12, 3, 8);
    for s in Strategy::ALL {
        let a = run(&topo, busy(s, 7, 0.05));
        let b = run(&topo, busy(s, 7, 0.05));
        assert_eq!(a, b, "{}", s.as_str());
        assert!(!a.log.is_empty());
    }
}

#[test]
fn every_client_finishes_with_a_clean_audit() {
    for seed in 1..=3 {
        let topo = gabriel(12, seed, 8);
        for s in Strategy::ALL {
            let out = run(&topo, busy(s, seed, 0.05));
            assert!(
                out.audit.is_clean(),
                "{} seed {seed}: {:?}",
                s.as_str(),
                out.audit
            );
            assert!(out.audit.assignments_checked > 0);
            assert_eq!(out.reports.len(), 2);
            for r in &out.reports {
                assert_eq!(r.s2c_completion_s.len(), 8);
                assert_eq!(r.c2s_completion_s.len(), 8);
                let last = r
                    .c2s_completion_s
                    .iter()
                    .map(|t| t.seconds)
                    .fold(0.0, f64::max);
                assert!(r.round_time_s >= last);
            }
        }
    }
}

#[test]
fn reassignments_respect_the_hold_time() {
    let mut reassigned = 0;
    for seed in 1..=4 {
        let topo = gabriel(12, seed, 8);
        for s in [Strategy::SmartFlowGreedy, Strategy::SmartFlowCp] {
            let cfg = busy(s, seed, 0.08);
            let hold = 2.0 * cfg.polling_period_s;
            let out = run(&topo, cfg);
            let mut last: BTreeMap<(NodeId, Direction), f64> = BTreeMap::new();
            for e in &out.log {
                if let LogEvent::PathInstall {
                    client,
                    direction,
                    from,
                    ..
                } = e.event
                {
                    let t = e.at.as_secs_f64();
                    if from.is_some() {
                        reassigned += 1;
                        let prev = last[&(client, direction)];
                        assert!(
                            t - prev >= hold - 1e-9,
                            "seed {seed}: {client:?} switched after {}s",
                            t - prev
                        );
                    }
                    last.insert((client, direction), t);
                }
            }
        }
    }
    assert!(reassigned > 0, "no reassignment exercised the guard");
}

#[test]
fn each_fl_flow_carries_exactly_the_model() {
    let topo = gabriel(12, 5, 8);
    let cfg = busy(Strategy::SmartFlowGreedy, 5, 0.05);
    let model = cfg.model_size_mb;
    let out = run(&topo, cfg);
    let mut open = BTreeMap::new();
    let mut started = 0;
    for e in &out.log {
        match &e.event {
            LogEvent::FlowStart {
                flow,
                kind,
                size_mb,
                ..
            } if *kind != FlowKind::Background => {
                assert_eq!(*size_mb, model);
                open.insert(*flow, ());
                started += 1;
            }
            LogEvent::FlowEnd { flow } => {
                open.remove(flow);
            }
            _ => {}
        }
    }
    // Two directions, eight clients, two rounds.
    assert_eq!(started, 32);
    assert!(open.is_empty());
    for (c, dirs) in round_counters(&topo, busy(Strategy::SmartFlowGreedy, 5, 0.05)) {
        for (total, delivered) in dirs {
            assert_eq!(total, model, "{c:?}");
            assert!(
                (delivered - total).abs() < 1e-9,
                "{c:?}: {delivered} of {total}"
            );
        }
    }
}

/// Per client and direction: (round total, delivered) after one round.
fn round_counters(topo: &Topology, cfg: SimConfig) -> BTreeMap<NodeId, [(f64, f64); 2]> {
    let mut sim = Simulation::new(topo, cfg, &NullClock).unwrap();
    sim.run_round().unwrap();
    sim.ledger()
        .clients
        .iter()
        .map(|(&c, d)| (c, d.map(|t| (t.round_total_mb, t.round_delivered_mb))))
        .collect()
}

#[test]
fn single_client_matches_closed_form() {
    // server host - s0 - s1 - client host, 100 Mbps core, zero loss.
    let topo = hosted(2, &[(0, 1, 100.0, 1.0)], &[1]);
    let cfg = quiet(10.0);
    let p2 = cfg.phase2_delay_s;
    let out = run(&topo, cfg);
    let c = topo.clients()[0];
    // 80 Mb at 100 Mbps is 0.8 s per direction.
    let s2c = completion(&out, Direction::S2C, c);
    let c2s = completion(&out, Direction::C2S, c);
    assert!((s2c - 0.8).abs() < 1e-3, "s2c {s2c}");
    assert!((c2s - 1.6).abs() < 1e-3, "c2s {c2s}");
    let round = out.reports[0].round_time_s;
    assert!(
        round >= 1.6 - 1e-3 && round <= 1.6 + p2 + 1e-3,
        "round {round}"
    );
    assert_eq!(out.reports[0].timeouts, 0);
}

#[test]
fn advancing_at_eight_mbps_for_one_second_moves_one_megabyte() {
    let topo = hosted(2, &[(0, 1, 8.0, 1.0)], &[1]);
    let out = run(&topo, quiet(1.0));
    let s2c = completion(&out, Direction::S2C, topo.clients()[0]);
    assert!((s2c - 1.0).abs() < 1e-3, "s2c {s2c}");
}

#[test]
fn disjoint_clients_run_in_parallel() {
    // A star: every client switch hangs off the server switch on its own link.
    let edges: Vec<(u32, u32, f64, f64)> = (1..=4).map(|i| (0, i, 100.0, 1.0)).collect();
    let one = run(&hosted(5, &edges, &[1]), quiet(10.0));
    let topo = hosted(5, &edges, &[1, 2, 3, 4]);
    let four = run(&topo, quiet(10.0));
    for &c in topo.clients() {
        let t = completion(&four, Direction::C2S, c);
        assert!((t - 1.6).abs() < 1e-3, "{c:?}: {t}");
    }
    let (a, b) = (one.reports[0].round_time_s, four.reports[0].round_time_s);
    assert!((a - b).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn round_time_tracks_the_straggler() {
    // Client on switch 2 sits behind a 10 Mbps link.
    let topo = hosted(3, &[(0, 1, 100.0, 1.0), (0, 2, 10.0, 1.0)], &[1, 2]);
    let out = run(&topo, quiet(10.0));
    let (fast, slow) = (topo.clients()[0], topo.clients()[1]);
    assert!((completion(&out, Direction::S2C, slow) - 8.0).abs() < 1e-2);
    assert!((completion(&out, Direction::C2S, slow) - 16.0).abs() < 1e-2);
    assert!(completion(&out, Direction::C2S, fast) < 2.0);
    let round = out.reports[0].round_time_s;
    assert!(
        round >= 16.0 - 1e-2 && round <= 16.0 + quiet(10.0).phase2_delay_s + 1e-2,
        "round {round}"
    );
}

#[test]
fn poisson_arrival_count_matches_rate() {
    for link in 0..5 {
        let mut src = BackgroundSource::new(11, link, 1.0, 50.0, SizeDist::default());
        let (mut t, mut n) = (0.0, 0);
        loop {
            t += src.next_gap_s().unwrap();
            if t > 1000.0 {
                break;
            }
            n += 1;
        }
        assert!((900..=1100).contains(&n), "link {link}: {n} arrivals");
    }
}

/// Background flows per core link, in start order, from the event log.
fn background_starts(out: &SimOutput) -> BTreeMap<LinkId, Vec<(f64, u64, f64)>> {
    let mut m: BTreeMap<LinkId, Vec<(f64, u64, f64)>> = BTreeMap::new();
    for e in &out.log {
        if let LogEvent::FlowStart {
            flow,
            kind: FlowKind::Background,
            links,
            size_mb,
            ..
        } = &e.event
        {
            assert_eq!(links.len(), 1);
            m.entry(links[0])
                .or_default()
                .push((e.at.as_secs_f64(), *flow, *size_mb));
        }
    }
    m
}

#[test]
fn background_flows_follow_the_link_stream_and_never_overlap() {
    let topo = gabriel(10, 2, 6);
    let cfg = busy(Strategy::Rfwd, 9, 0.2);
    let out = run(&topo, cfg.clone());
    let starts = background_starts(&out);
    assert!(!starts.is_empty());
    let mut end_at = BTreeMap::new();
    for e in &out.log {
        if let LogEvent::FlowEnd { flow } = e.event {
            end_at.insert(flow, e.at.as_secs_f64());
        }
    }
    for (link, flows) in &starts {
        assert!(out.core_links.contains(link));
        // Sizes come from the link's own stream, one draw per arrival.
        let mut src = BackgroundSource::new(
            cfg.seed,
            link.index(),
            1.0,
            topo.link(*link).capacity_mbps,
            cfg.bg_flow_size,
        );
        for &(_, _, size) in flows {
            assert_eq!(size, src.next_size_mb());
        }
        for w in flows.windows(2) {
            let prev_end = end_at[&w[0].1];
            assert!(
                prev_end <= w[1].0,
                "{link:?}: flow {} starts before {} ends",
                w[1].1,
                w[0].1
            );
        }
    }
}

#[test]
fn heavier_background_never_shortens_rounds() {
    let topo = gabriel(10, 4, 6);
    let median = |lambda: f64| {
        let mut v: Vec<f64> = (1..=20)
            .map(|seed| {
                let cfg = SimConfig {
                    n_rounds: 1,
                    bg_lambda_spread: 0.0,
                    ..busy(Strategy::Rfwd, seed, lambda)
                };
                run(&topo, cfg).reports[0].round_time_s
            })
            .collect();
        fedroute_core::simnet::median(&mut v)
    };
    let m: Vec<f64> = [0.0, 0.03, 0.1].map(median).to_vec();
    assert!(m.windows(2).all(|w| w[0] <= w[1] + 1e-9), "medians {m:?}");
}

#[test]
fn stalled_transfers_time_out_once_per_window() {
    // 100 MB at 100 Mbps takes 8 s; anything under 1000 Mbps counts as a stall.
    let topo = hosted(2, &[(0, 1, 100.0, 1.0)], &[1]);
    let cfg = SimConfig {
        min_progress_mbps: 1000.0,
        stall_timeout_s: 3.0,
        ..quiet(100.0)
    };
    let out = run(&topo, cfg);
    let logged = out
        .log
        .iter()
        .filter(|e| matches!(e.event, LogEvent::Timeout { .. }))
        .count();
    assert_eq!(out.reports[0].timeouts as usize, logged);
    // Windows close at 3 s and 6 s of each 8 s transfer.
    assert_eq!(logged, 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_runs_stay_clean(seed in 1u64..1000, n in 6usize..11, lambda in 0.0f64..0.2, s in 0usize..4) {
        let topo = gabriel(n, seed, n - 1);
        let out = run(&topo, SimConfig { n_rounds: 1, ..busy(Strategy::ALL[s], seed, lambda) });
        prop_assert!(out.audit.is_clean(), "{:?}", out.audit);
        prop_assert_eq!(out.reports[0].c2s_completion_s.len(), n - 1);
        for u in &out.link_utilization {
            prop_assert!((0.0..=1.0 + 1e-9).contains(u));
        }
    }
}
