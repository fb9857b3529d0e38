mod common;

use std::collections::VecDeque;

use common::symmetric;
use fedroute_core::netgraph::{DirectedLink, LinkId, NodeId, Topology};
use fedroute_core::telemetry::{
    emit_probes, poll_statistics, queueing_delay_ms, Direction, LinkStore, SmoothingWeights,
    Stores, TransferCounters, TransferLedger, LOSS_WINDOW,
};
use fedroute_core::SimTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lossy_pair(loss: f64, delay: f64) -> Topology {
    let links = [(0, 1), (1, 0)]
        .map(|(s, d)| DirectedLink {
            src: NodeId(s),
            dst: NodeId(d),
            capacity_mbps: 100.0,
            delay_ms: delay,
            loss,
        })
        .to_vec();
    Topology::new(
        vec![NodeId(0), NodeId(1)],
        links,
        NodeId(0),
        vec![NodeId(1)],
    )
    .unwrap()
}

#[test]
fn loss_estimate_converges_after_full_window() {
    for truth in [0.02, 0.05, 0.10] {
        let topo = lossy_pair(truth, 2.0);
        let mut sum = 0.0;
        for seed in 0..50 {
            let mut store = LinkStore::new(&topo, SmoothingWeights::default());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in 0..(LOSS_WINDOW / 10) as u64 {
                for p in emit_probes(
                    &mut store,
                    &topo,
                    SimTime::from_secs(s),
                    &[0.0, 0.0],
                    10,
                    &mut rng,
                ) {
                    store.ingest(&p);
                }
            }
            let rec = store.record(LinkId(0));
            assert_eq!(rec.loss_window.len(), LOSS_WINDOW);
            sum += rec.packet_loss;
        }
        let mean = sum / 50.0;
        assert!(
            (mean - truth).abs() <= 0.03,
            "loss {truth}: mean estimate {mean}"
        );
    }
}

#[test]
fn constant_delay_recovered_exactly_after_three_probes() {
    let topo = lossy_pair(0.0, 3.7);
    let mut store = LinkStore::new(&topo, SmoothingWeights::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let probes = emit_probes(&mut store, &topo, SimTime::ZERO, &[0.0, 0.0], 3, &mut rng);
    for p in probes.iter().filter(|p| p.link == LinkId(0)) {
        store.ingest(p);
    }
    let rec = store.record(LinkId(0));
    assert_eq!(rec.recent_latency.len(), 3);
    assert_eq!(rec.latency_ms, Some(3.7));
    assert_eq!(rec.packet_loss, 0.0);
}

#[test]
fn smoothing_weights_oldest_to_newest() {
    let w = SmoothingWeights::default();
    let v: VecDeque<f64> = [1.0, 2.0, 3.0].into();
    assert!((w.apply(&v) - 2.3).abs() < 1e-12);
    let short: VecDeque<f64> = [4.0].into();
    assert_eq!(w.apply(&short), 4.0);
}

#[test]
fn queueing_delay_grows_with_load_and_is_capped() {
    assert_eq!(queueing_delay_ms(2.0, 0.0), 2.0);
    assert_eq!(queueing_delay_ms(2.0, 0.5), 2.5);
    assert_eq!(queueing_delay_ms(2.0, 1.0), 4.0);
    assert_eq!(queueing_delay_ms(2.0, 3.0), 6.0);
}

#[test]
fn poll_reports_rates_and_remaining_data() {
    let topo = symmetric(2, &[(0, 1, 100.0, 1.0)], 0, &[1]);
    let mut stores = Stores::new(&topo, 1, SmoothingWeights::default()).unwrap();
    stores.begin_transfer(NodeId(1), Direction::S2C, 40.0);
    stores.install_path(NodeId(1), Direction::S2C, 0, SimTime::ZERO);

    // 8 Mbps for five seconds, then 15 MB moved in total.
    let mut ledger = TransferLedger {
        link_megabits: vec![40.0, 0.0],
        clients: Default::default(),
    };
    let counters = TransferCounters {
        cumulative_mb: 5.0,
        round_total_mb: 40.0,
        round_delivered_mb: 5.0,
    };
    ledger
        .clients
        .insert(NodeId(1), [counters, TransferCounters::default()]);
    let before = ledger.clone();
    poll_statistics(
        &ledger,
        &mut stores.clients,
        &mut stores.links,
        SimTime::from_secs(5),
    );
    assert_eq!(ledger, before);
    assert_eq!(stores.links.record(LinkId(0)).current_throughput_mbps, 8.0);
    let rec = stores.clients.get(NodeId(1)).unwrap().dir(Direction::S2C);
    assert_eq!(rec.rate_mbps, 8.0);
    assert_eq!(rec.remaining_mb, 35.0);

    ledger.clients.get_mut(&NodeId(1)).unwrap()[0] = TransferCounters {
        cumulative_mb: 15.0,
        round_total_mb: 40.0,
        round_delivered_mb: 15.0,
    };
    poll_statistics(
        &ledger,
        &mut stores.clients,
        &mut stores.links,
        SimTime::from_secs(10),
    );
    let rec = stores.clients.get(NodeId(1)).unwrap().dir(Direction::S2C);
    assert_eq!(rec.remaining_mb, 25.0);
    assert_eq!(rec.round_data_mb, 15.0);
}

#[test]
fn available_capacity_excludes_fl_flows_and_is_floored() {
    let topo = symmetric(2, &[(0, 1, 100.0, 1.0)], 0, &[1]);
    let mut stores = Stores::new(&topo, 1, SmoothingWeights::default()).unwrap();
    stores.begin_transfer(NodeId(1), Direction::S2C, 40.0);
    stores.install_path(NodeId(1), Direction::S2C, 0, SimTime::ZERO);
    // 90 Mbps on the link, 30 of it the client's own transfer.
    let mut ledger = TransferLedger {
        link_megabits: vec![450.0, 0.0],
        clients: Default::default(),
    };
    let c = TransferCounters {
        cumulative_mb: 18.75,
        round_total_mb: 40.0,
        round_delivered_mb: 18.75,
    };
    ledger
        .clients
        .insert(NodeId(1), [c, TransferCounters::default()]);
    poll_statistics(
        &ledger,
        &mut stores.clients,
        &mut stores.links,
        SimTime::from_secs(5),
    );
    let params = Default::default();
    let snap = stores.snapshot(&topo, &params);
    assert!((snap.links[0].available_mbps - 40.0).abs() < 1e-9);

    // Non-FL load above capacity leaves the floor.
    ledger.link_megabits[0] += 1000.0;
    poll_statistics(
        &ledger,
        &mut stores.clients,
        &mut stores.links,
        SimTime::from_secs(10),
    );
    let snap = stores.snapshot(&topo, &params);
    assert_eq!(snap.links[0].available_mbps, 5.0);
}
