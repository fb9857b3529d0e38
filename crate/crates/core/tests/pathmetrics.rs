use fedroute_core::netgraph::{LinkId, NodeId, Path};
use fedroute_core::pathmetrics::{
    active_flows, adjusted_rtt, completion_time, max_completion_time, AssignmentContext, LinkView,
    MetricParams, Snapshot,
};
use fedroute_core::strategies::{cp_assign, greedy_assign};

fn view(cap: f64, latency: f64, loss: f64, reverse: u32) -> LinkView {
    LinkView {
        available_mbps: cap,
        default_capacity_mbps: cap,
        throughput_mbps: 0.0,
        latency_ms: Some(latency),
        base_delay_ms: latency,
        loss,
        reverse: LinkId(reverse),
    }
}

/// A path over the given link ids; node ids are just the link positions.
fn path(links: &[u32]) -> Path {
    Path {
        nodes: (0..=links.len() as u32).map(NodeId).collect(),
        links: links.iter().copied().map(LinkId).collect(),
    }
}

fn ctx(
    links: Vec<LinkView>,
    clients: Vec<(u32, Vec<Vec<u32>>, f64)>,
    base: Vec<u32>,
) -> AssignmentContext {
    let batch = clients
        .into_iter()
        .map(|(c, ps, d)| (NodeId(c), ps.iter().map(|p| path(p)).collect(), d, None))
        .collect();
    AssignmentContext::new(batch, Snapshot { links }, base, MetricParams::default()).unwrap()
}

#[test]
fn adjusted_rtt_scales_with_root_loss() {
    assert!((adjusted_rtt(40.0, 0.04, 0.0) - 8.0).abs() < 1e-12);
    assert!((adjusted_rtt(10.0, 0.0, 1e-6) - 0.01).abs() < 1e-12);
}

#[test]
fn active_flows_count_batch_and_existing() {
    // Link 0 is shared; three of five clients cross it and one flow exists already.
    let links = vec![view(100.0, 1.0, 0.0, 0), view(100.0, 1.0, 0.0, 1)];
    let clients = (0..5).map(|c| (c, vec![vec![0], vec![1]], 10.0)).collect();
    let c = ctx(links, clients, vec![1, 0]);
    assert_eq!(active_flows(&c, &[0, 0, 0, 1, 1], LinkId(0)), 4);
    assert_eq!(active_flows(&c, &[0, 0, 0, 1, 1], LinkId(1)), 2);
    let idle = ctx(
        vec![view(1.0, 1.0, 0.0, 0)],
        vec![(0, vec![vec![0]], 1.0)],
        vec![0],
    );
    assert_eq!(active_flows(&idle, &[0], LinkId(0)) - 1, 0);
}

#[test]
fn sharing_a_bottleneck_doubles_completion_time() {
    let links = vec![view(80.0, 10.0, 0.01, 0)];
    let c = ctx(
        links,
        vec![(0, vec![vec![0]], 20.0), (1, vec![vec![0]], 20.0)],
        vec![0],
    );
    let solo = completion_time(&c, 0, 0, &[1]).unwrap();
    let shared = completion_time(&c, 0, 0, &c.link_loads(&[0, 0])).unwrap();
    assert!((shared - 2.0 * solo).abs() < 1e-9 * solo);
    // 20 MB at 80 Mbps over an adjusted RTT of 20 ms * sqrt(0.01 + 1e-6).
    let adj = 20.0 * (0.01f64 + 1e-6).sqrt();
    assert!((solo - 160.0 / (80.0 / adj)).abs() < 1e-9);
}

#[test]
fn cp_prefers_disjoint_links_over_a_shared_fat_one() {
    // Link 0: shared, 100 Mbps. Links 1 and 2: one per client, 60 Mbps.
    let links = vec![
        view(100.0, 0.25, 0.0, 0),
        view(60.0, 0.25, 0.0, 1),
        view(60.0, 0.25, 0.0, 2),
    ];
    let c = ctx(
        links,
        vec![
            (0, vec![vec![0], vec![1]], 30.0),
            (1, vec![vec![0], vec![2]], 30.0),
        ],
        vec![0, 0, 0],
    );
    let a = cp_assign(&c, 1000).unwrap();
    // RTT 0.5 ms sits below the 1 ms floor, so the score is the rate.
    let t = a.objective_t.unwrap();
    assert!((t - 30.0 * 8.0 / 60.0).abs() < 1e-12);
    assert_ne!(a.indices(), vec![0, 0]);
    assert!((max_completion_time(&c, &[0, 0]).unwrap() - 30.0 * 8.0 / 50.0).abs() < 1e-12);
    assert_eq!(max_completion_time(&c, &[1, 1]).unwrap(), t);
}

#[test]
fn greedy_serves_weaker_client_first() {
    // Client 0: link 0 (60) or link 2 (50). Client 1: links 0 and 3 (best
    // 40) or link 1 (20). Client 1 is weaker, takes link 0 first, and client
    // 0 then avoids it. In batch order both would end up on link 0.
    let links = vec![
        view(60.0, 0.1, 0.0, 0),
        view(20.0, 0.1, 0.0, 1),
        view(50.0, 0.1, 0.0, 2),
        view(40.0, 0.1, 0.0, 3),
    ];
    let c = ctx(
        links,
        vec![
            (0, vec![vec![0], vec![2]], 10.0),
            (1, vec![vec![0, 3], vec![1]], 10.0),
        ],
        vec![0; 4],
    );
    let a = greedy_assign(&c).unwrap();
    assert_eq!(a.indices(), vec![1, 0]);
}

#[test]
fn greedy_choice_ignores_data_volume_scaling() {
    let links = vec![
        view(50.0, 2.0, 0.0, 0),
        view(30.0, 1.0, 0.02, 1),
        view(70.0, 4.0, 0.0, 2),
    ];
    let cands = vec![vec![0], vec![1], vec![2]];
    let a = ctx(
        links.clone(),
        vec![(0, cands.clone(), 10.0), (1, cands.clone(), 20.0)],
        vec![1, 0, 2],
    );
    let b = ctx(
        links,
        vec![(0, cands.clone(), 70.0), (1, cands, 20.0)],
        vec![1, 0, 2],
    );
    assert_eq!(
        greedy_assign(&a).unwrap().indices(),
        greedy_assign(&b).unwrap().indices()
    );
}
