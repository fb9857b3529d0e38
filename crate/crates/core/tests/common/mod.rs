#![allow(dead_code)]

use fedroute_core::netgraph::{
    generate_gabriel_topology, hop_delay, k_shortest_paths, DirectedLink, GabrielParams, NodeId,
    Path, Topology,
};
use fedroute_core::pathmetrics::{AssignmentContext, LinkView, MetricParams, Snapshot};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Topology from undirected edges `(a, b, capacity, delay)`, both directions
/// with the same attributes.
pub fn symmetric(n: u32, edges: &[(u32, u32, f64, f64)], server: u32, clients: &[u32]) -> Topology {
    let mut links = Vec::new();
    for &(a, b, cap, d) in edges {
        for (s, t) in [(a, b), (b, a)] {
            links.push(DirectedLink {
                src: NodeId(s),
                dst: NodeId(t),
                capacity_mbps: cap,
                delay_ms: d,
                loss: 0.0,
            });
        }
    }
    Topology::new(
        (0..n).map(NodeId).collect(),
        links,
        NodeId(server),
        clients.iter().copied().map(NodeId).collect(),
    )
    .unwrap()
}

/// A random assignment instance over a small Gabriel graph: up to
/// `max_clients` clients with up to `max_k` candidates each, random
/// available capacity, latency, loss and pre-existing load.
pub fn random_instance(seed: u64, max_clients: usize, max_k: usize) -> AssignmentContext {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nodes = rng.gen_range(5..=8);
    let topo = generate_gabriel_topology(n_nodes, seed, &GabrielParams::default()).unwrap();
    let mut others: Vec<NodeId> = topo.nodes()[1..].to_vec();
    others.shuffle(&mut rng);
    let n_clients = rng.gen_range(1..=max_clients.min(others.len()));
    let k = rng.gen_range(1..=max_k);

    let links = topo
        .link_ids()
        .map(|l| {
            let cap = rng.gen_range(5.0..100.0);
            LinkView {
                available_mbps: cap,
                default_capacity_mbps: cap,
                throughput_mbps: 0.0,
                latency_ms: Some(rng.gen_range(1.0..10.0)),
                base_delay_ms: topo.link(l).delay_ms,
                loss: if rng.gen_bool(0.5) {
                    rng.gen_range(0.0..0.05)
                } else {
                    0.0
                },
                reverse: topo.reverse_link(l),
            }
        })
        .collect();
    let snapshot = Snapshot { links };
    let base_active = topo.link_ids().map(|_| rng.gen_range(0..=2)).collect();
    let batch = others[..n_clients]
        .iter()
        .map(|&c| {
            let paths = k_shortest_paths(&topo, topo.server(), c, k, hop_delay).unwrap();
            (c, paths, rng.gen_range(5.0..50.0), None)
        })
        .collect();
    AssignmentContext::new(batch, snapshot, base_active, MetricParams::default()).unwrap()
}

/// Completion-time estimate written out directly from the model: bottleneck
/// per-flow available capacity, divided by RTT times sqrt(loss + epsilon).
pub fn oracle_times(ctx: &AssignmentContext, choices: &[usize]) -> Vec<f64> {
    let p = &ctx.params;
    let paths: Vec<&Path> = choices
        .iter()
        .enumerate()
        .map(|(i, &j)| &ctx.clients[i].candidates[j].path)
        .collect();
    paths
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let mut bottleneck = f64::INFINITY;
            let mut rtt = 0.0;
            let mut delivered = 1.0;
            for &l in &path.links {
                let v = &ctx.snapshot.links[l.index()];
                let on_link = paths.iter().filter(|q| q.links.contains(&l)).count() as u32;
                let flows = (ctx.base_active[l.index()] + on_link).max(1);
                bottleneck = bottleneck.min(v.available_mbps / flows as f64);
                let back = &ctx.snapshot.links[v.reverse.index()];
                rtt += v.latency_ms.unwrap() + back.latency_ms.unwrap();
                delivered *= 1.0 - v.loss;
            }
            let loss = (1.0 - delivered).clamp(0.0, 1.0);
            let adj = (rtt * (loss + p.epsilon).sqrt()).max(p.rtt_floor_ms);
            ctx.clients[i].remaining_mb * 8.0 / (bottleneck / adj)
        })
        .collect()
}

pub fn oracle_objective(ctx: &AssignmentContext, choices: &[usize]) -> f64 {
    oracle_times(ctx, choices).into_iter().fold(0.0, f64::max)
}

/// Minimum over all K^n assignments.
pub fn exhaustive_optimum(ctx: &AssignmentContext) -> (f64, Vec<usize>) {
    let sizes: Vec<usize> = ctx.clients.iter().map(|c| c.candidates.len()).collect();
    let mut choice = vec![0; sizes.len()];
    let mut best = (f64::INFINITY, choice.clone());
    loop {
        let t = oracle_objective(ctx, &choice);
        if t < best.0 {
            best = (t, choice.clone());
        }
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return best;
            }
            choice[i] += 1;
            if choice[i] < sizes[i] {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}
