//! Loopless K-shortest paths (Yen) over Dijkstra.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Add;

use super::{DirectedLink, LinkId, NodeId, Path, PathError, Topology};

/// Additive, totally ordered path weight.
pub trait PathCost: Copy + Add<Output = Self> {
    fn zero() -> Self;
    fn cost_cmp(&self, other: &Self) -> Ordering;
}

impl PathCost for f64 {
    fn zero() -> Self {
        0.0
    }
    fn cost_cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl PathCost for u32 {
    fn zero() -> Self {
        0
    }
    fn cost_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

/// Hop count, then accumulated base delay. The default candidate weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HopDelay {
    pub hops: u32,
    pub delay_ms: f64,
}

impl Add for HopDelay {
    type Output = HopDelay;
    fn add(self, rhs: HopDelay) -> HopDelay {
        HopDelay {
            hops: self.hops + rhs.hops,
            delay_ms: self.delay_ms + rhs.delay_ms,
        }
    }
}

impl PathCost for HopDelay {
    fn zero() -> Self {
        HopDelay::default()
    }
    fn cost_cmp(&self, other: &Self) -> Ordering {
        self.hops
            .cmp(&other.hops)
            .then(self.delay_ms.total_cmp(&other.delay_ms))
    }
}

pub fn hop_delay(link: &DirectedLink) -> HopDelay {
    HopDelay {
        hops: 1,
        delay_ms: link.delay_ms,
    }
}

/// Total weight of `path`, folded from the first link.
pub fn path_cost<C: PathCost>(
    topo: &Topology,
    path: &Path,
    weight: &impl Fn(&DirectedLink) -> C,
) -> C {
    path.links
        .iter()
        .fold(C::zero(), |acc, &l| acc + weight(topo.link(l)))
}

struct HeapEntry<C> {
    cost: C,
    node: usize,
}

impl<C: PathCost> PartialEq for HeapEntry<C> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<C: PathCost> Eq for HeapEntry<C> {}
impl<C: PathCost> PartialOrd for HeapEntry<C> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<C: PathCost> Ord for HeapEntry<C> {
    // Reversed so that BinaryHeap pops the cheapest, lowest-index node first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .cost_cmp(&self.cost)
            .then(other.node.cmp(&self.node))
    }
}

/// Dijkstra from `src` to `dst` avoiding banned nodes and links.
fn dijkstra<C: PathCost>(
    topo: &Topology,
    src: usize,
    dst: usize,
    weight: &impl Fn(&DirectedLink) -> C,
    banned_nodes: &[bool],
    banned_links: &[bool],
) -> Option<Path> {
    let n = topo.nodes().len();
    let mut dist: Vec<Option<C>> = vec![None; n];
    let mut via: Vec<Option<LinkId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = Some(C::zero());
    heap.push(HeapEntry {
        cost: C::zero(),
        node: src,
    });
    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == dst {
            break;
        }
        for &l in topo.out_links_by_index(node) {
            if banned_links[l.index()] {
                continue;
            }
            let link = topo.link(l);
            let next = topo.node_index(link.dst).expect("validated endpoint");
            if banned_nodes[next] || done[next] {
                continue;
            }
            let cand = cost + weight(link);
            let better = match dist[next] {
                None => true,
                Some(d) => cand.cost_cmp(&d) == Ordering::Less,
            };
            if better {
                dist[next] = Some(cand);
                via[next] = Some(l);
                heap.push(HeapEntry {
                    cost: cand,
                    node: next,
                });
            }
        }
    }
    if !done[dst] {
        return None;
    }
    let mut links = Vec::new();
    let mut nodes = vec![topo.nodes()[dst]];
    let mut cur = dst;
    while cur != src {
        let l = via[cur].expect("reached nodes have a predecessor");
        links.push(l);
        let prev = topo.link(l).src;
        nodes.push(prev);
        cur = topo.node_index(prev).expect("validated endpoint");
    }
    links.reverse();
    nodes.reverse();
    Some(Path { nodes, links })
}

/// Up to `k` loopless paths from `src` to `dst` in nondecreasing total weight.
///
/// Equal-weight paths are ordered by their node sequence, so the result is
/// deterministic and its first entry is a shortest path.
pub fn k_shortest_paths<C: PathCost>(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    k: usize,
    weight: impl Fn(&DirectedLink) -> C,
) -> Result<Vec<Path>, PathError> {
    if k == 0 {
        return Err(PathError::ZeroK);
    }
    if src == dst {
        return Err(PathError::SameEndpoints(src));
    }
    let s = topo.node_index(src).ok_or(PathError::UnknownNode(src))?;
    let d = topo.node_index(dst).ok_or(PathError::UnknownNode(dst))?;
    let n = topo.nodes().len();
    let m = topo.links().len();

    let first = dijkstra(topo, s, d, &weight, &vec![false; n], &vec![false; m])
        .ok_or(PathError::NoPath { src, dst })?;
    let mut accepted: Vec<(C, Path)> = vec![(path_cost(topo, &first, &weight), first)];
    let mut pending: Vec<(C, Path)> = Vec::new();

    let order =
        |a: &(C, Path), b: &(C, Path)| a.0.cost_cmp(&b.0).then_with(|| a.1.nodes.cmp(&b.1.nodes));

    while accepted.len() < k {
        let prev = accepted.last().expect("non-empty").1.clone();
        for i in 0..prev.links.len() {
            let spur = topo.node_index(prev.nodes[i]).expect("validated");
            let root_nodes = &prev.nodes[..=i];
            let mut banned_links = vec![false; m];
            for (_, p) in &accepted {
                if p.nodes.len() > i + 1 && &p.nodes[..=i] == root_nodes {
                    banned_links[p.links[i].index()] = true;
                }
            }
            let mut banned_nodes = vec![false; n];
            for &rn in &prev.nodes[..i] {
                banned_nodes[topo.node_index(rn).expect("validated")] = true;
            }
            if let Some(spur_path) = dijkstra(topo, spur, d, &weight, &banned_nodes, &banned_links)
            {
                let mut nodes = prev.nodes[..i].to_vec();
                nodes.extend_from_slice(&spur_path.nodes);
                let mut links = prev.links[..i].to_vec();
                links.extend_from_slice(&spur_path.links);
                let cand = Path { nodes, links };
                let known = accepted
                    .iter()
                    .chain(pending.iter())
                    .any(|(_, p)| p.links == cand.links);
                if !known {
                    pending.push((path_cost(topo, &cand, &weight), cand));
                }
            }
        }
        if pending.is_empty() {
            break;
        }
        let best = (0..pending.len())
            .min_by(|&a, &b| order(&pending[a], &pending[b]))
            .expect("non-empty");
        accepted.push(pending.swap_remove(best));
    }

    accepted.sort_by(order);
    Ok(accepted.into_iter().map(|(_, p)| p).collect())
}
