//! Directed-link topologies, candidate paths and synthetic topology generation.

mod gabriel;
mod yen;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gabriel::{
    gabriel_edges, generate_gabriel_layout, generate_gabriel_topology, GabrielParams, Point,
};
pub use yen::{hop_delay, k_shortest_paths, path_cost, HopDelay, PathCost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a directed link inside its [`Topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl LinkId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedLink {
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity_mbps: f64,
    /// Base one-way delay.
    pub delay_ms: f64,
    /// Per-packet loss probability, in `[0, 1)`.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("node {0} is listed more than once")]
    DuplicateNode(NodeId),
    #[error("link {index} references unknown node {node}")]
    UnknownLinkEndpoint { index: usize, node: NodeId },
    #[error("link {index} is a self-loop on node {node}")]
    SelfLoop { index: usize, node: NodeId },
    #[error("link {index}: capacity must be > 0, got {value}")]
    InvalidCapacity { index: usize, value: f64 },
    #[error("link {index}: delay must be >= 0, got {value}")]
    InvalidDelay { index: usize, value: f64 },
    #[error("link {index}: loss must be in [0, 1), got {value}")]
    InvalidLoss { index: usize, value: f64 },
    #[error("link {index} duplicates ({src}, {dst})")]
    DuplicateLink {
        index: usize,
        src: NodeId,
        dst: NodeId,
    },
    #[error("link {index} ({src} -> {dst}) has no reverse link")]
    MissingReverse {
        index: usize,
        src: NodeId,
        dst: NodeId,
    },
    #[error("server {0} is not a node")]
    UnknownServer(NodeId),
    #[error("client {0} is not a node")]
    UnknownClient(NodeId),
    #[error("client {0} is listed more than once")]
    DuplicateClient(NodeId),
    #[error("server {0} is also listed as a client")]
    ServerIsClient(NodeId),
    #[error("node {0} is not reachable from the server")]
    Disconnected(NodeId),
    #[error("topology has no nodes")]
    Empty,
}

/// A validated directed-link graph with one server and a set of clients.
///
/// Every undirected edge is stored as two [`DirectedLink`]s so the two
/// directions may carry different delay and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeId>,
    links: Vec<DirectedLink>,
    server: NodeId,
    clients: Vec<NodeId>,
    position: BTreeMap<NodeId, usize>,
    out_links: Vec<Vec<LinkId>>,
    reverse: Vec<LinkId>,
    by_endpoints: BTreeMap<(NodeId, NodeId), LinkId>,
}

impl Topology {
    pub fn new(
        nodes: Vec<NodeId>,
        links: Vec<DirectedLink>,
        server: NodeId,
        clients: Vec<NodeId>,
    ) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut position = BTreeMap::new();
        for (i, &n) in nodes.iter().enumerate() {
            if position.insert(n, i).is_some() {
                return Err(TopologyError::DuplicateNode(n));
            }
        }

        let mut by_endpoints = BTreeMap::new();
        let mut out_links = alloc::vec![Vec::new(); nodes.len()];
        for (index, l) in links.iter().enumerate() {
            for node in [l.src, l.dst] {
                if !position.contains_key(&node) {
                    return Err(TopologyError::UnknownLinkEndpoint { index, node });
                }
            }
            if l.src == l.dst {
                return Err(TopologyError::SelfLoop { index, node: l.src });
            }
            if !(l.capacity_mbps > 0.0) || !l.capacity_mbps.is_finite() {
                return Err(TopologyError::InvalidCapacity {
                    index,
                    value: l.capacity_mbps,
                });
            }
            if !(l.delay_ms >= 0.0) || !l.delay_ms.is_finite() {
                return Err(TopologyError::InvalidDelay {
                    index,
                    value: l.delay_ms,
                });
            }
            if !(l.loss >= 0.0 && l.loss < 1.0) {
                return Err(TopologyError::InvalidLoss {
                    index,
                    value: l.loss,
                });
            }
            let id = LinkId(index as u32);
            if by_endpoints.insert((l.src, l.dst), id).is_some() {
                return Err(TopologyError::DuplicateLink {
                    index,
                    src: l.src,
                    dst: l.dst,
                });
            }
            out_links[position[&l.src]].push(id);
        }

        let mut reverse = Vec::with_capacity(links.len());
        for (index, l) in links.iter().enumerate() {
            match by_endpoints.get(&(l.dst, l.src)) {
                Some(&r) => reverse.push(r),
                None => {
                    return Err(TopologyError::MissingReverse {
                        index,
                        src: l.src,
                        dst: l.dst,
                    })
                }
            }
        }

        if !position.contains_key(&server) {
            return Err(TopologyError::UnknownServer(server));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for &c in &clients {
            if !position.contains_key(&c) {
                return Err(TopologyError::UnknownClient(c));
            }
            if c == server {
                return Err(TopologyError::ServerIsClient(c));
            }
            if !seen.insert(c) {
                return Err(TopologyError::DuplicateClient(c));
            }
        }

        let topo = Topology {
            nodes,
            links,
            server,
            clients,
            position,
            out_links,
            reverse,
            by_endpoints,
        };
        // Links come in pairs, so reachability from the server is enough.
        let reached = topo.reachable_from(server);
        for &c in &topo.clients {
            if !reached[topo.position[&c]] {
                return Err(TopologyError::Disconnected(c));
            }
        }
        Ok(topo)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &DirectedLink {
        &self.links[id.index()]
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len() as u32).map(LinkId)
    }

    pub fn server(&self) -> NodeId {
        self.server
    }

    pub fn clients(&self) -> &[NodeId] {
        &self.clients
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.position.contains_key(&n)
    }

    pub fn find_link(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.by_endpoints.get(&(src, dst)).copied()
    }

    /// The opposite-direction link of `id`.
    pub fn reverse_link(&self, id: LinkId) -> LinkId {
        self.reverse[id.index()]
    }

    pub fn out_links(&self, n: NodeId) -> &[LinkId] {
        match self.position.get(&n) {
            Some(&i) => &self.out_links[i],
            None => &[],
        }
    }

    pub(crate) fn node_index(&self, n: NodeId) -> Option<usize> {
        self.position.get(&n).copied()
    }

    pub(crate) fn out_links_by_index(&self, i: usize) -> &[LinkId] {
        &self.out_links[i]
    }

    /// True when the node is the server or a client.
    pub fn is_endpoint(&self, n: NodeId) -> bool {
        n == self.server || self.clients.contains(&n)
    }

    /// Same graph and link attributes, with a different server/client designation.
    pub fn with_endpoints(
        &self,
        server: NodeId,
        clients: Vec<NodeId>,
    ) -> Result<Self, TopologyError> {
        Topology::new(self.nodes.clone(), self.links.clone(), server, clients)
    }

    /// Attaches a dedicated server host and one host per entry of
    /// `client_switches`, each through a symmetric access link.
    ///
    /// Host ids continue after the largest existing node id: the server host
    /// comes first, then the client hosts in order.
    pub fn attach_hosts(
        &self,
        server_switch: NodeId,
        client_switches: &[NodeId],
        access: AccessLink,
    ) -> Result<Self, TopologyError> {
        let mut nodes = self.nodes.clone();
        let mut links = self.links.clone();
        let mut next = self.nodes.iter().map(|n| n.0).max().unwrap_or(0) + 1;
        let mut attach = |host: NodeId, switch: NodeId, nodes: &mut Vec<NodeId>| {
            nodes.push(host);
            for (src, dst) in [(host, switch), (switch, host)] {
                links.push(DirectedLink {
                    src,
                    dst,
                    capacity_mbps: access.capacity_mbps,
                    delay_ms: access.delay_ms,
                    loss: 0.0,
                });
            }
        };
        if !self.contains_node(server_switch) {
            return Err(TopologyError::UnknownServer(server_switch));
        }
        let server = NodeId(next);
        next += 1;
        attach(server, server_switch, &mut nodes);
        let mut clients = Vec::with_capacity(client_switches.len());
        for &sw in client_switches {
            if !self.contains_node(sw) {
                return Err(TopologyError::UnknownClient(sw));
            }
            let host = NodeId(next);
            next += 1;
            attach(host, sw, &mut nodes);
            clients.push(host);
        }
        Topology::new(nodes, links, server, clients)
    }

    /// Path over the reverse links of `path`, from its destination back to its source.
    pub fn reverse_path(&self, path: &Path) -> Path {
        let mut nodes = path.nodes.clone();
        nodes.reverse();
        let links = path
            .links
            .iter()
            .rev()
            .map(|&l| self.reverse_link(l))
            .collect();
        Path { nodes, links }
    }

    /// Builds a path from a node sequence, failing if some hop has no link.
    pub fn path_through(&self, nodes: &[NodeId]) -> Result<Path, PathError> {
        if nodes.len() < 2 {
            return Err(PathError::Empty);
        }
        let mut links = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            match self.find_link(w[0], w[1]) {
                Some(l) => links.push(l),
                None => {
                    return Err(PathError::NoLink {
                        src: w[0],
                        dst: w[1],
                    })
                }
            }
        }
        let path = Path {
            nodes: nodes.to_vec(),
            links,
        };
        path.validate(self)?;
        Ok(path)
    }

    fn reachable_from(&self, start: NodeId) -> Vec<bool> {
        let mut seen = alloc::vec![false; self.nodes.len()];
        let mut stack = Vec::new();
        if let Some(&i) = self.position.get(&start) {
            seen[i] = true;
            stack.push(i);
        }
        while let Some(i) = stack.pop() {
            for &l in &self.out_links[i] {
                let j = self.position[&self.links[l.index()].dst];
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// True when every node is reachable from every other node.
    pub fn is_connected(&self) -> bool {
        self.reachable_from(self.nodes[0]).iter().all(|&r| r)
    }
}

/// Attributes of the host-to-switch links created by [`Topology::attach_hosts`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessLink {
    pub capacity_mbps: f64,
    pub delay_ms: f64,
}

impl Default for AccessLink {
    fn default() -> Self {
        AccessLink {
            capacity_mbps: 10_000.0,
            delay_ms: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path is empty")]
    Empty,
    #[error("no link from {src} to {dst}")]
    NoLink { src: NodeId, dst: NodeId },
    #[error("links do not chain at hop {0}")]
    Broken(usize),
    #[error("node {0} repeats")]
    Loop(NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("no path from {src} to {dst}")]
    NoPath { src: NodeId, dst: NodeId },
}

/// A loopless sequence of directed links.
///
/// `nodes` has exactly one more entry than `links`; `nodes[i]` and
/// `nodes[i + 1]` are the endpoints of `links[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().expect("path has nodes")
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn contains_link(&self, l: LinkId) -> bool {
        self.links.contains(&l)
    }

    /// Checks chaining, simplicity and endpoint consistency against `topo`.
    pub fn validate(&self, topo: &Topology) -> Result<(), PathError> {
        if self.links.is_empty() || self.nodes.len() != self.links.len() + 1 {
            return Err(PathError::Empty);
        }
        for (i, &l) in self.links.iter().enumerate() {
            let link = topo.links.get(l.index()).ok_or(PathError::Broken(i))?;
            if link.src != self.nodes[i] || link.dst != self.nodes[i + 1] {
                return Err(PathError::Broken(i));
            }
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for &n in &self.nodes {
            if !seen.insert(n) {
                return Err(PathError::Loop(n));
            }
        }
        Ok(())
    }
}
