//! JSON topology files.
//!
//! ```json
//! {"nodes": [0, 1], "server": 0, "clients": [1],
//!  "links": [{"src": 0, "dst": 1, "capacity_mbps": 100.0, "delay_ms": 2.0, "loss": 0.0}, ...]}
//! ```
//!
//! Every error carries the 1-based line of the offending element.

use std::fs;
use std::path::Path;

use fedroute_core::netgraph::{DirectedLink, NodeId, Topology, TopologyError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub nodes: Vec<u32>,
    pub server: u32,
    pub clients: Vec<u32>,
    pub links: Vec<LinkEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub src: u32,
    pub dst: u32,
    pub capacity_mbps: f64,
    pub delay_ms: f64,
    pub loss: f64,
}

#[derive(Debug, Error)]
pub enum TopoFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: TopologyError },
}

impl TopoFileError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TopoFileError::Io { .. } => None,
            TopoFileError::Syntax { line, .. } | TopoFileError::Invalid { line, .. } => Some(*line),
        }
    }
}

impl From<&Topology> for TopologyFile {
    fn from(t: &Topology) -> Self {
        TopologyFile {
            nodes: t.nodes().iter().map(|n| n.0).collect(),
            server: t.server().0,
            clients: t.clients().iter().map(|n| n.0).collect(),
            links: t
                .links()
                .iter()
                .map(|l| LinkEntry {
                    src: l.src.0,
                    dst: l.dst.0,
                    capacity_mbps: l.capacity_mbps,
                    delay_ms: l.delay_ms,
                    loss: l.loss,
                })
                .collect(),
        }
    }
}

impl TopologyFile {
    pub fn to_topology(&self) -> Result<Topology, TopologyError> {
        let links = self
            .links
            .iter()
            .map(|l| DirectedLink {
                src: NodeId(l.src),
                dst: NodeId(l.dst),
                capacity_mbps: l.capacity_mbps,
                delay_ms: l.delay_ms,
                loss: l.loss,
            })
            .collect();
        Topology::new(
            self.nodes.iter().copied().map(NodeId).collect(),
            links,
            NodeId(self.server),
            self.clients.iter().copied().map(NodeId).collect(),
        )
    }

    /// Pretty JSON with one link object per line.
    pub fn to_json(&self) -> String {
        let ints = |v: &[u32]| serde_json::to_string(v).expect("integers serialize");
        let mut out = String::from("{\n");
        out.push_str(&format!("  \"nodes\": {},\n", ints(&self.nodes)));
        out.push_str(&format!("  \"server\": {},\n", self.server));
        out.push_str(&format!("  \"clients\": {},\n", ints(&self.clients)));
        out.push_str("  \"links\": [\n");
        for (i, l) in self.links.iter().enumerate() {
            let sep = if i + 1 == self.links.len() { "" } else { "," };
            out.push_str(&format!(
                "    {}{sep}\n",
                serde_json::to_string(l).expect("link serializes")
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }
}

pub fn parse_topology(text: &str) -> Result<Topology, TopoFileError> {
    let file: TopologyFile = serde_json::from_str(text).map_err(|e| TopoFileError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.to_topology().map_err(|source| TopoFileError::Invalid {
        line: error_line(text, &source),
        source,
    })
}

pub fn load_topology(path: &Path) -> Result<Topology, TopoFileError> {
    let text = fs::read_to_string(path).map_err(|source| TopoFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_topology(&text)
}

pub fn write_topology(path: &Path, topo: &Topology) -> std::io::Result<()> {
    fs::write(path, TopologyFile::from(topo).to_json())
}

fn error_line(text: &str, err: &TopologyError) -> usize {
    use TopologyError::*;
    let link = match err {
        UnknownLinkEndpoint { index, .. }
        | SelfLoop { index, .. }
        | InvalidCapacity { index, .. }
        | InvalidDelay { index, .. }
        | InvalidLoss { index, .. }
        | DuplicateLink { index, .. }
        | MissingReverse { index, .. } => Some(*index),
        _ => None,
    };
    let key = match err {
        DuplicateNode(_) | Empty => "nodes",
        UnknownServer(_) => "server",
        UnknownClient(_) | DuplicateClient(_) | ServerIsClient(_) | Disconnected(_) => "clients",
        _ => "links",
    };
    let outline = Outline::scan(text);
    link.and_then(|i| outline.link_lines.get(i).copied())
        .or_else(|| {
            outline
                .keys
                .iter()
                .find(|(k, _)| k == key)
                .map(|&(_, line)| line)
        })
        .unwrap_or(1)
}

/// Lines of the top-level keys and of each element of the `links` array in
/// a document that already parsed as JSON.
struct Outline {
    keys: Vec<(String, usize)>,
    link_lines: Vec<usize>,
}

impl Outline {
    fn scan(text: &str) -> Outline {
        let mut keys = Vec::new();
        let mut link_lines = Vec::new();
        let mut line = 1;
        let mut depth = 0usize;
        let mut in_links = false;
        let mut chars = text.chars().peekable();
        let mut last_string = None;
        while let Some(c) = chars.next() {
            match c {
                '\n' => line += 1,
                '"' => {
                    let mut s = String::new();
                    while let Some(c) = chars.next() {
                        match c {
                            '\\' => {
                                chars.next();
                            }
                            '"' => break,
                            _ => s.push(c),
                        }
                    }
                    last_string = Some(s);
                }
                ':' => {
                    if depth == 1 {
                        if let Some(k) = last_string.take() {
                            in_links = k == "links";
                            keys.push((k, line));
                        }
                    }
                }
                '{' | '[' => {
                    if c == '{' && depth == 2 && in_links {
                        link_lines.push(line);
                    }
                    depth += 1;
                }
                '}' | ']' => depth = depth.saturating_sub(1),
                _ => {}
            }
        }
        Outline { keys, link_lines }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outline_finds_link_lines() {
        let text = "{\n \"nodes\": [0,1],\n \"links\": [\n  {\"src\": 0},\n  {\"src\": 1}\n ]\n}";
        let o = Outline::scan(text);
        assert_eq!(o.link_lines, vec![4, 5]);
        assert_eq!(o.keys[0], ("nodes".to_string(), 2));
    }
}
