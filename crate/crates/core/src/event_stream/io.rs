//! Line-delimited JSON stream files: one header object, then one event per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EdgeKey, EntityId, Event, EventKind, NodeId, Stream, StreamHeader};
use crate::error::{FdgnnError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub version: u32,
    pub node_attr_dim: usize,
    pub edge_attr_dim: usize,
    pub node_universe: u32,
    #[serde(default)]
    pub g0_nodes: Vec<(NodeId, Vec<f64>)>,
    #[serde(default)]
    pub g0_edges: Vec<(NodeId, NodeId, Vec<f64>)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub t: f64,
    pub k: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<[NodeId; 2]>,
    pub attr: Vec<f64>,
}

impl From<&Event> for EventRecord {
    fn from(ev: &Event) -> Self {
        let (node, edge) = match ev.subject {
            EntityId::Node(v) => (Some(v), None),
            EntityId::Edge(e) => (None, Some(e.endpoints())),
        };
        EventRecord { seq: ev.seq, t: ev.t, k: ev.kind.code(), node, edge, attr: ev.attr.clone() }
    }
}

impl EventRecord {
    pub fn into_event(self) -> std::result::Result<Event, String> {
        let kind = EventKind::from_code(self.k).ok_or_else(|| format!("unknown event kind {}", self.k))?;
        let subject = match (self.node, self.edge) {
            (Some(v), None) => EntityId::Node(v),
            (None, Some([a, b])) => {
                EntityId::Edge(EdgeKey::new(a, b).ok_or_else(|| format!("self-loop on node {a}"))?)
            }
            _ => return Err("exactly one of \"node\" or \"edge\" is required".into()),
        };
        Ok(Event { seq: self.seq, t: self.t, kind, subject, attr: self.attr })
    }
}

impl From<&StreamHeader> for HeaderRecord {
    fn from(h: &StreamHeader) -> Self {
        HeaderRecord {
            version: FORMAT_VERSION,
            node_attr_dim: h.node_attr_dim,
            edge_attr_dim: h.edge_attr_dim,
            node_universe: h.node_universe,
            g0_nodes: h.g0_nodes.clone(),
            g0_edges: h.g0_edges.iter().map(|(e, a)| (e.lo(), e.hi(), a.clone())).collect(),
        }
    }
}

impl HeaderRecord {
    pub fn into_header(self) -> std::result::Result<StreamHeader, String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        let g0_edges = self
            .g0_edges
            .into_iter()
            .map(|(a, b, attr)| EdgeKey::new(a, b).map(|e| (e, attr)).ok_or(format!("self-loop on node {a}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(StreamHeader {
            node_attr_dim: self.node_attr_dim,
            edge_attr_dim: self.edge_attr_dim,
            node_universe: self.node_universe,
            g0_nodes: self.g0_nodes,
            g0_edges,
        })
    }
}

fn parse_err(line: usize, msg: impl ToString) -> FdgnnError {
    FdgnnError::Parse { line, msg: msg.to_string() }
}

pub fn read_stream(reader: impl BufRead) -> Result<Stream> {
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (n, first) = lines.next().ok_or_else(|| parse_err(1, "missing header line"))?;
    let header: HeaderRecord = serde_json::from_str(&first?).map_err(|e| parse_err(n, e))?;
    let header = header.into_header().map_err(|e| parse_err(n, e))?;
    let mut events = Vec::new();
    for (n, line) in lines {
        let rec: EventRecord = serde_json::from_str(&line?).map_err(|e| parse_err(n, e))?;
        events.push(rec.into_event().map_err(|e| parse_err(n, e))?);
    }
    Ok(Stream { header, events })
}

pub fn read_stream_str(text: &str) -> Result<Stream> {
    read_stream(text.as_bytes())
}

pub fn write_stream(mut w: impl Write, stream: &Stream) -> Result<()> {
    let header = HeaderRecord::from(&stream.header);
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    writeln!(w)?;
    for ev in &stream.events {
        serde_json::to_writer(&mut w, &EventRecord::from(ev)).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_stream_string(stream: &Stream) -> String {
    let mut buf = Vec::new();
    write_stream(&mut buf, stream).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
