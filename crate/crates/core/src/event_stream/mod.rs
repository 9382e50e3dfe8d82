//! Graph streams: a start graph plus time-ordered add/delete/attribute
//! events on nodes and undirected edges.
//!
//! [`Graph`] is the single-writer incremental state (activity ledger and
//! current snapshot). [`validate_stream`] and [`snapshot_at`] are folds
//! over it.

mod graph;
mod io;

pub use graph::{ActivityLedger, Graph, GraphSnapshot, Transition};
pub use io::{read_stream, read_stream_str, write_stream, write_stream_string, EventRecord, HeaderRecord};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FdgnnError, Result};

pub type NodeId = u32;

/// Undirected edge with endpoints stored smaller-first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey(NodeId, NodeId);

impl EdgeKey {
    /// Canonical edge between two distinct nodes. `None` for a self-loop.
    pub fn new(a: NodeId, b: NodeId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self(a, b)),
            std::cmp::Ordering::Greater => Some(Self(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(self) -> NodeId {
        self.0
    }

    pub fn hi(self) -> NodeId {
        self.1
    }

    pub fn endpoints(self) -> [NodeId; 2] {
        [self.0, self.1]
    }

    pub fn other(self, v: NodeId) -> NodeId {
        if v == self.0 {
            self.1
        } else {
            self.0
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityId {
    Node(NodeId),
    Edge(EdgeKey),
}

impl EntityId {
    pub fn is_node(self) -> bool {
        matches!(self, EntityId::Node(_))
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityId::Node(v) => write!(f, "node:{v}"),
            EntityId::Edge(e) => write!(f, "edge:{e}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    AddNode = 0,
    DeleteNode = 1,
    AddEdge = 2,
    DeleteEdge = 3,
    ChangeNodeAttr = 4,
    ChangeEdgeAttr = 5,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::AddNode,
        EventKind::DeleteNode,
        EventKind::AddEdge,
        EventKind::DeleteEdge,
        EventKind::ChangeNodeAttr,
        EventKind::ChangeEdgeAttr,
    ];
    pub const NODE: [EventKind; 3] = [EventKind::AddNode, EventKind::DeleteNode, EventKind::ChangeNodeAttr];
    pub const EDGE: [EventKind; 3] = [EventKind::AddEdge, EventKind::DeleteEdge, EventKind::ChangeEdgeAttr];

    pub fn from_code(k: u8) -> Option<Self> {
        Self::ALL.get(k as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_node_event(self) -> bool {
        matches!(self, EventKind::AddNode | EventKind::DeleteNode | EventKind::ChangeNodeAttr)
    }

    /// Activity of the subject right after an event of this kind.
    pub fn resulting_status(self) -> Status {
        match self {
            EventKind::DeleteNode | EventKind::DeleteEdge => Status::Inactive,
            _ => Status::Active,
        }
    }
}

/// Activity of a node or edge at some time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Active,
    Inactive,
    Undefined,
}

impl Status {
    /// Numeric activity used inside attention products; undefined counts as 0.
    pub fn xi(self) -> f64 {
        match self {
            Status::Active => 1.0,
            Status::Inactive | Status::Undefined => 0.0,
        }
    }

    pub fn is_active(self) -> bool {
        self == Status::Active
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Active => "active",
            Status::Inactive => "inactive",
            Status::Undefined => "undefined",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub seq: u64,
    pub t: f64,
    pub kind: EventKind,
    pub subject: EntityId,
    pub attr: Vec<f64>,
}

impl Event {
    pub fn node(seq: u64, t: f64, kind: EventKind, v: NodeId, attr: Vec<f64>) -> Self {
        Self { seq, t, kind, subject: EntityId::Node(v), attr }
    }

    /// Panics on a self-loop; use [`EdgeKey::new`] for fallible construction.
    pub fn edge(seq: u64, t: f64, kind: EventKind, a: NodeId, b: NodeId, attr: Vec<f64>) -> Self {
        let e = EdgeKey::new(a, b).expect("edge endpoints must differ");
        Self { seq, t, kind, subject: EntityId::Edge(e), attr }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamHeader {
    pub node_attr_dim: usize,
    pub edge_attr_dim: usize,
    /// Candidate node ids are `0..node_universe`.
    pub node_universe: u32,
    pub g0_nodes: Vec<(NodeId, Vec<f64>)>,
    pub g0_edges: Vec<(EdgeKey, Vec<f64>)>,
}

impl StreamHeader {
    pub fn empty(node_attr_dim: usize, edge_attr_dim: usize, node_universe: u32) -> Self {
        Self {
            node_attr_dim,
            edge_attr_dim,
            node_universe,
            g0_nodes: Vec::new(),
            g0_edges: Vec::new(),
        }
    }

    pub fn attr_dim(&self, subject: EntityId) -> usize {
        match subject {
            EntityId::Node(_) => self.node_attr_dim,
            EntityId::Edge(_) => self.edge_attr_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub header: StreamHeader,
    pub events: Vec<Event>,
}

impl Stream {
    pub fn new(header: StreamHeader, events: Vec<Event>) -> Self {
        Self { header, events }
    }

    /// Time of the last event, or 0 for an empty stream.
    pub fn horizon(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    NonFiniteTime,
    NonIncreasingTime,
    NonIncreasingSeq,
    KindSubjectMismatch,
    NodeOutOfUniverse,
    AttrDimension,
    AddActive,
    DeleteNotActive,
    ChangeNotActive,
    EndpointNotActive,
    DuplicateInitial,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::NonFiniteTime => "non-finite-time",
            Rule::NonIncreasingTime => "non-increasing-time",
            Rule::NonIncreasingSeq => "non-increasing-seq",
            Rule::KindSubjectMismatch => "kind-subject-mismatch",
            Rule::NodeOutOfUniverse => "node-out-of-universe",
            Rule::AttrDimension => "attr-dimension",
            Rule::AddActive => "add-active",
            Rule::DeleteNotActive => "delete-not-active",
            Rule::ChangeNotActive => "change-not-active",
            Rule::EndpointNotActive => "endpoint-not-active",
            Rule::DuplicateInitial => "duplicate-initial",
        }
    }
}

/// A rule broken by one event (`seq`) or by the start graph (`seq = None`).
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub seq: Option<u64>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seq {
            Some(s) => write!(f, "seq={s} rule={} ({})", self.rule.name(), self.detail),
            None => write!(f, "seq=g0 rule={} ({})", self.rule.name(), self.detail),
        }
    }
}

/// Every rule the stream breaks. Invalid events are reported and skipped so
/// later events are checked against the state the valid prefix produced.
pub fn validate_stream(header: &StreamHeader, events: &[Event]) -> Vec<Violation> {
    let (mut graph, mut violations) = match Graph::new(header) {
        Ok(g) => (g, Vec::new()),
        Err(FdgnnError::Invalid(v)) => return v,
        Err(e) => unreachable!("start graph construction only reports violations: {e}"),
    };
    for ev in events {
        if let Err(v) = graph.apply(ev) {
            violations.push(v);
        }
    }
    violations
}

/// Graph obtained by folding every event with timestamp `<= t` into the start graph.
pub fn snapshot_at(header: &StreamHeader, events: &[Event], t: f64) -> Result<GraphSnapshot> {
    let mut graph = Graph::new(header)?;
    for ev in events.iter().take_while(|e| e.t <= t) {
        graph.apply(ev).map_err(|v| FdgnnError::Invalid(vec![v]))?;
    }
    let mut snap = graph.snapshot().clone();
    snap.t = t;
    Ok(snap)
}
