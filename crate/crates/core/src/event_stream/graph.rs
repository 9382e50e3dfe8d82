use std::collections::{BTreeMap, BTreeSet};

use super::{EdgeKey, EntityId, Event, EventKind, NodeId, Rule, Status, StreamHeader, Violation};
use crate::error::{FdgnnError, Result};

/// One activity change of an entity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub t: f64,
    pub status: Status,
    /// Event that caused it; `None` for the start graph.
    pub seq: Option<u64>,
    /// Set for edge deletions forced by deleting an endpoint.
    pub cascade: bool,
}

/// Per-entity activity over time plus the ordered event history.
#[derive(Clone, Debug, Default)]
pub struct ActivityLedger {
    transitions: BTreeMap<EntityId, Vec<Transition>>,
    history: Vec<Event>,
}

impl ActivityLedger {
    /// Status at `t` from the latest transition at time `<= t`.
    pub fn activity(&self, x: EntityId, t: f64) -> Status {
        let Some(list) = self.transitions.get(&x) else {
            return Status::Undefined;
        };
        let n = list.partition_point(|tr| tr.t <= t);
        if n == 0 {
            Status::Undefined
        } else {
            list[n - 1].status
        }
    }

    /// Status after every recorded transition.
    pub fn current(&self, x: EntityId) -> Status {
        self.transitions
            .get(&x)
            .and_then(|l| l.last())
            .map_or(Status::Undefined, |tr| tr.status)
    }

    pub fn transitions(&self, x: EntityId) -> &[Transition] {
        self.transitions.get(&x).map_or(&[], |l| l.as_slice())
    }

    /// Every entity that has ever appeared, in id order.
    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.transitions.keys().copied()
    }

    pub fn history(&self) -> &[Event] {
        &self.history
    }

    fn record(&mut self, x: EntityId, tr: Transition) {
        self.transitions.entry(x).or_default().push(tr);
    }
}

/// Static graph at a point in time: active entities and their attributes.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GraphSnapshot {
    pub t: f64,
    pub nodes: BTreeMap<NodeId, Vec<f64>>,
    pub edges: BTreeMap<EdgeKey, Vec<f64>>,
}

/// Incrementally maintained stream state.
#[derive(Clone, Debug)]
pub struct Graph {
    header: StreamHeader,
    ledger: ActivityLedger,
    snapshot: GraphSnapshot,
    /// Neighbors through any edge seen so far, active or not.
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    last: Option<(u64, f64)>,
}

impl Graph {
    /// State holding the start graph, or every start-graph violation.
    pub fn new(header: &StreamHeader) -> Result<Self> {
        let mut violations = Vec::new();
        let mut bad = |rule, detail: String| violations.push(Violation { seq: None, rule, detail });
        let mut g = Graph {
            header: header.clone(),
            ledger: ActivityLedger::default(),
            snapshot: GraphSnapshot::default(),
            adjacency: BTreeMap::new(),
            last: None,
        };
        let initial = Transition { t: 0.0, status: Status::Active, seq: None, cascade: false };
        for (v, attr) in &header.g0_nodes {
            if *v >= header.node_universe {
                bad(Rule::NodeOutOfUniverse, format!("node {v} >= universe {}", header.node_universe));
            } else if attr.len() != header.node_attr_dim {
                bad(Rule::AttrDimension, format!("node {v} attr has {} entries", attr.len()));
            } else if g.snapshot.nodes.contains_key(v) {
                bad(Rule::DuplicateInitial, format!("node {v} listed twice"));
            } else {
                g.snapshot.nodes.insert(*v, attr.clone());
                g.ledger.record(EntityId::Node(*v), initial);
            }
        }
        for (e, attr) in &header.g0_edges {
            if e.endpoints().iter().any(|v| !g.snapshot.nodes.contains_key(v)) {
                bad(Rule::EndpointNotActive, format!("edge {e} endpoint not in start graph"));
            } else if attr.len() != header.edge_attr_dim {
                bad(Rule::AttrDimension, format!("edge {e} attr has {} entries", attr.len()));
            } else if g.snapshot.edges.contains_key(e) {
                bad(Rule::DuplicateInitial, format!("edge {e} listed twice"));
            } else {
                g.snapshot.edges.insert(*e, attr.clone());
                g.ledger.record(EntityId::Edge(*e), initial);
                g.link(*e);
            }
        }
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(FdgnnError::Invalid(violations))
        }
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn ledger(&self) -> &ActivityLedger {
        &self.ledger
    }

    pub fn snapshot(&self) -> &GraphSnapshot {
        &self.snapshot
    }

    pub fn status(&self, x: EntityId) -> Status {
        self.ledger.current(x)
    }

    /// Time of the last applied event.
    pub fn last_time(&self) -> Option<f64> {
        self.last.map(|(_, t)| t)
    }

    /// Nodes that have shared an edge with `v` at any point so far.
    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.snapshot.nodes.keys().copied()
    }

    fn link(&mut self, e: EdgeKey) {
        self.adjacency.entry(e.lo()).or_default().insert(e.hi());
        self.adjacency.entry(e.hi()).or_default().insert(e.lo());
    }

    /// Whether `ev` may be applied to the current state.
    pub fn check(&self, ev: &Event) -> std::result::Result<(), Violation> {
        let fail = |rule, detail: String| Err(Violation { seq: Some(ev.seq), rule, detail });
        if !ev.t.is_finite() {
            return fail(Rule::NonFiniteTime, format!("t={}", ev.t));
        }
        match self.last {
            Some((seq, _)) if ev.seq <= seq => {
                return fail(Rule::NonIncreasingSeq, format!("seq {} after {seq}", ev.seq));
            }
            Some((_, t)) if ev.t <= t => {
                return fail(Rule::NonIncreasingTime, format!("t={} after t={t}", ev.t));
            }
            None if ev.t < 0.0 => return fail(Rule::NonIncreasingTime, format!("negative t={}", ev.t)),
            _ => {}
        }
        if ev.kind.is_node_event() != ev.subject.is_node() {
            return fail(Rule::KindSubjectMismatch, format!("kind {} on {}", ev.kind.code(), ev.subject));
        }
        let universe = self.header.node_universe;
        let out_of_universe = match ev.subject {
            EntityId::Node(v) => v >= universe,
            EntityId::Edge(e) => e.hi() >= universe,
        };
        if out_of_universe {
            return fail(Rule::NodeOutOfUniverse, format!("{} outside universe {universe}", ev.subject));
        }
        let dim = self.header.attr_dim(ev.subject);
        if ev.attr.len() != dim {
            return fail(Rule::AttrDimension, format!("attr has {} entries, expected {dim}", ev.attr.len()));
        }
        let status = self.status(ev.subject);
        match ev.kind {
            EventKind::AddNode | EventKind::AddEdge if status.is_active() => {
                fail(Rule::AddActive, format!("{} already active", ev.subject))
            }
            EventKind::DeleteNode | EventKind::DeleteEdge if !status.is_active() => {
                fail(Rule::DeleteNotActive, format!("{} is {status}", ev.subject))
            }
            EventKind::ChangeNodeAttr | EventKind::ChangeEdgeAttr if !status.is_active() => {
                fail(Rule::ChangeNotActive, format!("{} is {status}", ev.subject))
            }
            EventKind::AddEdge => {
                let EntityId::Edge(e) = ev.subject else { unreachable!() };
                match e.endpoints().into_iter().find(|v| !self.status(EntityId::Node(*v)).is_active()) {
                    Some(v) => fail(Rule::EndpointNotActive, format!("endpoint {v} of {e} not active")),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Applies `ev`. Deleting a node also deletes its active edges at the
    /// same instant; those edges are returned.
    pub fn apply(&mut self, ev: &Event) -> std::result::Result<Vec<EdgeKey>, Violation> {
        self.check(ev)?;
        let status = ev.kind.resulting_status();
        let tr = Transition { t: ev.t, status, seq: Some(ev.seq), cascade: false };
        self.ledger.record(ev.subject, tr);
        let mut cascaded = Vec::new();
        match (ev.kind, ev.subject) {
            (EventKind::AddNode | EventKind::ChangeNodeAttr, EntityId::Node(v)) => {
                self.snapshot.nodes.insert(v, ev.attr.clone());
            }
            (EventKind::DeleteNode, EntityId::Node(v)) => {
                self.snapshot.nodes.remove(&v);
                let incident: Vec<EdgeKey> = self
                    .neighbors(v)
                    .filter_map(|u| EdgeKey::new(u, v))
                    .filter(|e| self.snapshot.edges.contains_key(e))
                    .collect();
                for e in incident {
                    self.snapshot.edges.remove(&e);
                    let tr = Transition { t: ev.t, status: Status::Inactive, seq: Some(ev.seq), cascade: true };
                    self.ledger.record(EntityId::Edge(e), tr);
                    cascaded.push(e);
                }
            }
            (EventKind::AddEdge | EventKind::ChangeEdgeAttr, EntityId::Edge(e)) => {
                self.snapshot.edges.insert(e, ev.attr.clone());
                self.link(e);
            }
            (EventKind::DeleteEdge, EntityId::Edge(e)) => {
                self.snapshot.edges.remove(&e);
            }
            _ => unreachable!("arity checked above"),
        }
        self.snapshot.t = ev.t;
        self.last = Some((ev.seq, ev.t));
        self.ledger.history.push(ev.clone());
        Ok(cascaded)
    }
}
