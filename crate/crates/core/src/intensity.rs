//! Conditional intensities of the six event kinds.
//!
//! The case logic (which activity combinations allow an event) is kept in
//! pure functions; scoring evaluates the softplus of a linear readout of
//! the relevant embeddings on the engine's tape.

use crate::autodiff::{softplus, Var};
use crate::engine::{CandidateSet, Engine};
use crate::error::Result;
use crate::event_stream::{EdgeKey, EntityId, EventKind, Status};

/// `psi * ln(1 + exp(x / psi))`.
pub fn activation(x: f64, psi: f64) -> f64 {
    psi * softplus(x / psi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Scored,
    ForcedOne,
    ForbiddenZero,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Scored => "scored",
            Branch::ForcedOne => "forced-one",
            Branch::ForbiddenZero => "forbidden-zero",
        }
    }
}

/// Which case of the intensity applies. `ends` are the endpoint statuses
/// for edge kinds and ignored for node kinds.
pub fn branch(kind: EventKind, subject: Status, ends: (Status, Status)) -> Branch {
    use Status::*;
    let both = ends.0 == Active && ends.1 == Active;
    let ok = |c: bool| if c { Branch::Scored } else { Branch::ForbiddenZero };
    match kind {
        EventKind::AddNode => ok(subject != Active),
        EventKind::DeleteNode => ok(subject == Active),
        EventKind::AddEdge => ok(subject != Active && both),
        EventKind::DeleteEdge => match (subject, both) {
            (Active, true) => Branch::Scored,
            (Active, false) => Branch::ForcedOne,
            _ => Branch::ForbiddenZero,
        },
        EventKind::ChangeNodeAttr => ok(subject == Active),
        EventKind::ChangeEdgeAttr => ok(subject == Active && both),
    }
}

/// Value of an intensity case: 0 when forbidden, 1 when forced, else the
/// activation of `score`.
pub fn case_value(br: Branch, score: f64, psi: f64) -> f64 {
    match br {
        Branch::ForbiddenZero => 0.0,
        Branch::ForcedOne => 1.0,
        Branch::Scored => activation(score, psi),
    }
}

/// Kinds that apply to an entity.
pub fn kinds_for(x: EntityId) -> &'static [EventKind] {
    match x {
        EntityId::Node(_) => &EventKind::NODE,
        EntityId::Edge(_) => &EventKind::EDGE,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Lambda {
    /// Tape node for scored branches and forced ones (a constant 1).
    pub var: Option<Var>,
    pub value: f64,
    pub branch: Branch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntensityReport {
    pub kind: EventKind,
    pub subject: EntityId,
    pub value: f64,
    pub branch: Branch,
}

impl Engine {
    pub fn branch_of(&self, kind: EventKind, subject: EntityId) -> Branch {
        let ends = match subject {
            EntityId::Node(_) => (Status::Active, Status::Active),
            EntityId::Edge(e) => (self.status(EntityId::Node(e.lo())), self.status(EntityId::Node(e.hi()))),
        };
        branch(kind, self.status(subject), ends)
    }

    /// Intensity of `kind` on `subject` at time `t` (not before the last
    /// event). `attr` is the candidate attribute used when the subject has
    /// not appeared yet; `None` means the zero attribute.
    pub fn lambda(&mut self, kind: EventKind, subject: EntityId, t: f64, attr: Option<&[f64]>) -> Result<Lambda> {
        assert_eq!(kind.is_node_event(), matches!(subject, EntityId::Node(_)), "kind does not match subject");
        let br = self.branch_of(kind, subject);
        match br {
            Branch::ForbiddenZero => return Ok(Lambda { var: None, value: 0.0, branch: br }),
            Branch::ForcedOne => {
                let one = self.tape_mut().constant(vec![1.0]);
                return Ok(Lambda { var: Some(one), value: 1.0, branch: br });
            }
            Branch::Scored => {}
        }
        let (w, rho) = self.kind_weights(kind);
        let score = match (kind, subject) {
            (EventKind::AddNode, EntityId::Node(_)) | (EventKind::DeleteNode, EntityId::Node(_)) => {
                let z = self.embedding_or_candidate(subject, t, attr)?;
                self.tape_mut().dot(w, z)
            }
            (EventKind::ChangeNodeAttr, EntityId::Node(_)) => {
                let z = self.embedding_or_candidate(subject, t, attr)?;
                let prev = self.stored_var(subject);
                let both = self.tape_mut().concat(&[z, prev]);
                self.tape_mut().dot(w, both)
            }
            (_, EntityId::Edge(e)) => {
                let zs = self.edge_triple(e, t, attr)?;
                let cat = self.tape_mut().concat(&zs);
                let mut s = self.tape_mut().dot(w, cat);
                if kind == EventKind::ChangeEdgeAttr {
                    let prev = self.stored_var(subject);
                    let pair = self.tape_mut().concat(&[zs[2], prev]);
                    let wh = self.w_hat5();
                    let extra = self.tape_mut().dot(wh, pair);
                    s = self.tape_mut().add(s, extra);
                }
                s
            }
            _ => unreachable!("kind/subject mismatch checked above"),
        };
        let var = self.tape_mut().scaled_softplus(score, rho);
        Ok(Lambda { var: Some(var), value: self.scalar(var), branch: br })
    }

    pub fn report(&mut self, kind: EventKind, subject: EntityId, t: f64, attr: Option<&[f64]>) -> Result<IntensityReport> {
        let l = self.lambda(kind, subject, t, attr)?;
        Ok(IntensityReport { kind, subject, value: l.value, branch: l.branch })
    }

    fn stored_var(&self, x: EntityId) -> Var {
        self.state(x).expect("scored branch implies history").z
    }

    fn embedding_or_candidate(&mut self, x: EntityId, t: f64, attr: Option<&[f64]>) -> Result<Var> {
        if let Some(z) = self.query_embedding(x, t) {
            return Ok(z);
        }
        let blank;
        let attr = match attr {
            Some(a) => a,
            None => {
                blank = self.blank_attr(x);
                &blank
            }
        };
        self.candidate_embedding(x, t, attr)
    }

    fn edge_triple(&mut self, e: EdgeKey, t: f64, attr: Option<&[f64]>) -> Result<[Var; 3]> {
        let zu = self.query_embedding(EntityId::Node(e.lo()), t).expect("active endpoint");
        let zv = self.query_embedding(EntityId::Node(e.hi()), t).expect("active endpoint");
        let ze = self.embedding_or_candidate(EntityId::Edge(e), t, attr)?;
        Ok([zu, zv, ze])
    }

    /// Sum of all intensities over a candidate set at time `t`, as a tape
    /// scalar. Never-seen entities are scored with the zero attribute.
    pub fn total_intensity(&mut self, t: f64, cands: &CandidateSet) -> Result<Var> {
        let mut parts = Vec::new();
        for x in &cands.observed {
            for k in kinds_for(*x) {
                if let Some(v) = self.lambda(*k, *x, t, None)?.var {
                    parts.push(v);
                }
            }
        }
        if let (Some(rep), true) = (cands.unseen_node_representative, cands.unseen_nodes > 0) {
            if let Some(v) = self.lambda(EventKind::AddNode, EntityId::Node(rep), t, None)?.var {
                parts.push(self.tape_mut().scale_const(v, cands.unseen_nodes as f64));
            }
        }
        let mut pair_parts = Vec::new();
        for e in &cands.unseen_pairs {
            if let Some(v) = self.lambda(EventKind::AddEdge, EntityId::Edge(*e), t, None)?.var {
                pair_parts.push(v);
            }
        }
        if !pair_parts.is_empty() {
            let s = self.tape_mut().sum_of(&pair_parts);
            parts.push(self.tape_mut().scale_const(s, cands.unseen_pair_weight));
        }
        if parts.is_empty() {
            return Ok(self.tape_mut().zeros(1));
        }
        Ok(self.tape_mut().sum_of(&parts))
    }

    /// Intensities of every kind an observed entity admits at `t`.
    pub fn entity_reports(&mut self, x: EntityId, t: f64) -> Result<Vec<IntensityReport>> {
        kinds_for(x).iter().map(|k| self.report(*k, x, t, None)).collect()
    }
}
