//! Node and edge embedding recursions on the tape.
//!
//! Each recursion is a sigmoid of four additive parts: local propagation
//! from neighbors (nodes) or incident nodes (edges), the previous
//! embedding weighted by self-attention, a drive linear in the time since
//! the entity's previous event, and the attribute embedding. Entities
//! without history use [`initial_embedding`] instead.

use crate::autodiff::{Tape, Var};
use crate::params::{EdgeWeights, InitWeights, NodeWeights};

/// One neighbor's contribution to a node's local propagation.
#[derive(Clone, Copy, Debug)]
pub struct NeighborTerm {
    /// Neighbor embedding at its last update.
    pub z: Var,
    /// Neighbor attribute embedding.
    pub u: Var,
    /// Neighborhood attention weight.
    pub q: Var,
}

/// One endpoint's contribution to an edge's local propagation.
#[derive(Clone, Copy, Debug)]
pub struct EndpointTerm {
    pub z: Var,
    pub u: Var,
    /// Endpoint self-attention weight.
    pub p: Var,
}

/// Inputs of one recursion step, shared by the node and edge forms.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs {
    pub h_loc: Var,
    pub z_prev: Var,
    pub p: Var,
    /// `t - t_prev`.
    pub dt: f64,
    pub u: Var,
}

fn lift(tape: &mut Tape, lift: Option<Var>, u: Var, d: usize) -> Var {
    match lift {
        Some(m) => tape.matvec(m, u, d),
        None => u,
    }
}

/// Attention-weighted sum over neighbors; zero vector when there are none.
pub fn node_local_prop(tape: &mut Tape, w: &NodeWeights<Var>, terms: &[NeighborTerm]) -> Var {
    let d = tape.value(w.m3).len();
    if terms.is_empty() {
        return tape.zeros(d);
    }
    let parts: Vec<Var> = terms
        .iter()
        .map(|t| {
            let zs = tape.scale(t.z, w.m5);
            let ul = lift(tape, w.lift, t.u, d);
            let us = tape.scale(ul, w.m6);
            let s = tape.add(zs, us);
            tape.scale(s, t.q)
        })
        .collect();
    tape.sum_of(&parts)
}

pub fn node_embedding(tape: &mut Tape, w: &NodeWeights<Var>, x: &StepInputs) -> Var {
    let d = tape.value(w.m3).len();
    let local = tape.matvec(w.m1, x.h_loc, d);
    let zp = tape.matvec(w.m2, x.z_prev, d);
    let selfp = tape.scale(zp, x.p);
    let drive = tape.scale_const(w.m3, x.dt);
    let attr = tape.matvec(w.m4, x.u, d);
    let pre = tape.sum_of(&[local, selfp, drive, attr]);
    tape.sigmoid(pre)
}

/// Incident-node propagation for an edge; a missing endpoint contributes nothing.
pub fn edge_local_prop(tape: &mut Tape, w: &EdgeWeights<Var>, a: Option<&EndpointTerm>, b: Option<&EndpointTerm>) -> Var {
    let d = tape.value(w.m9).len();
    let mut parts = Vec::with_capacity(4);
    for (end, mz, mu) in [(a, w.m11, w.m13), (b, w.m12, w.m14)] {
        let Some(end) = end else { continue };
        let zs = tape.scale(end.z, mz);
        parts.push(tape.scale(zs, end.p));
        let ul = lift(tape, w.lift, end.u, d);
        let us = tape.scale(ul, mu);
        parts.push(tape.scale(us, end.p));
    }
    if parts.is_empty() {
        return tape.zeros(d);
    }
    tape.sum_of(&parts)
}

pub fn edge_embedding(tape: &mut Tape, w: &EdgeWeights<Var>, x: &StepInputs) -> Var {
    let d = tape.value(w.m9).len();
    let local = tape.matvec(w.m7, x.h_loc, d);
    let zp = tape.matvec(w.m8, x.z_prev, d);
    let selfp = tape.scale(zp, x.p);
    let drive = tape.scale_const(w.m9, x.dt);
    let attr = tape.matvec(w.m10, x.u, d);
    let pre = tape.sum_of(&[local, selfp, drive, attr]);
    tape.sigmoid(pre)
}

/// Embedding of an entity with no activity history: local propagation (if
/// any) plus the attribute term.
pub fn initial_embedding(tape: &mut Tape, w: &InitWeights<Var>, h_loc: Option<Var>, u: Var) -> Var {
    let d = tape.value(w.attr).len() / tape.value(u).len();
    let attr = tape.matvec(w.attr, u, d);
    let pre = match h_loc {
        Some(h) => {
            let local = tape.matvec(w.local, h, d);
            tape.add(local, attr)
        }
        None => attr,
    };
    tape.sigmoid(pre)
}
