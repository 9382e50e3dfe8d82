//! Raw attribute encoding and the recursive attribute embedding.
//!
//! A raw encoder turns an application attribute into a fixed-size vector.
//! The attribute embedding then folds that encoding into the owner's
//! previous attribute embedding with one affine map, without a
//! nonlinearity: `u_t = M0 [u_prev; raw] + b`.

use crate::autodiff::{Tape, Var};
use crate::error::{FdgnnError, Result};
use crate::params::CodecWeights;

/// Maps an attribute payload to its raw encoding on the tape.
pub trait RawEncoder: Send + Sync + std::fmt::Debug {
    fn encode(&self, tape: &mut Tape, w: &CodecWeights<Var>, attr: &[f64]) -> Result<Var>;
}

/// Learnable affine encoder `W attr + b`.
#[derive(Clone, Copy, Debug, Default)]
pub struct AffineEncoder;

impl RawEncoder for AffineEncoder {
    fn encode(&self, tape: &mut Tape, w: &CodecWeights<Var>, attr: &[f64]) -> Result<Var> {
        encode_raw(tape, w, attr)
    }
}

pub fn encode_raw(tape: &mut Tape, w: &CodecWeights<Var>, attr: &[f64]) -> Result<Var> {
    let rows = tape.value(w.enc_b).len();
    let expected = tape.value(w.enc_w).len() / rows.max(1);
    if attr.len() != expected {
        return Err(FdgnnError::Shape { what: "attribute".into(), expected, got: attr.len() });
    }
    let x = tape.constant(attr.to_vec());
    let wx = tape.matvec(w.enc_w, x, rows);
    Ok(tape.add(wx, w.enc_b))
}

/// One step of the attribute recursion.
pub fn embed_attribute(tape: &mut Tape, w: &CodecWeights<Var>, prev: Var, raw: Var) -> Result<Var> {
    let ubar = tape.value(w.b).len();
    let cols = tape.value(w.m0).len() / ubar.max(1);
    let got = tape.value(prev).len() + tape.value(raw).len();
    if tape.value(prev).len() != ubar || got != cols {
        return Err(FdgnnError::Shape { what: "attribute embedding input".into(), expected: cols, got });
    }
    let x = tape.concat(&[prev, raw]);
    let mx = tape.matvec(w.m0, x, ubar);
    Ok(tape.add(mx, w.b))
}
