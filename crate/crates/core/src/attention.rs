//! Self-attention over an entity's own event history and neighborhood
//! attention over a node's neighbors.
//!
//! Both are softmax weights over exponents of the form
//! `activity * activity * similarity`. Plain `f64` versions live next to
//! the tape versions the embedding recursion differentiates through.

use crate::autodiff::{Tape, Var};

/// Cosine similarity; 0 when either vector is zero.
pub fn similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "similarity operands differ in length");
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Exponent of one self-attention term.
pub fn self_exponent(xi_now: f64, xi_prev: f64, tau: f64) -> f64 {
    xi_now * xi_prev * tau
}

/// Exponent of one neighborhood term for node `v` and neighbor `m`.
pub fn neighbor_exponent(xi_v: f64, xi_m: f64, xi_edge: f64, tau: f64) -> f64 {
    xi_v * xi_m * xi_edge * tau
}

/// Running normalizer of one entity's self-attention: the exponentiated
/// terms of every event of that entity so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfAttentionAccumulator {
    terms: Vec<f64>,
}

impl SelfAttentionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the term for a new event and returns its weight against the
    /// history up to and including it.
    pub fn push(&mut self, exponent: f64) -> f64 {
        let term = exponent.exp();
        self.terms.push(term);
        term / self.denominator()
    }

    pub fn denominator(&self) -> f64 {
        self.terms.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Weight of the `i`-th recorded term against the current denominator.
    pub fn weight(&self, i: usize) -> f64 {
        self.terms[i] / self.denominator()
    }
}

/// Self-attention weight of the current event, pushing its term.
pub fn self_attention(acc: &mut SelfAttentionAccumulator, xi_now: f64, xi_prev: f64, tau: f64) -> f64 {
    acc.push(self_exponent(xi_now, xi_prev, tau))
}

/// Softmax over neighbor exponents. Empty input gives no weights.
pub fn neighborhood_attention(exponents: &[f64]) -> Vec<f64> {
    let terms: Vec<f64> = exponents.iter().map(|e| e.exp()).collect();
    let total: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / total).collect()
}

/// Tape form of one self-attention step: returns the new accumulator sum
/// and the weight of the new term.
pub fn self_attention_var(tape: &mut Tape, acc_prev: Option<Var>, exponent: Var) -> (Var, Var) {
    let term = tape.exp(exponent);
    let acc = match acc_prev {
        Some(a) => tape.add(a, term),
        None => term,
    };
    let p = tape.div(term, acc);
    (acc, p)
}

/// Tape softmax over scalar exponents.
pub fn neighborhood_weights_var(tape: &mut Tape, exponents: &[Var]) -> Vec<Var> {
    if exponents.is_empty() {
        return Vec::new();
    }
    let terms: Vec<Var> = exponents.iter().map(|e| tape.exp(*e)).collect();
    let total = tape.sum_of(&terms);
    terms.into_iter().map(|t| tape.div(t, total)).collect()
}
