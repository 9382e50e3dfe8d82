//! Likelihood, gradients, SGD training, single-event updates and evaluation.
//!
//! The loss over a window of events is the negative log-intensity of each
//! observed event (scored on the state just before it) plus a Monte Carlo
//! estimate of the integrated total intensity over the window's time span.

pub mod survival;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::Var;
use crate::config::TrainConfig;
use crate::engine::{Engine, EngineOptions};
use crate::error::{FdgnnError, Result};
use crate::event_stream::{EntityId, Event, EventKind, Stream};
use crate::intensity::{kinds_for, Branch, Lambda};
use crate::params::{Model, ModelParams};

use survival::{estimate, sub_seed, uniform_times};

/// Gradient per registry name.
pub type Grads = BTreeMap<&'static str, Vec<f64>>;

const EVAL_STREAM: u64 = 0xE7A1;
const LOCAL_STREAM: u64 = 0x10CA1;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub event_term: f64,
    pub survival_term: f64,
    pub total: f64,
    pub survival_std_err: f64,
    pub events: usize,
}

impl LossBreakdown {
    fn absorb(&mut self, other: &LossBreakdown) {
        self.event_term += other.event_term;
        self.survival_term += other.survival_term;
        self.total = self.event_term + self.survival_term;
        self.survival_std_err = self.survival_std_err.hypot(other.survival_std_err);
        self.events += other.events;
    }
}

/// Loss of one window on the engine's tape.
#[derive(Clone, Copy, Debug)]
pub struct WindowLoss {
    pub loss: Var,
    pub breakdown: LossBreakdown,
}

fn observed_lambda(engine: &mut Engine, ev: &Event) -> Result<Lambda> {
    let l = engine.lambda(ev.kind, ev.subject, ev.t, Some(&ev.attr))?;
    if l.branch == Branch::ForbiddenZero {
        return Err(FdgnnError::Forbidden { seq: ev.seq, kind: ev.kind.code() });
    }
    Ok(l)
}

fn sample_total(engine: &mut Engine, t: f64, entity_samples: usize, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cands = engine.candidates(Some(&mut rng), entity_samples);
    engine.total_intensity(t, &cands)
}

/// Runs `events` through `engine`, building their loss. `start` is the
/// beginning of the window's time span, which ends at the last event.
pub fn window_loss(
    engine: &mut Engine,
    events: &[Event],
    start: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<WindowLoss> {
    let Some(last) = events.last() else {
        return Err(FdgnnError::NoEvents("build a loss from"));
    };
    let end = last.t;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0, 0));
    let times = uniform_times(&mut rng, start, end, cfg.mc_time_samples * events.len());
    let mut samples = Vec::with_capacity(times.len());
    let mut logs = Vec::with_capacity(events.len());
    let mut next = 0;
    for ev in events {
        while next < times.len() && times[next] <= ev.t {
            samples.push(sample_total(engine, times[next], cfg.mc_entity_samples, sub_seed(seed, 1, next as u64))?);
            next += 1;
        }
        let l = observed_lambda(engine, ev)?;
        let var = l.var.expect("admissible branch has a value");
        logs.push(engine.tape_mut().ln(var));
        engine.apply(ev)?;
    }
    let tape = engine.tape_mut();
    let log_sum = tape.sum_of(&logs);
    let span = end - start;
    let values: Vec<f64> = samples.iter().map(|v| tape.scalar(*v)).collect();
    let est = estimate(span, &values);
    let loss = if samples.is_empty() {
        tape.scale_const(log_sum, -1.0)
    } else {
        let mean = tape.mean(&samples);
        let surv = tape.scale_const(mean, span);
        tape.sub(surv, log_sum)
    };
    let event_term = -tape.scalar(log_sum);
    let breakdown = LossBreakdown {
        event_term,
        survival_term: est.value,
        total: event_term + est.value,
        survival_std_err: est.std_err,
        events: events.len(),
    };
    Ok(WindowLoss { loss, breakdown })
}

/// Reverse-mode gradients of `loss` for every registered tensor.
pub fn gradients(engine: &Engine, loss: Var) -> Result<Grads> {
    let g = engine.tape().backward(loss);
    let mut out = Grads::new();
    for (name, var) in engine.weights().entries() {
        let len = engine.tape().value(*var).len();
        let grad = g.get_or_zero(*var, len);
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(FdgnnError::NonFinite(format!("gradient of {name}")));
        }
        out.insert(name, grad);
    }
    Ok(out)
}

/// `p -= lr * g` for every tensor that has a gradient.
pub fn sgd_step(params: &mut ModelParams, grads: &Grads, lr: f64) {
    for (name, t) in params.entries_mut() {
        if let Some(g) = grads.get(name) {
            for (p, g) in t.data.iter_mut().zip(g) {
                *p -= lr * g;
            }
        }
    }
}

fn window_seed(master: u64, epoch: usize, window: usize) -> u64 {
    sub_seed(master, epoch as u64 + 2, window as u64)
}

fn check_stream(stream: &Stream) -> Result<()> {
    let v = crate::event_stream::validate_stream(&stream.header, &stream.events);
    if v.is_empty() {
        Ok(())
    } else {
        Err(FdgnnError::Invalid(v))
    }
}

/// Loss of a whole stream under fixed parameters.
pub fn nll(model: &Model, stream: &Stream, cfg: &TrainConfig) -> Result<LossBreakdown> {
    check_stream(stream)?;
    let opts = EngineOptions { bptt_window: cfg.bptt_window, track_gradients: false };
    let mut engine = Engine::new(model.clone(), &stream.header, opts)?;
    let mut total = LossBreakdown::default();
    let mut start = 0.0;
    for (wi, win) in stream.events.chunks(cfg.batch_events.max(1)).enumerate() {
        let wl = window_loss(&mut engine, win, start, cfg, window_seed(cfg.seed, 0, wi))?;
        total.absorb(&wl.breakdown);
        start = win.last().map_or(start, |e| e.t);
        engine.compact();
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean per-event loss of each epoch.
    pub history: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Mini-batch SGD over contiguous event windows. Returns the parameters
/// at the end of the epoch with the lowest loss.
pub fn train(stream: &Stream, cfg: &TrainConfig, init: Option<Model>) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_stream(stream)?;
    let h = &stream.header;
    let mut model = init.unwrap_or_else(|| Model::init(cfg.model_config(h.node_attr_dim, h.edge_attr_dim), cfg.seed));
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    if cfg.epochs > 0 && stream.events.is_empty() {
        return Err(FdgnnError::NoEvents("train on"));
    }
    let opts = EngineOptions { bptt_window: cfg.bptt_window, track_gradients: true };
    for epoch in 0..cfg.epochs {
        let mut engine = Engine::new(model.clone(), h, opts.clone())?;
        let mut epoch_loss = LossBreakdown::default();
        let mut start = 0.0;
        for (wi, win) in stream.events.chunks(cfg.batch_events).enumerate() {
            engine.rebind(Some(model.clone()));
            let wl = window_loss(&mut engine, win, start, cfg, window_seed(cfg.seed, epoch, wi))?;
            if !wl.breakdown.total.is_finite() {
                return Err(FdgnnError::NonFinite(format!("loss in epoch {epoch}, window {wi}")));
            }
            let scaled = engine.tape_mut().scale_const(wl.loss, 1.0 / win.len() as f64);
            let grads = gradients(&engine, scaled)?;
            sgd_step(&mut model.params, &grads, cfg.lr);
            if let Err(name) = model.params.all_finite() {
                return Err(FdgnnError::NonFinite(format!("parameter {name} after epoch {epoch}, window {wi}")));
            }
            epoch_loss.absorb(&wl.breakdown);
            start = win.last().map_or(start, |e| e.t);
        }
        let mean = epoch_loss.total / epoch_loss.events as f64;
        history.push(mean);
        if mean < best_loss {
            best_loss = mean;
            best = model.clone();
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome { model: best, history, best_epoch })
}

/// Whether tensor `name` may change in a single-event update of `kind`.
pub fn is_local(kind: EventKind, name: &str, edge_attr_factor: bool) -> bool {
    const NODE_INTENSITY: [&str; 6] = ["int.W0", "int.W1", "int.W4", "int.psi0", "int.psi1", "int.psi4"];
    if kind.is_node_event() {
        name.starts_with("attr.node.")
            || name.starts_with("emb.node.")
            || name.starts_with("emb.init.")
            || (edge_attr_factor && name.starts_with("attr.edge."))
            || NODE_INTENSITY.contains(&name)
    } else {
        !NODE_INTENSITY.contains(&name)
    }
}

#[derive(Clone, Debug)]
pub struct LocalUpdate {
    pub model: Model,
    pub log_lambda: f64,
    pub loss: f64,
}

/// One gradient step on a single event: its negative log-intensity plus
/// the integrated intensity of its subject since the last event. Only the
/// tensors selected by [`is_local`] move. `engine` holds the pre-event state.
pub fn local_update(engine: &Engine, ev: &Event, lr: f64, time_samples: usize, seed: u64) -> Result<LocalUpdate> {
    let mut eng = engine.clone();
    eng.set_track_gradients(true);
    eng.graph().check(ev).map_err(|v| FdgnnError::Invalid(vec![v]))?;
    let l = observed_lambda(&mut eng, ev)?;
    let t_prev = eng.now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, LOCAL_STREAM, ev.seq));
    let times = uniform_times(&mut rng, t_prev, ev.t, time_samples);
    let mut values = Vec::with_capacity(times.len());
    for s in times {
        let mut parts = Vec::new();
        for k in kinds_for(ev.subject) {
            if let Some(v) = eng.lambda(*k, ev.subject, s, None)?.var {
                parts.push(v);
            }
        }
        let tape = eng.tape_mut();
        values.push(if parts.is_empty() { tape.zeros(1) } else { tape.sum_of(&parts) });
    }
    let tape = eng.tape_mut();
    let log = tape.ln(l.var.expect("admissible"));
    let loss = if values.is_empty() {
        tape.scale_const(log, -1.0)
    } else {
        let mean = tape.mean(&values);
        let surv = tape.scale_const(mean, ev.t - t_prev);
        tape.sub(surv, log)
    };
    let log_lambda = tape.scalar(log);
    let loss_value = tape.scalar(loss);
    let mut grads = gradients(&eng, loss)?;
    let factor = eng.model().config.edge_attr_factor;
    grads.retain(|name, _| is_local(ev.kind, name, factor));
    let mut model = eng.model().clone();
    sgd_step(&mut model.params, &grads, lr);
    if let Err(name) = model.params.all_finite() {
        return Err(FdgnnError::NonFinite(format!("parameter {name} after local update")));
    }
    Ok(LocalUpdate { model, log_lambda, loss: loss_value })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub events: usize,
    pub mean_nll: f64,
    pub type_accuracy: f64,
    pub survival_per_event: f64,
}

fn total_values(engine: &mut Engine, batch: &[(f64, u64)], cfg: &TrainConfig, pool: Option<&rayon::ThreadPool>) -> Result<Vec<f64>> {
    match pool {
        None => batch
            .iter()
            .map(|(s, seed)| sample_total(engine, *s, cfg.mc_entity_samples, *seed).map(|v| engine.scalar(v)))
            .collect(),
        Some(pool) => {
            engine.compact();
            let base = &*engine;
            pool.install(|| {
                batch
                    .par_iter()
                    .map(|(s, seed)| {
                        let mut e = base.clone();
                        sample_total(&mut e, *s, cfg.mc_entity_samples, *seed).map(|v| e.scalar(v))
                    })
                    .collect()
            })
        }
    }
}

/// Credit for predicting the observed (kind, subject) as the most intense
/// admissible pair; ties share the credit.
fn type_credit(engine: &mut Engine, ev: &Event) -> Result<f64> {
    let t = ev.t;
    let cands = engine.candidates::<ChaCha8Rng>(None, 0);
    let mut best = f64::NEG_INFINITY;
    let mut ties = 0.0;
    let mut hit = false;
    let mut consider = |value: f64, weight: f64, actual: bool| {
        if value > best {
            best = value;
            ties = weight;
            hit = actual;
        } else if value == best {
            ties += weight;
            hit |= actual;
        }
    };
    for x in &cands.observed {
        for k in kinds_for(*x) {
            let l = engine.lambda(*k, *x, t, None)?;
            if l.branch != Branch::ForbiddenZero {
                consider(l.value, 1.0, *k == ev.kind && *x == ev.subject);
            }
        }
    }
    if let (Some(rep), true) = (cands.unseen_node_representative, cands.unseen_nodes > 0) {
        let l = engine.lambda(EventKind::AddNode, EntityId::Node(rep), t, None)?;
        let actual = ev.kind == EventKind::AddNode && engine.state(ev.subject).is_none();
        consider(l.value, cands.unseen_nodes as f64, actual);
    }
    for e in &cands.unseen_pairs {
        let x = EntityId::Edge(*e);
        let l = engine.lambda(EventKind::AddEdge, x, t, None)?;
        if l.branch != Branch::ForbiddenZero {
            consider(l.value, 1.0, ev.kind == EventKind::AddEdge && ev.subject == x);
        }
    }
    Ok(if hit { 1.0 / ties } else { 0.0 })
}

/// Held-out metrics for `stream.events[from..]` after replaying the prefix.
/// `threads > 1` evaluates survival samples in parallel with identical results.
pub fn evaluate(model: &Model, stream: &Stream, from: usize, cfg: &TrainConfig, threads: usize) -> Result<Metrics> {
    check_stream(stream)?;
    let from = from.min(stream.events.len());
    let held = &stream.events[from..];
    let Some(last) = held.last() else {
        return Err(FdgnnError::NoEvents("evaluate"));
    };
    let opts = EngineOptions { bptt_window: cfg.bptt_window, track_gradients: false };
    let mut engine = Engine::new(model.clone(), &stream.header, opts)?;
    for ev in &stream.events[..from] {
        engine.apply(ev)?;
    }
    let pool = if threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| FdgnnError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let start = if from > 0 { stream.events[from - 1].t } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, EVAL_STREAM, 0));
    let times = uniform_times(&mut rng, start, last.t, cfg.mc_time_samples * held.len());
    let mut values = Vec::with_capacity(times.len());
    let mut event_term = 0.0;
    let mut credit = 0.0;
    let mut next = 0;
    for ev in held {
        let mut batch = Vec::new();
        while next < times.len() && times[next] <= ev.t {
            batch.push((times[next], sub_seed(cfg.seed, EVAL_STREAM + 1, next as u64)));
            next += 1;
        }
        values.extend(total_values(&mut engine, &batch, cfg, pool.as_ref())?);
        credit += type_credit(&mut engine, ev)?;
        event_term -= observed_lambda(&mut engine, ev)?.value.ln();
        engine.apply(ev)?;
    }
    let n = held.len() as f64;
    let surv = estimate(last.t - start, &values).value;
    Ok(Metrics {
        events: held.len(),
        mean_nll: (event_term + surv) / n,
        type_accuracy: credit / n,
        survival_per_event: surv / n,
    })
}
