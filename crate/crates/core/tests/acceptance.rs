//! Acceptance suite: one PASS/FAIL line per criterion, each under its time
//! budget. Exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use fdgnn::attention::{neighbor_exponent, neighborhood_attention, self_exponent, similarity, SelfAttentionAccumulator};
use fdgnn::config::{SimulateSection, TrainConfig};
use fdgnn::engine::{Engine, EngineOptions};
use fdgnn::event_stream::{snapshot_at, EntityId, Event, EventKind, Graph, Status, Stream, StreamHeader};
use fdgnn::intensity::{activation, branch, case_value, Branch};
use fdgnn::params::{Model, ModelConfig};
use fdgnn::simulator::{rate_recovery_check, thinning_sample, SimSpec};
use fdgnn::training::{evaluate, gradients, is_local, local_update, nll, train, window_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Check = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1 ------------------------------------------------------------------------

/// Graph in which node 0 has `prior` status and node 1 is active, at t = 1.
fn node_state(prior: Status) -> Graph {
    let mut h = StreamHeader::empty(1, 1, 3);
    h.g0_nodes = vec![(1, vec![0.0]), (2, vec![0.0])];
    let mut g = Graph::new(&h).unwrap();
    if prior != Status::Undefined {
        g.apply(&Event::node(0, 0.5, EventKind::AddNode, 0, vec![0.0])).unwrap();
    }
    if prior == Status::Inactive {
        g.apply(&Event::node(1, 1.0, EventKind::DeleteNode, 0, vec![0.0])).unwrap();
    }
    g
}

/// Graph in which edge {1,2} has `prior` status, endpoints active.
fn edge_state(prior: Status) -> Graph {
    let mut g = node_state(Status::Undefined);
    if prior != Status::Undefined {
        g.apply(&Event::edge(0, 0.5, EventKind::AddEdge, 1, 2, vec![0.0])).unwrap();
    }
    if prior == Status::Inactive {
        g.apply(&Event::edge(1, 1.0, EventKind::DeleteEdge, 1, 2, vec![0.0])).unwrap();
    }
    g
}

fn activity_truth_table() -> Check {
    let statuses = [Status::Active, Status::Inactive, Status::Undefined];
    let mut cells = 0;
    for kind in EventKind::ALL {
        for prior in statuses {
            let (mut g, x) = if kind.is_node_event() {
                (node_state(prior), node(0))
            } else {
                (edge_state(prior), edge(1, 2))
            };
            ensure(g.status(x) == prior, || format!("setup for {kind:?}/{prior:?}"))?;
            let ev = match x {
                EntityId::Node(v) => Event::node(9, 2.0, kind, v, vec![0.0]),
                EntityId::Edge(e) => Event::edge(9, 2.0, kind, e.lo(), e.hi(), vec![0.0]),
            };
            let allowed = match kind {
                EventKind::AddNode | EventKind::AddEdge => prior != Status::Active,
                _ => prior == Status::Active,
            };
            let expected = match kind {
                EventKind::DeleteNode | EventKind::DeleteEdge => Status::Inactive,
                _ => Status::Active,
            };
            let applied = g.apply(&ev).is_ok();
            ensure(applied == allowed, || format!("{kind:?} from {prior:?}: applied={applied}"))?;
            let now = g.status(x);
            let want = if allowed { expected } else { prior };
            ensure(now == want, || format!("{kind:?} from {prior:?}: got {now:?}, want {want:?}"))?;
            ensure(g.ledger().activity(x, 1.9) == prior, || format!("{kind:?}: history rewritten"))?;
            ensure(g.ledger().activity(node(2), 0.0) == Status::Active, || "start graph not active at 0".into())?;
            ensure(g.status(node(0)) != Status::Undefined || prior == Status::Undefined || !kind.is_node_event(), || {
                "seen node reported undefined".into()
            })?;
            cells += 1;
        }
    }
    let g = node_state(Status::Undefined);
    ensure(g.status(node(0)) == Status::Undefined && g.status(edge(0, 2)) == Status::Undefined, || {
        "unseen entity not undefined".into()
    })?;
    Ok(format!("{cells} kind x status cells"))
}

// 2 ------------------------------------------------------------------------

fn replay_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for s in 0..100 {
        let stream = random_stream(1000 + s, 1000, 12);
        ensure(stream.events.len() == 1000, || format!("stream {s} has {} events", stream.events.len()))?;
        let horizon = stream.horizon();
        let mut times: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * horizon).collect();
        // include exact event times, where inclusive/exclusive mistakes show up
        times[0] = stream.events[rng.random_range(0..1000)].t;
        times.sort_by(f64::total_cmp);
        let mut g = Graph::new(&stream.header).map_err(err)?;
        let mut next = 0;
        for t in times {
            while next < stream.events.len() && stream.events[next].t <= t {
                g.apply(&stream.events[next]).map_err(|v| v.to_string())?;
                next += 1;
            }
            let mut incremental = g.snapshot().clone();
            incremental.t = t;
            let mut replayed = snapshot_at(&stream.header, &stream.events, t).map_err(err)?;
            replayed.t = t;
            let oracle = brute_force_snapshot(&stream, t);
            ensure(incremental == replayed, || format!("stream {s} t={t}: incremental != replay"))?;
            ensure(replayed == oracle, || format!("stream {s} t={t}: replay != brute force"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} snapshots equal"))
}

// 3 ------------------------------------------------------------------------

fn attention_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xi = |r: &mut ChaCha8Rng| [1.0, 0.0][r.random_range(0..2)];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = rng.random_range(1..6);
        let vec = |r: &mut ChaCha8Rng| (0..dim).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<f64>>();

        let mut acc = SelfAttentionAccumulator::new();
        let steps = rng.random_range(1..30);
        let mut prev = vec(&mut rng);
        for _ in 0..steps {
            let u = vec(&mut rng);
            let tau = similarity(&u, &prev);
            let w = acc.push(self_exponent(xi(&mut rng), xi(&mut rng), tau));
            ensure(w > 0.0 && w <= 1.0, || format!("self weight {w}"))?;
            prev = u;
        }
        let total: f64 = (0..acc.len()).map(|i| acc.weight(i)).sum();
        worst = worst.max((total - 1.0).abs());

        let k = rng.random_range(1..25);
        let u_v = vec(&mut rng);
        let xv = xi(&mut rng);
        let exps: Vec<f64> = (0..k)
            .map(|_| {
                let u_m = vec(&mut rng);
                neighbor_exponent(xv, xi(&mut rng), xi(&mut rng), similarity(&u_v, &u_m))
            })
            .collect();
        let q = neighborhood_attention(&exps);
        ensure(q.iter().all(|w| *w > 0.0), || "non-positive neighbor weight".into())?;
        worst = worst.max((q.iter().sum::<f64>() - 1.0).abs());
    }
    // the engine's neighborhoods on random graphs
    for seed in 0..20 {
        let stream = random_stream(300 + seed, 60, 8);
        let cfg = ModelConfig { node_attr_dim: 1, edge_attr_dim: 1, embed_dim: 3, attr_embed_dim: 3, raw_dim: 2, edge_attr_factor: seed % 2 == 0 };
        let mut eng = Engine::new(Model::init(cfg, seed), &stream.header, EngineOptions::default()).map_err(err)?;
        for ev in &stream.events {
            eng.apply(ev).map_err(err)?;
            for v in 0..8 {
                let q = eng.neighborhood_weights(v);
                if !q.is_empty() {
                    worst = worst.max((q.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max |sum - 1| = {worst:.1e}"))
}

// 4 ------------------------------------------------------------------------

fn intensity_case_logic() -> Check {
    use Status::*;
    let statuses = [Active, Inactive, Undefined];
    let mut cells = 0;
    // case tables, exhaustively
    for kind in EventKind::ALL {
        for s in statuses {
            for a in statuses {
                for b in statuses {
                    let both = a == Active && b == Active;
                    let want = match kind {
                        EventKind::AddNode => (s != Active).then_some(Branch::Scored),
                        EventKind::DeleteNode | EventKind::ChangeNodeAttr => (s == Active).then_some(Branch::Scored),
                        EventKind::AddEdge => (matches!(s, Inactive | Undefined) && both).then_some(Branch::Scored),
                        EventKind::DeleteEdge if s == Active => Some(if both { Branch::Scored } else { Branch::ForcedOne }),
                        EventKind::DeleteEdge => None,
                        EventKind::ChangeEdgeAttr => (s == Active && both).then_some(Branch::Scored),
                    }
                    .unwrap_or(Branch::ForbiddenZero);
                    let got = branch(kind, s, (a, b));
                    ensure(got == want, || format!("{kind:?} s={s:?} ends=({a:?},{b:?}): {got:?}"))?;
                    for score in [-3.0, 0.0, 2.5] {
                        let v = case_value(got, score, 0.7);
                        let ok = match got {
                            Branch::ForbiddenZero => v == 0.0,
                            Branch::ForcedOne => v == 1.0,
                            Branch::Scored => v > 0.0 && v == activation(score, 0.7),
                        };
                        ensure(ok, || format!("{kind:?} value {v} on {got:?}"))?;
                    }
                    cells += 1;
                }
            }
        }
    }
    // the engine on every reachable status combination
    let cfg = ModelConfig { node_attr_dim: 1, edge_attr_dim: 1, embed_dim: 2, attr_embed_dim: 2, raw_dim: 1, edge_attr_factor: false };
    let model = Model::init(cfg, 4);
    let mut h = StreamHeader::empty(1, 1, 6);
    h.g0_nodes = (0..4).map(|v| (v, vec![0.5])).collect();
    h.g0_edges = vec![(fdgnn::event_stream::EdgeKey::new(0, 1).unwrap(), vec![0.1])];
    let evs = [
        Event::node(0, 1.0, EventKind::DeleteNode, 3, vec![0.5]),
        Event::edge(1, 2.0, EventKind::AddEdge, 1, 2, vec![0.1]),
        Event::edge(2, 3.0, EventKind::DeleteEdge, 1, 2, vec![0.1]),
        Event::node(3, 4.0, EventKind::AddNode, 4, vec![0.2]),
        Event::edge(4, 4.5, EventKind::AddEdge, 2, 4, vec![0.3]),
        Event::node(5, 5.0, EventKind::DeleteNode, 4, vec![0.2]),
    ];
    let mut eng = Engine::new(model, &h, EngineOptions::default()).map_err(err)?;
    for ev in &evs {
        eng.apply(ev).map_err(err)?;
    }
    let mut subjects: Vec<EntityId> = (0..6).map(node).collect();
    for a in 0..6 {
        for b in a + 1..6 {
            subjects.push(edge(a, b));
        }
    }
    for x in subjects {
        let kinds: &[EventKind] = if x.is_node() { &EventKind::NODE } else { &EventKind::EDGE };
        for k in kinds {
            let r = eng.report(*k, x, 6.0, None).map_err(err)?;
            ensure(r.branch == eng.branch_of(*k, x), || format!("{k:?} {x}: branch"))?;
            let ok = match r.branch {
                Branch::ForbiddenZero => r.value == 0.0,
                Branch::ForcedOne => r.value == 1.0,
                Branch::Scored => r.value > 0.0 && r.value.is_finite(),
            };
            ensure(ok, || format!("{k:?} {x}: value {} on {:?}", r.value, r.branch))?;
            cells += 1;
        }
    }
    Ok(format!("{cells} cells"))
}

// 5 ------------------------------------------------------------------------

fn gradient_fidelity() -> Check {
    let stream = fixture_stream();
    let base = Model::init(fixture_config(), 21);
    let cfg = TrainConfig { bptt_window: 5, mc_time_samples: 2, mc_entity_samples: 4, ..small_train_config() };
    let opts = EngineOptions { bptt_window: 5, track_gradients: false };
    let mut frozen = Engine::new(base.clone(), &stream.header, opts).map_err(err)?;
    for ev in &stream.events[..15] {
        frozen.apply(ev).map_err(err)?;
    }
    frozen.compact();
    let start = stream.events[14].t;
    let window = &stream.events[15..];
    let seed = 77;
    let loss_of = |m: &Model| -> Result<f64, String> {
        let mut e = frozen.clone();
        e.rebind(Some(m.clone()));
        let wl = window_loss(&mut e, window, start, &cfg, seed).map_err(err)?;
        Ok(e.scalar(wl.loss))
    };
    let mut e = frozen.clone();
    e.set_track_gradients(true);
    let wl = window_loss(&mut e, window, start, &cfg, seed).map_err(err)?;
    let grads = gradients(&e, wl.loss).map_err(err)?;
    let h = 1e-5;
    let mut worst = (0.0, "");
    let mut count = 0;
    for (name, t) in base.params.entries() {
        let mut fd = vec![0.0; t.len()];
        for (i, slot) in fd.iter_mut().enumerate() {
            let mut hi = base.clone();
            hi.params.get_mut(name).unwrap().data[i] += h;
            let mut lo = base.clone();
            lo.params.get_mut(name).unwrap().data[i] -= h;
            *slot = (loss_of(&hi)? - loss_of(&lo)?) / (2.0 * h);
        }
        let rel = norm_rel_err(&grads[name], &fd);
        if rel > worst.0 {
            worst = (rel, name);
        }
        ensure(rel < 1e-4, || format!("{name}: relative error {rel:.2e}"))?;
        count += 1;
    }
    Ok(format!("{count} tensors, worst {:.1e} ({})", worst.0, worst.1))
}

// 6 ------------------------------------------------------------------------

fn scalar_config() -> ModelConfig {
    ModelConfig { node_attr_dim: 1, edge_attr_dim: 1, embed_dim: 2, attr_embed_dim: 2, raw_dim: 1, edge_attr_factor: false }
}

fn survival_estimator() -> Check {
    use std::f64::consts::LN_2;
    // all-zero weights: every admissible intensity is ln 2
    let model = Model::zeros(scalar_config());
    let mut h = StreamHeader::empty(1, 1, 1);
    h.g0_nodes = vec![(0, vec![0.0])];
    let events: Vec<Event> = (1..=10).map(|i| Event::node(i - 1, i as f64, EventKind::ChangeNodeAttr, 0, vec![0.1 * i as f64])).collect();
    let constant = Stream::new(h.clone(), events);
    let exact = 10.0 * (LN_2 + LN_2);
    for samples in [1, 2, 7, 100] {
        let cfg = TrainConfig { mc_time_samples: samples, batch_events: 10, ..small_train_config() };
        let l = nll(&model, &constant, &cfg).map_err(err)?;
        ensure(l.survival_term == exact, || format!("{samples} samples: {} != {exact}", l.survival_term))?;
    }
    // two regimes: active node (delete + change) on [0,4], inactive (add) on (4,10]
    let two = Stream::new(
        h,
        vec![Event::node(0, 4.0, EventKind::DeleteNode, 0, vec![0.0]), Event::node(1, 10.0, EventKind::AddNode, 0, vec![0.0])],
    );
    let cfg = TrainConfig { mc_time_samples: 5000, batch_events: 2, seed: 6, ..small_train_config() };
    let l = nll(&model, &two, &cfg).map_err(err)?;
    let integral = 4.0 * 2.0 * LN_2 + 6.0 * LN_2;
    let dev = (l.survival_term - integral).abs();
    ensure(dev <= 3.0 * l.survival_std_err, || {
        format!("estimate {} vs {integral}, se {}", l.survival_term, l.survival_std_err)
    })?;
    Ok(format!("constant exact; two-regime |err| = {:.2} se", dev / l.survival_std_err))
}

// 7 ------------------------------------------------------------------------

fn single_node_section(rate: f64, horizon: f64, seed: u64) -> SimulateSection {
    SimulateSection {
        horizon,
        universe: 1,
        initial_nodes: 1,
        initial_edges: vec![],
        node_attr_dim: 1,
        edge_attr_dim: 1,
        rates: [0.0, 0.0, 0.0, 0.0, rate, 0.0],
        attr_noise: 0.0,
        seed,
        ..SimulateSection::default()
    }
}

fn rate_recovery() -> Check {
    let c = 2.0;
    let trace = thinning_sample(&SimSpec::from_section(&single_node_section(c, 50.0, 70), None).map_err(err)?).map_err(err)?;
    let n = trace.stream.events.len();
    let cfg = TrainConfig {
        lr: 0.1,
        epochs: 30,
        batch_events: 10,
        mc_time_samples: 5,
        embed_dim: 2,
        attr_embed_dim: 2,
        raw_dim: 1,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train(&trace.stream, &cfg, None).map_err(err)?;
    let rates = [0.0, 0.0, 0.0, 0.0, c, 0.0];
    let report = rate_recovery_check(&trace.stream, rates, &out.model, 200).map_err(err)?;
    let learned = report.learned[4].ok_or("no admissible attribute changes")?;
    let mle = n as f64 / trace.stream.horizon();
    let rel = (learned - c).abs() / c;
    ensure(rel <= 0.2, || format!("mean lambda4 {learned:.3} vs c = {c} (MLE {mle:.3}), rel err {rel:.3}"))?;
    Ok(format!("{n} events, mean lambda4 {learned:.3}, MLE {mle:.3}, rel err {rel:.3}"))
}

// 8 ------------------------------------------------------------------------

fn learning_sanity() -> Check {
    let sec = SimulateSection {
        horizon: 1e9,
        universe: 8,
        initial_nodes: 4,
        initial_edges: vec![[0, 1], [2, 3]],
        node_attr_dim: 2,
        edge_attr_dim: 1,
        rates: [0.05, 0.02, 0.05, 0.1, 0.6, 0.3],
        attr_noise: 0.2,
        seed: 8,
        max_events: Some(500),
        ..SimulateSection::default()
    };
    let full = thinning_sample(&SimSpec::from_section(&sec, None).map_err(err)?).map_err(err)?.stream;
    ensure(full.events.len() == 500, || format!("simulated {} events", full.events.len()))?;
    let train_part = Stream::new(full.header.clone(), full.events[..400].to_vec());
    let cfg = TrainConfig {
        lr: 0.05,
        epochs: 8,
        batch_events: 20,
        mc_time_samples: 3,
        mc_entity_samples: 16,
        embed_dim: 4,
        attr_embed_dim: 4,
        raw_dim: 2,
        seed: 8,
        ..TrainConfig::default()
    };
    let init = Model::init(cfg.model_config(2, 1), cfg.seed);
    let out = train(&train_part, &cfg, Some(init.clone())).map_err(err)?;
    let before = evaluate(&init, &full, 400, &cfg, 1).map_err(err)?.mean_nll;
    let after = evaluate(&out.model, &full, 400, &cfg, 1).map_err(err)?.mean_nll;
    let gain = (before - after) / before.abs();
    ensure(gain >= 0.2, || format!("held-out NLL {before:.4} -> {after:.4} ({:.1}%)", 100.0 * gain))?;
    Ok(format!("held-out NLL {before:.4} -> {after:.4} ({:.1}% better)", 100.0 * gain))
}

// 9 ------------------------------------------------------------------------

fn local_update_check() -> Check {
    let stream = fixture_stream();
    let model = Model::init(fixture_config(), 9);
    let mut eng = Engine::new(model.clone(), &stream.header, EngineOptions::default()).map_err(err)?;
    let mut checked = 0;
    for (i, ev) in stream.events.iter().enumerate() {
        if i % 4 == 3 {
            let upd = local_update(&eng, ev, 1e-3, 5, 9).map_err(err)?;
            let mut after = eng.clone();
            after.rebind(Some(upd.model.clone()));
            let l_new = after.lambda(ev.kind, ev.subject, ev.t, Some(&ev.attr)).map_err(err)?.value.ln();
            ensure(l_new > upd.log_lambda, || format!("seq {}: log lambda {} -> {l_new}", ev.seq, upd.log_lambda))?;
            for ((name, a), (_, b)) in model.params.entries().into_iter().zip(upd.model.params.entries()) {
                if !is_local(ev.kind, name, false) {
                    ensure(a == b, || format!("seq {}: {name} changed outside the local subset", ev.seq))?;
                }
            }
            checked += 1;
        }
        eng.apply(ev).map_err(err)?;
    }
    Ok(format!("{checked} events"))
}

// 10 -----------------------------------------------------------------------

fn determinism_and_serialization() -> Check {
    let stream = fixture_stream();
    let cfg = TrainConfig { epochs: 3, seed: 10, batch_events: 7, ..small_train_config() };
    let a = train(&stream, &cfg, None).map_err(err)?;
    let b = train(&stream, &cfg, None).map_err(err)?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.history) == bits(&b.history), || "loss histories differ".into())?;
    ensure(a.model == b.model, || "final parameters differ".into())?;

    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("model.bin");
    a.model.save(&path).map_err(err)?;
    let back = Model::load(&path).map_err(err)?;
    let mut e1 = Engine::new(a.model.clone(), &stream.header, EngineOptions::default()).map_err(err)?;
    let mut e2 = Engine::new(back, &stream.header, EngineOptions::default()).map_err(err)?;
    let mut compared = 0;
    for ev in &stream.events {
        for x in [node(0), node(ev.subject_node_hint()), edge(0, 1), edge(8, 9)] {
            let kinds: &[EventKind] = if x.is_node() { &EventKind::NODE } else { &EventKind::EDGE };
            for k in kinds {
                let l1 = e1.lambda(*k, x, ev.t, None).map_err(err)?.value;
                let l2 = e2.lambda(*k, x, ev.t, None).map_err(err)?.value;
                ensure(l1.to_bits() == l2.to_bits(), || format!("{k:?} {x} at {}: {l1} vs {l2}", ev.t))?;
                compared += 1;
            }
        }
        e1.apply(ev).map_err(err)?;
        e2.apply(ev).map_err(err)?;
    }
    let serial = evaluate(&a.model, &stream, 10, &cfg, 1).map_err(err)?;
    let parallel = evaluate(&a.model, &stream, 10, &cfg, 4).map_err(err)?;
    ensure(serial == parallel, || "parallel evaluation differs from serial".into())?;
    Ok(format!("{} epochs identical, {compared} intensities bit-exact after reload", a.history.len()))
}

trait SubjectHint {
    fn subject_node_hint(&self) -> u32;
}

impl SubjectHint for Event {
    fn subject_node_hint(&self) -> u32 {
        match self.subject {
            EntityId::Node(v) => v,
            EntityId::Edge(e) => e.lo(),
        }
    }
}

// 11 -----------------------------------------------------------------------

fn simulator_statistics() -> Check {
    let (c, horizon) = (2.0, 50.0);
    let mut notes = Vec::new();
    for seed in [1, 2, 3] {
        let tr = thinning_sample(&SimSpec::from_section(&single_node_section(c, horizon, seed), None).map_err(err)?).map_err(err)?;
        let n = tr.stream.events.len() as f64;
        let dev = (n - c * horizon).abs() / (c * horizon).sqrt();
        ensure(dev <= 4.0, || format!("seed {seed}: {n} events, {dev:.2} sigma"))?;
        notes.push(format!("{n}"));
    }
    // constant total intensity 1.5 + 0.5 = 2 with three nodes and two edges
    let sec = SimulateSection {
        horizon: 1e9,
        universe: 3,
        initial_nodes: 3,
        initial_edges: vec![[0, 1], [1, 2]],
        node_attr_dim: 1,
        edge_attr_dim: 1,
        rates: [0.0, 0.0, 0.0, 0.0, 0.5, 0.25],
        attr_noise: 0.3,
        seed: 11,
        max_events: Some(10_000),
        ..SimulateSection::default()
    };
    let tr = thinning_sample(&SimSpec::from_section(&sec, None).map_err(err)?).map_err(err)?;
    ensure(tr.stream.events.len() == 10_000, || "trace too short".into())?;
    let mut prev = 0.0;
    let gaps: Vec<f64> = tr
        .stream
        .events
        .iter()
        .map(|e| {
            let g = e.t - prev;
            prev = e.t;
            g
        })
        .collect();
    let d = ks_exponential(&gaps, 2.0);
    let p = ks_p_value(d, gaps.len());
    ensure(p > 0.01, || format!("KS D = {d:.4}, p = {p:.4}"))?;
    ensure(fdgnn::event_stream::validate_stream(&tr.stream.header, &tr.stream.events).is_empty(), || {
        "trace fails validation".into()
    })?;
    Ok(format!("counts {} (mean 100); KS D = {d:.4}, p = {p:.3}", notes.join("/")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("activity truth table", 1, activity_truth_table),
        ("replay equivalence", 30, replay_equivalence),
        ("attention normalization", 5, attention_normalization),
        ("intensity case logic", 1, intensity_case_logic),
        ("gradient fidelity", 60, gradient_fidelity),
        ("survival estimator", 10, survival_estimator),
        ("homogeneous-rate recovery", 60, rate_recovery),
        ("learning sanity", 300, learning_sanity),
        ("local update", 1, local_update_check),
        ("determinism and serialization", 60, determinism_and_serialization),
        ("simulator statistics", 60, simulator_statistics),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(*budget);
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget}s budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} [{id:>2}] {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

