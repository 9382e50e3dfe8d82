//! Fixtures and independent oracles shared by the integration tests and
//! the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fdgnn::config::{SimulateSection, TrainConfig};
use fdgnn::event_stream::{EdgeKey, EntityId, Event, EventKind, GraphSnapshot, NodeId, Stream, StreamHeader};
use fdgnn::params::ModelConfig;
use fdgnn::simulator::{thinning_sample, SimSpec};

use EventKind::*;

pub fn fixture_config() -> ModelConfig {
    ModelConfig { node_attr_dim: 2, edge_attr_dim: 2, embed_dim: 3, attr_embed_dim: 3, raw_dim: 2, edge_attr_factor: false }
}

/// Ten-node universe, twenty events touching every event kind, re-adds
/// and cascades. The last five form the gradient-check window.
pub fn fixture_stream() -> Stream {
    let mut h = StreamHeader::empty(2, 2, 10);
    h.g0_nodes = (0..6).map(|v| (v, vec![0.1 * v as f64, 0.5 - 0.1 * v as f64])).collect();
    h.g0_edges = [(0, 1), (1, 2), (2, 3)]
        .iter()
        .map(|&(a, b)| (EdgeKey::new(a, b).unwrap(), vec![0.2, -0.2]))
        .collect();
    let n = |seq, t, k, v, a: [f64; 2]| Event::node(seq, t, k, v, a.to_vec());
    let e = |seq, t, k, a, b, x: [f64; 2]| Event::edge(seq, t, k, a, b, x.to_vec());
    let events = vec![
        n(0, 0.5, AddNode, 6, [0.3, -0.2]),
        e(1, 0.9, AddEdge, 5, 6, [0.4, 0.1]),
        n(2, 1.4, ChangeNodeAttr, 2, [1.0, 0.5]),
        e(3, 1.8, AddEdge, 3, 4, [-0.2, 0.6]),
        e(4, 2.3, ChangeEdgeAttr, 1, 2, [0.7, 0.7]),
        n(5, 2.9, AddNode, 7, [-0.5, 0.9]),
        e(6, 3.2, AddEdge, 0, 7, [0.1, -0.3]),
        e(7, 3.8, DeleteEdge, 2, 3, [0.2, -0.2]),
        n(8, 4.1, AddNode, 8, [0.2, 0.2]),
        n(9, 4.7, DeleteNode, 4, [0.4, 0.1]),
        n(10, 5.0, ChangeNodeAttr, 0, [0.9, -0.1]),
        e(11, 5.6, AddEdge, 2, 3, [0.5, 0.5]),
        n(12, 6.1, AddNode, 4, [0.1, 0.1]),
        e(13, 6.5, AddEdge, 6, 8, [0.3, 0.3]),
        n(14, 7.2, ChangeNodeAttr, 6, [-0.4, 0.4]),
        n(15, 7.6, AddNode, 9, [0.6, -0.6]),
        e(16, 8.1, AddEdge, 8, 9, [0.2, -0.1]),
        e(17, 8.5, ChangeEdgeAttr, 0, 7, [0.9, 0.2]),
        n(18, 9.0, ChangeNodeAttr, 1, [0.3, 0.8]),
        n(19, 9.6, DeleteNode, 6, [-0.4, 0.4]),
    ];
    Stream::new(h, events)
}

pub fn small_train_config() -> TrainConfig {
    TrainConfig { embed_dim: 3, attr_embed_dim: 3, raw_dim: 2, ..TrainConfig::default() }
}

/// A random valid stream of exactly `events` events (or fewer if the
/// process dies out), drawn from constant rates.
pub fn random_stream(seed: u64, events: usize, universe: u32) -> Stream {
    let sec = SimulateSection {
        horizon: 1e9,
        universe,
        initial_nodes: universe / 2,
        initial_edges: vec![[0, 1]],
        node_attr_dim: 1,
        edge_attr_dim: 1,
        rates: [0.3, 0.2, 0.15, 0.2, 0.3, 0.3],
        attr_noise: 1.0,
        seed,
        max_events: Some(events),
        ..SimulateSection::default()
    };
    thinning_sample(&SimSpec::from_section(&sec, None).unwrap()).unwrap().stream
}

/// Active entities at `t` computed entity by entity from the latest event
/// touching each one, with endpoint deletions cascading onto edges.
pub fn brute_force_snapshot(stream: &Stream, t: f64) -> GraphSnapshot {
    let upto: Vec<&Event> = stream.events.iter().filter(|e| e.t <= t).collect();
    let latest = |x: EntityId| upto.iter().rev().find(|e| e.subject == x).copied();
    let is_add_or_change = |k: EventKind| matches!(k, AddNode | AddEdge | ChangeNodeAttr | ChangeEdgeAttr);

    let mut nodes = BTreeMap::new();
    for v in 0..stream.header.node_universe {
        let x = EntityId::Node(v);
        match latest(x) {
            Some(ev) if is_add_or_change(ev.kind) => {
                nodes.insert(v, ev.attr.clone());
            }
            Some(_) => {}
            None => {
                if let Some((_, a)) = stream.header.g0_nodes.iter().find(|(n, _)| *n == v) {
                    nodes.insert(v, a.clone());
                }
            }
        }
    }
    let mut keys: Vec<EdgeKey> = stream.header.g0_edges.iter().map(|(e, _)| *e).collect();
    keys.extend(upto.iter().filter_map(|e| match e.subject {
        EntityId::Edge(k) => Some(k),
        _ => None,
    }));
    keys.sort();
    keys.dedup();
    let mut edges = BTreeMap::new();
    for k in keys {
        let (since, attr) = match latest(EntityId::Edge(k)) {
            Some(ev) if is_add_or_change(ev.kind) => (ev.t, ev.attr.clone()),
            Some(_) => continue,
            None => match stream.header.g0_edges.iter().find(|(e, _)| *e == k) {
                Some((_, a)) => (0.0, a.clone()),
                None => continue,
            },
        };
        let endpoint_deleted = upto.iter().any(|ev| {
            ev.kind == DeleteNode && ev.t > since && k.endpoints().iter().any(|v| ev.subject == EntityId::Node(*v))
        });
        if !endpoint_deleted {
            edges.insert(k, attr);
        }
    }
    GraphSnapshot { t, nodes, edges }
}

/// Kolmogorov–Smirnov statistic of `samples` against Exp(rate).
pub fn ks_exponential(samples: &[f64], rate: f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = 1.0 - (-rate * v).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` on `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Relative error `|a - b| / max(|a|, |b|)` of two gradient vectors; zero
/// when both vanish.
pub fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

pub fn node(v: NodeId) -> EntityId {
    EntityId::Node(v)
}

pub fn edge(a: NodeId, b: NodeId) -> EntityId {
    EntityId::Edge(EdgeKey::new(a, b).unwrap())
}
