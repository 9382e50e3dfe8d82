//! Synthetic streams by thinning, from constant per-kind rates or a model.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SimulateSection;
use crate::engine::{Engine, EngineOptions};
use crate::error::{FdgnnError, Result};
use crate::event_stream::{EdgeKey, EntityId, Event, EventKind, Graph, NodeId, Status, Stream, StreamHeader};
use crate::intensity::{branch, Branch};
use crate::params::{Model, ModelConfig, Tensor};

#[derive(Clone, Debug)]
pub enum IntensitySource {
    /// Rate per event kind, applied to every admissible entity.
    Constant([f64; 6]),
    Model(Box<Model>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttrGen {
    /// New entities get `value` in every component; changes keep the current value.
    Constant(f64),
    /// As `Constant`, plus isotropic Gaussian noise on every emitted payload.
    Noise { value: f64, stddev: f64 },
}

#[derive(Clone, Debug)]
pub struct SimSpec {
    pub horizon: f64,
    pub header: StreamHeader,
    pub source: IntensitySource,
    pub attr: AttrGen,
    pub seed: u64,
    pub max_events: Option<usize>,
}

/// Ground-truth intensity of an emitted event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    pub seq: u64,
    /// Intensity of the emitted (kind, subject).
    pub lambda: f64,
    /// Total intensity at the emission time.
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct SimTrace {
    pub stream: Stream,
    pub lambdas: Vec<LambdaRecord>,
}

impl SimSpec {
    /// Builds a spec from a `[simulate]` table. Relative model paths are
    /// resolved against `base`.
    pub fn from_section(sec: &SimulateSection, base: Option<&Path>) -> Result<Self> {
        if !(sec.horizon.is_finite() && sec.horizon > 0.0) {
            return Err(FdgnnError::Config("horizon must be positive".into()));
        }
        if sec.universe < sec.initial_nodes {
            return Err(FdgnnError::Config("universe smaller than the initial graph".into()));
        }
        if sec.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(FdgnnError::Config("rates must be finite and non-negative".into()));
        }
        if !(sec.attr_noise.is_finite() && sec.attr_noise >= 0.0) {
            return Err(FdgnnError::Config("attr_noise must be non-negative".into()));
        }
        let mut header = StreamHeader::empty(sec.node_attr_dim, sec.edge_attr_dim, sec.universe);
        header.g0_nodes = (0..sec.initial_nodes).map(|v| (v, vec![sec.attr_value; sec.node_attr_dim])).collect();
        for [a, b] in &sec.initial_edges {
            let e = EdgeKey::new(*a, *b).ok_or_else(|| FdgnnError::Config(format!("self-loop {a},{b}")))?;
            header.g0_edges.push((e, vec![sec.attr_value; sec.edge_attr_dim]));
        }
        let source = match &sec.model {
            Some(p) => {
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                IntensitySource::Model(Box::new(Model::load(&path)?))
            }
            None => IntensitySource::Constant(sec.rates),
        };
        let attr = if sec.attr_noise > 0.0 {
            AttrGen::Noise { value: sec.attr_value, stddev: sec.attr_noise }
        } else {
            AttrGen::Constant(sec.attr_value)
        };
        Ok(SimSpec { horizon: sec.horizon, header, source, attr, seed: sec.seed, max_events: sec.max_events })
    }
}

/// Every (kind, subject) pair with a nonzero intensity branch. Forced
/// deletions never occur because endpoint deletion cascades.
pub fn admissible(graph: &Graph) -> Vec<(EventKind, EntityId)> {
    let header = graph.header();
    let mut out = Vec::new();
    for v in 0..header.node_universe {
        let x = EntityId::Node(v);
        let s = graph.status(x);
        for k in EventKind::NODE {
            if branch(k, s, (Status::Active, Status::Active)) == Branch::Scored {
                out.push((k, x));
            }
        }
    }
    let active: Vec<NodeId> = graph.active_nodes().collect();
    for (i, a) in active.iter().enumerate() {
        for b in &active[i + 1..] {
            let e = EdgeKey::new(*a, *b).expect("distinct");
            let x = EntityId::Edge(e);
            let s = graph.status(x);
            for k in EventKind::EDGE {
                if branch(k, s, (Status::Active, Status::Active)) == Branch::Scored {
                    out.push((k, x));
                }
            }
        }
    }
    out
}

/// Number of admissible entities per kind.
pub fn admissible_counts(graph: &Graph) -> [usize; 6] {
    let mut c = [0; 6];
    for (k, _) in admissible(graph) {
        c[k.index()] += 1;
    }
    c
}

trait Rates {
    fn graph(&self) -> &Graph;
    /// Intensity of every admissible pair at `t`.
    fn intensities(&mut self, pairs: &[(EventKind, EntityId)], t: f64) -> Result<Vec<f64>>;
    fn apply(&mut self, ev: &Event) -> Result<()>;
}

struct ConstantRates {
    graph: Graph,
    rates: [f64; 6],
}

impl Rates for ConstantRates {
    fn graph(&self) -> &Graph {
        &self.graph
    }
    fn intensities(&mut self, pairs: &[(EventKind, EntityId)], _t: f64) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|(k, _)| self.rates[k.index()]).collect())
    }
    fn apply(&mut self, ev: &Event) -> Result<()> {
        self.graph.apply(ev).map(|_| ()).map_err(|v| FdgnnError::Invalid(vec![v]))
    }
}

struct ModelRates {
    engine: Engine,
}

impl Rates for ModelRates {
    fn graph(&self) -> &Graph {
        self.engine.graph()
    }
    fn intensities(&mut self, pairs: &[(EventKind, EntityId)], t: f64) -> Result<Vec<f64>> {
        pairs.iter().map(|(k, x)| self.engine.lambda(*k, *x, t, None).map(|l| l.value)).collect()
    }
    fn apply(&mut self, ev: &Event) -> Result<()> {
        self.engine.apply(ev)
    }
}

struct Attrs {
    gen: AttrGen,
    last: BTreeMap<EntityId, Vec<f64>>,
    dims: (usize, usize),
}

impl Attrs {
    fn payload<R: Rng + ?Sized>(&mut self, kind: EventKind, x: EntityId, rng: &mut R) -> Vec<f64> {
        let dim = if x.is_node() { self.dims.0 } else { self.dims.1 };
        let (value, stddev) = match self.gen {
            AttrGen::Constant(v) => (v, 0.0),
            AttrGen::Noise { value, stddev } => (value, stddev),
        };
        let mut a = self.last.get(&x).cloned().unwrap_or_else(|| vec![value; dim]);
        let deletion = matches!(kind, EventKind::DeleteNode | EventKind::DeleteEdge);
        if stddev > 0.0 && !deletion {
            let n = Normal::new(0.0, stddev).expect("stddev checked");
            a.iter_mut().for_each(|v| *v += n.sample(rng));
        }
        self.last.insert(x, a.clone());
        a
    }
}

/// Draws a stream on `[0, horizon]` by thinning.
pub fn thinning_sample(spec: &SimSpec) -> Result<SimTrace> {
    let graph = Graph::new(&spec.header)?;
    let mut rates: Box<dyn Rates> = match &spec.source {
        IntensitySource::Constant(r) => Box::new(ConstantRates { graph, rates: *r }),
        IntensitySource::Model(m) => {
            let engine = Engine::new((**m).clone(), &spec.header, EngineOptions::default())?;
            Box::new(ModelRates { engine })
        }
    };
    let exact_bound = matches!(spec.source, IntensitySource::Constant(_));
    let mut attrs = Attrs {
        gen: spec.attr,
        last: spec
            .header
            .g0_nodes
            .iter()
            .map(|(v, a)| (EntityId::Node(*v), a.clone()))
            .chain(spec.header.g0_edges.iter().map(|(e, a)| (EntityId::Edge(*e), a.clone())))
            .collect(),
        dims: (spec.header.node_attr_dim, spec.header.edge_attr_dim),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::new();
    let mut lambdas = Vec::new();
    let mut t = 0.0;
    let limit = spec.max_events.unwrap_or(usize::MAX);
    'outer: while events.len() < limit {
        let pairs = admissible(rates.graph());
        if pairs.is_empty() {
            break;
        }
        let now: f64 = rates.intensities(&pairs, t)?.iter().sum();
        if now <= 0.0 {
            break;
        }
        let mut bound = if exact_bound { now } else { 2.0 * now };
        let mut s = t;
        loop {
            let proposal = s + Exp::new(bound).expect("positive bound").sample(&mut rng);
            if proposal > spec.horizon {
                break 'outer;
            }
            let values = rates.intensities(&pairs, proposal)?;
            let total: f64 = values.iter().sum();
            if total > bound {
                // the bound did not hold; retry from the same point with a wider one
                bound *= 2.0;
                continue;
            }
            s = proposal;
            if rng.random::<f64>() * bound > total {
                continue;
            }
            assert!(total <= bound, "accepted above the thinning bound");
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = pairs.len() - 1;
            for (i, v) in values.iter().enumerate() {
                if pick < *v {
                    chosen = i;
                    break;
                }
                pick -= v;
            }
            let (kind, subject) = pairs[chosen];
            let attr = attrs.payload(kind, subject, &mut rng);
            let ev = Event { seq: events.len() as u64, t: proposal, kind, subject, attr };
            rates.apply(&ev)?;
            lambdas.push(LambdaRecord { seq: ev.seq, lambda: values[chosen], total });
            events.push(ev);
            t = proposal;
            break;
        }
    }
    Ok(SimTrace { stream: Stream::new(spec.header.clone(), events), lambdas })
}

/// Writes the ground-truth sidecar, one JSON object per line.
pub fn write_lambdas(mut w: impl Write, lambdas: &[LambdaRecord]) -> Result<()> {
    for r in lambdas {
        serde_json::to_writer(&mut w, r).map_err(|e| FdgnnError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Path of the sidecar next to a trace file.
pub fn sidecar_path(out: &Path) -> std::path::PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".lambda.jsonl");
    s.into()
}

/// Model whose every admissible intensity equals the constant rate of its
/// kind: zero weights and `psi_k = c_k / ln 2`.
pub fn constant_rate_model(config: ModelConfig, rates: [f64; 6]) -> Model {
    let mut m = Model::zeros(config);
    for (k, c) in rates.iter().enumerate() {
        let t = m.params.get_mut(&format!("int.psi{k}")).expect("registered");
        *t = Tensor::from_vec(&[1], vec![(c.max(1e-12) / std::f64::consts::LN_2).ln()]);
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    /// Time-averaged intensity per admissible entity of each kind.
    pub learned: [Option<f64>; 6],
    pub truth: [f64; 6],
    /// `|learned - truth| / truth` where both are defined and truth > 0.
    pub rel_err: [Option<f64>; 6],
}

/// Compares a model's per-kind intensities with known constant rates on a
/// uniform grid of `grid` points over the trace.
pub fn rate_recovery_check(trace: &Stream, rates: [f64; 6], model: &Model, grid: usize) -> Result<RateReport> {
    let Some(last) = trace.events.last() else {
        return Err(FdgnnError::NoEvents("compare"));
    };
    let mut engine = Engine::new(model.clone(), &trace.header, EngineOptions::default())?;
    let mut sums = [0.0; 6];
    let mut counts = [0usize; 6];
    let mut next = 0;
    for i in 0..grid.max(1) {
        let s = last.t * (i as f64 + 0.5) / grid.max(1) as f64;
        while next < trace.events.len() && trace.events[next].t < s {
            engine.apply(&trace.events[next])?;
            next += 1;
        }
        let pairs = admissible(engine.graph());
        for (k, x) in pairs {
            sums[k.index()] += engine.lambda(k, x, s, None)?.value;
            counts[k.index()] += 1;
        }
        engine.compact();
    }
    let learned: [Option<f64>; 6] = std::array::from_fn(|k| (counts[k] > 0).then(|| sums[k] / counts[k] as f64));
    let rel_err = std::array::from_fn(|k| match learned[k] {
        Some(l) if rates[k] > 0.0 => Some((l - rates[k]).abs() / rates[k]),
        _ => None,
    });
    Ok(RateReport { learned, truth: rates, rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_stream::validate_stream;

    fn spec(rates: [f64; 6], universe: u32, initial: u32, horizon: f64) -> SimSpec {
        let sec = SimulateSection {
            horizon,
            universe,
            initial_nodes: initial,
            initial_edges: vec![],
            node_attr_dim: 1,
            edge_attr_dim: 1,
            rates,
            attr_noise: 0.5,
            seed: 11,
            ..SimulateSection::default()
        };
        SimSpec::from_section(&sec, None).unwrap()
    }

    #[test]
    fn zero_rates_give_empty_trace() {
        let tr = thinning_sample(&spec([0.0; 6], 4, 2, 10.0)).unwrap();
        assert!(tr.stream.events.is_empty());
    }

    #[test]
    fn traces_validate_and_repeat() {
        let s = spec([0.1, 0.05, 0.2, 0.1, 0.5, 0.3], 6, 3, 60.0);
        let a = thinning_sample(&s).unwrap();
        assert!(a.stream.events.len() > 20);
        assert!(validate_stream(&a.stream.header, &a.stream.events).is_empty());
        let b = thinning_sample(&s).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.lambdas, b.lambdas);
    }

    #[test]
    fn exhausted_universe_stops_additions() {
        let tr = thinning_sample(&spec([5.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3, 1, 100.0)).unwrap();
        assert_eq!(tr.stream.events.len(), 2);
        assert!(tr.stream.events.iter().all(|e| e.kind == EventKind::AddNode));
    }

    #[test]
    fn poisson_count_single_node() {
        let c = 2.0;
        let horizon = 50.0;
        let tr = thinning_sample(&spec([0.0, 0.0, 0.0, 0.0, c, 0.0], 1, 1, horizon)).unwrap();
        let n = tr.stream.events.len() as f64;
        assert!((n - c * horizon).abs() <= 4.0 * (c * horizon).sqrt(), "{n}");
        assert!(tr.lambdas.iter().all(|r| r.lambda == c && r.total == c));
    }

    #[test]
    fn model_source_respects_bound_and_validates() {
        let cfg = ModelConfig { node_attr_dim: 1, edge_attr_dim: 1, embed_dim: 3, attr_embed_dim: 3, raw_dim: 2, edge_attr_factor: false };
        let mut s = spec([0.0; 6], 5, 2, 15.0);
        let mut m = Model::init(cfg, 4);
        for k in 0..6 {
            m.params.get_mut(&format!("int.psi{k}")).unwrap().data[0] = -1.0;
        }
        s.source = IntensitySource::Model(Box::new(m));
        let tr = thinning_sample(&s).unwrap();
        assert!(!tr.stream.events.is_empty());
        assert!(validate_stream(&tr.stream.header, &tr.stream.events).is_empty());
    }

    #[test]
    fn perfect_model_recovers_rates() {
        let rates = [0.3, 0.1, 0.2, 0.1, 1.0, 0.5];
        let s = spec(rates, 5, 3, 20.0);
        let tr = thinning_sample(&s).unwrap();
        let cfg = ModelConfig { node_attr_dim: 1, edge_attr_dim: 1, embed_dim: 2, attr_embed_dim: 2, raw_dim: 1, edge_attr_factor: false };
        let r = rate_recovery_check(&tr.stream, rates, &constant_rate_model(cfg, rates), 50).unwrap();
        for e in r.rel_err.iter().flatten() {
            assert!(*e < 1e-12);
        }
        let empty = Stream::new(tr.stream.header.clone(), vec![]);
        assert!(matches!(
            rate_recovery_check(&empty, rates, &constant_rate_model(cfg, rates), 5),
            Err(FdgnnError::NoEvents("compare"))
        ));
    }

    #[test]
    fn sidecar_lines_parse() {
        let mut buf = Vec::new();
        write_lambdas(&mut buf, &[LambdaRecord { seq: 3, lambda: 0.5, total: 2.0 }]).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let back: LambdaRecord = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back.seq, 3);
        assert_eq!(sidecar_path(Path::new("/tmp/a.jsonl")), Path::new("/tmp/a.jsonl.lambda.jsonl"));
    }
}
