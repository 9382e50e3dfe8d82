//! Stream-driven model state.
//!
//! [`Engine`] owns the graph state, the per-entity embeddings and the tape
//! they live on. Applying an event updates the subject's embedding (and,
//! for edge events, both endpoints'). Queries at a time `t` build the
//! embedding an entity would get if it were updated at `t` with no
//! attribute change; intensities are scored on those.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;

use crate::attention::{self, neighborhood_weights_var, self_attention_var};
use crate::attribute_codec::{embed_attribute, AffineEncoder, RawEncoder};
use crate::autodiff::{Tape, Var};
use crate::embedding::{
    edge_embedding, edge_local_prop, initial_embedding, node_embedding, node_local_prop, EndpointTerm, NeighborTerm,
    StepInputs,
};
use crate::error::{FdgnnError, Result};
use crate::event_stream::{EdgeKey, EntityId, Event, EventKind, Graph, NodeId, Status, StreamHeader};
use crate::params::{Model, Weights};

/// Tape length above which an engine that does not track gradients
/// compacts itself after an event.
const COMPACT_THRESHOLD: usize = 200_000;

#[derive(Clone, Debug)]
pub struct EngineOptions {
    /// Recursion steps per entity before its history is cut from the gradient.
    pub bptt_window: usize,
    pub track_gradients: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { bptt_window: 20, track_gradients: false }
    }
}

/// Latest embedding state of one node or edge.
#[derive(Clone, Copy, Debug)]
pub struct EntityState {
    pub z: Var,
    pub u: Var,
    /// Self-attention normalizer: sum of exponentiated terms so far.
    pub acc: Var,
    /// Self-attention weight at the last update.
    pub p: Var,
    pub t_last: f64,
    chain: usize,
}

/// Entities whose intensities make up the total intensity at one time.
#[derive(Clone, Debug, Default)]
pub struct CandidateSet {
    /// Every node and edge that has appeared.
    pub observed: Vec<EntityId>,
    /// Nodes of the universe that never appeared; they share one intensity.
    pub unseen_nodes: u64,
    pub unseen_node_representative: Option<NodeId>,
    /// Never-seen pairs of active nodes, possibly a uniform sample.
    pub unseen_pairs: Vec<EdgeKey>,
    /// Inverse inclusion weight of each entry in `unseen_pairs`.
    pub unseen_pair_weight: f64,
}

#[derive(Clone, Debug, Default)]
struct QueryCache {
    t: f64,
    z: HashMap<EntityId, Var>,
    p: HashMap<EntityId, Var>,
    blank: HashMap<EntityId, Var>,
}

#[derive(Clone, Debug)]
pub struct Engine {
    model: Model,
    encoder: Arc<dyn RawEncoder>,
    tape: Tape,
    w: Weights<Var>,
    graph: Graph,
    nodes: BTreeMap<NodeId, EntityState>,
    edges: BTreeMap<EdgeKey, EntityState>,
    opts: EngineOptions,
    cache: QueryCache,
}

impl Engine {
    pub fn new(model: Model, header: &StreamHeader, opts: EngineOptions) -> Result<Self> {
        Self::with_encoder(model, header, opts, Arc::new(AffineEncoder))
    }

    pub fn with_encoder(
        model: Model,
        header: &StreamHeader,
        opts: EngineOptions,
        encoder: Arc<dyn RawEncoder>,
    ) -> Result<Self> {
        if header.node_attr_dim != model.config.node_attr_dim || header.edge_attr_dim != model.config.edge_attr_dim {
            return Err(FdgnnError::Shape {
                what: "stream attribute dimensions vs model".into(),
                expected: model.config.node_attr_dim,
                got: header.node_attr_dim,
            });
        }
        let graph = Graph::new(header)?;
        let mut tape = Tape::new();
        let w = model.params.bind(&model.config, &mut tape, opts.track_gradients);
        let mut engine = Engine {
            model,
            encoder,
            tape,
            w,
            graph,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            opts,
            cache: QueryCache::default(),
        };
        for (v, attr) in &header.g0_nodes {
            let st = engine.first_node(*v, 0.0, attr)?;
            engine.nodes.insert(*v, st);
        }
        for (e, attr) in &header.g0_edges {
            let ends = e.endpoints().map(|n| engine.nodes[&n]);
            let terms = ends.map(|s| EndpointTerm { z: s.z, u: s.u, p: s.p });
            let st = engine.first_edge(0.0, attr, &terms)?;
            engine.edges.insert(*e, st);
        }
        Ok(engine)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn weights(&self) -> &Weights<Var> {
        &self.w
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    pub fn status(&self, x: EntityId) -> Status {
        self.graph.status(x)
    }

    pub fn state(&self, x: EntityId) -> Option<&EntityState> {
        match x {
            EntityId::Node(v) => self.nodes.get(&v),
            EntityId::Edge(e) => self.edges.get(&e),
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.tape.value(v)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.tape.scalar(v)
    }

    /// Time of the most recent event, or 0 before any.
    pub fn now(&self) -> f64 {
        self.graph.last_time().unwrap_or(0.0)
    }

    /// Moves the state onto a fresh tape, optionally swapping in new
    /// parameters. Everything computed so far becomes constant.
    pub fn rebind(&mut self, model: Option<Model>) {
        if let Some(m) = model {
            assert_eq!(m.config, self.model.config, "rebind cannot change model shape");
            self.model = m;
        }
        let mut tape = Tape::new();
        self.w = self.model.params.bind(&self.model.config, &mut tape, self.opts.track_gradients);
        let old = std::mem::replace(&mut self.tape, tape);
        let mut move_state = |st: &mut EntityState| {
            for v in [&mut st.z, &mut st.u, &mut st.acc, &mut st.p] {
                *v = self.tape.constant(old.value(*v).to_vec());
            }
            st.chain = 0;
        };
        self.nodes.values_mut().for_each(&mut move_state);
        self.edges.values_mut().for_each(&mut move_state);
        self.cache = QueryCache::default();
    }

    pub fn compact(&mut self) {
        self.rebind(None);
    }

    pub fn set_track_gradients(&mut self, track: bool) {
        self.opts.track_gradients = track;
        self.rebind(None);
    }

    /// Applies one event to graph and embeddings.
    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        self.graph.check(ev).map_err(|v| FdgnnError::Invalid(vec![v]))?;
        let prev_status = self.graph.status(ev.subject);
        self.graph.apply(ev).map_err(|v| FdgnnError::Invalid(vec![v]))?;
        self.cache = QueryCache::default();
        match ev.subject {
            EntityId::Node(v) => {
                let st = if prev_status == Status::Undefined {
                    self.first_node(v, ev.t, &ev.attr)?
                } else {
                    self.step_node(v, ev.t, &ev.attr, prev_status)?
                };
                self.nodes.insert(v, st);
            }
            EntityId::Edge(e) => self.step_edge_event(e, ev, prev_status)?,
        }
        if !self.opts.track_gradients && self.tape.len() > COMPACT_THRESHOLD {
            self.compact();
        }
        Ok(())
    }

    fn codec(&self, node: bool) -> &crate::params::CodecWeights<Var> {
        if node {
            &self.w.node_attr
        } else {
            &self.w.edge_attr
        }
    }

    fn attr_embedding(&mut self, node: bool, prev: Option<Var>, attr: &[f64]) -> Result<Var> {
        let codec = self.codec(node).clone();
        let raw = self.encoder.encode(&mut self.tape, &codec, attr)?;
        let prev = match prev {
            Some(p) => p,
            None => self.tape.zeros(self.model.config.attr_embed_dim),
        };
        embed_attribute(&mut self.tape, &codec, prev, raw)
    }

    fn truncate(&mut self, mut st: EntityState) -> EntityState {
        if st.chain >= self.opts.bptt_window {
            st.z = self.tape.detach(st.z);
            st.u = self.tape.detach(st.u);
            st.acc = self.tape.detach(st.acc);
            st.p = self.tape.detach(st.p);
            st.chain = 0;
        }
        st
    }

    /// New accumulator and weight for a self-attention term.
    fn self_step(&mut self, acc: Option<Var>, u_now: Var, u_prev: Var, xi_now: f64, xi_prev: f64) -> (Var, Var) {
        let tau = self.tape.cosine(u_now, u_prev);
        let exponent = self.tape.scale_const(tau, xi_now * xi_prev);
        self_attention_var(&mut self.tape, acc, exponent)
    }

    /// Neighborhood attention terms for node `v` whose attribute embedding is `u_v`.
    fn neighbor_terms(&mut self, v: NodeId, u_v: Var) -> Vec<NeighborTerm> {
        let xi_v = self.graph.status(EntityId::Node(v)).xi();
        let neighbors: Vec<NodeId> = self.graph.neighbors(v).filter(|m| self.nodes.contains_key(m)).collect();
        if neighbors.is_empty() {
            return Vec::new();
        }
        let edge_mean = if self.model.config.edge_attr_factor {
            let us: Vec<Var> = neighbors
                .iter()
                .filter_map(|m| EdgeKey::new(*m, v).and_then(|e| self.edges.get(&e)).map(|s| s.u))
                .collect();
            if us.is_empty() {
                None
            } else {
                let s = self.tape.sum_of(&us);
                Some(self.tape.scale_const(s, 1.0 / us.len() as f64))
            }
        } else {
            None
        };
        let mut exponents = Vec::with_capacity(neighbors.len());
        let mut states = Vec::with_capacity(neighbors.len());
        for m in &neighbors {
            let e = EdgeKey::new(*m, v).expect("neighbors are distinct");
            let st = self.nodes[m];
            let xi_m = self.graph.status(EntityId::Node(*m)).xi();
            let xi_e = self.graph.status(EntityId::Edge(e)).xi();
            let tau = self.tape.cosine(u_v, st.u);
            let mut exponent = self.tape.scale_const(tau, xi_v * xi_m * xi_e);
            if let (Some(mean), Some(es)) = (edge_mean, self.edges.get(&e)) {
                let f = self.tape.cosine(es.u, mean);
                exponent = self.tape.mul(exponent, f);
            }
            exponents.push(exponent);
            states.push(st);
        }
        let q = neighborhood_weights_var(&mut self.tape, &exponents);
        states.iter().zip(q).map(|(st, q)| NeighborTerm { z: st.z, u: st.u, q }).collect()
    }

    fn first_node(&mut self, v: NodeId, t: f64, attr: &[f64]) -> Result<EntityState> {
        let u = self.attr_embedding(true, None, attr)?;
        let zero = self.tape.zeros(1);
        let (acc, p) = self_attention_var(&mut self.tape, None, zero);
        let terms = self.neighbor_terms(v, u);
        let h = if terms.is_empty() { None } else { Some(node_local_prop(&mut self.tape, &self.w.node, &terms)) };
        let z = initial_embedding(&mut self.tape, &self.w.init, h, u);
        Ok(EntityState { z, u, acc, p, t_last: t, chain: 1 })
    }

    fn step_node(&mut self, v: NodeId, t: f64, attr: &[f64], prev: Status) -> Result<EntityState> {
        let st = self.truncate(self.nodes[&v]);
        let u = self.attr_embedding(true, Some(st.u), attr)?;
        let xi_now = self.graph.status(EntityId::Node(v)).xi();
        let (acc, p) = self.self_step(Some(st.acc), u, st.u, xi_now, prev.xi());
        let z = self.node_update(v, &st, u, p, t);
        Ok(EntityState { z, u, acc, p, t_last: t, chain: st.chain + 1 })
    }

    fn node_update(&mut self, v: NodeId, st: &EntityState, u: Var, p: Var, t: f64) -> Var {
        let terms = self.neighbor_terms(v, u);
        let h_loc = node_local_prop(&mut self.tape, &self.w.node, &terms);
        let inputs = StepInputs { h_loc, z_prev: st.z, p, dt: t - st.t_last, u };
        node_embedding(&mut self.tape, &self.w.node, &inputs)
    }

    fn first_edge(&mut self, _t: f64, attr: &[f64], ends: &[EndpointTerm; 2]) -> Result<EntityState> {
        let u = self.attr_embedding(false, None, attr)?;
        let zero = self.tape.zeros(1);
        let (acc, p) = self_attention_var(&mut self.tape, None, zero);
        let h = edge_local_prop(&mut self.tape, &self.w.edge, Some(&ends[0]), Some(&ends[1]));
        let z = initial_embedding(&mut self.tape, &self.w.init, Some(h), u);
        Ok(EntityState { z, u, acc, p, t_last: _t, chain: 1 })
    }

    /// Edge event: endpoints take a self-attention step, the edge is
    /// updated from the endpoints' previous embeddings, then both endpoints
    /// are re-embedded from their (pre-event) neighborhoods.
    fn step_edge_event(&mut self, e: EdgeKey, ev: &Event, prev: Status) -> Result<()> {
        let t = ev.t;
        let mut ends = Vec::with_capacity(2);
        for n in e.endpoints() {
            let st = self.truncate(self.nodes[&n]);
            let (acc, p) = self.self_step(Some(st.acc), st.u, st.u, 1.0, 1.0);
            ends.push((n, st, acc, p));
        }
        let terms = [0, 1].map(|i| EndpointTerm { z: ends[i].1.z, u: ends[i].1.u, p: ends[i].3 });
        let edge_state = if prev == Status::Undefined {
            self.first_edge(t, &ev.attr, &terms)?
        } else {
            let st = self.truncate(self.edges[&e]);
            let u = self.attr_embedding(false, Some(st.u), &ev.attr)?;
            let xi_now = self.graph.status(EntityId::Edge(e)).xi();
            let (acc, p) = self.self_step(Some(st.acc), u, st.u, xi_now, prev.xi());
            let h_loc = edge_local_prop(&mut self.tape, &self.w.edge, Some(&terms[0]), Some(&terms[1]));
            let inputs = StepInputs { h_loc, z_prev: st.z, p, dt: t - st.t_last, u };
            let z = edge_embedding(&mut self.tape, &self.w.edge, &inputs);
            EntityState { z, u, acc, p, t_last: t, chain: st.chain + 1 }
        };
        let mut updated = Vec::with_capacity(2);
        for (n, st, acc, p) in &ends {
            let z = self.node_update(*n, st, st.u, *p, t);
            updated.push((*n, EntityState { z, u: st.u, acc: *acc, p: *p, t_last: t, chain: st.chain + 1 }));
        }
        self.edges.insert(e, edge_state);
        for (n, st) in updated {
            self.nodes.insert(n, st);
        }
        Ok(())
    }

    fn touch_cache(&mut self, t: f64) {
        if self.cache.t != t {
            self.cache = QueryCache { t, ..QueryCache::default() };
        }
    }

    /// Self-attention weight an entity would get from an update at the
    /// query time with unchanged attributes.
    pub fn query_self_attention(&mut self, x: EntityId, t: f64) -> Option<Var> {
        self.touch_cache(t);
        if let Some(p) = self.cache.p.get(&x) {
            return Some(*p);
        }
        let st = *self.state(x)?;
        let xi = self.graph.status(x).xi();
        let nonzero = self.tape.value(st.u).iter().any(|v| *v != 0.0);
        let term = (xi * xi * if nonzero { 1.0 } else { 0.0 }).exp();
        let denom = self.tape.add_const(st.acc, &[term]);
        let num = self.tape.constant(vec![term]);
        let p = self.tape.div(num, denom);
        self.cache.p.insert(x, p);
        Some(p)
    }

    /// Embedding of an entity with history at time `t`; `None` if it never appeared.
    pub fn query_embedding(&mut self, x: EntityId, t: f64) -> Option<Var> {
        self.touch_cache(t);
        if let Some(z) = self.cache.z.get(&x) {
            return Some(*z);
        }
        let st = *self.state(x)?;
        let p = self.query_self_attention(x, t)?;
        let z = match x {
            EntityId::Node(v) => self.node_update(v, &st, st.u, p, t),
            EntityId::Edge(e) => {
                let terms = self.endpoint_terms(e, t);
                let h_loc = edge_local_prop(&mut self.tape, &self.w.edge, terms[0].as_ref(), terms[1].as_ref());
                let inputs = StepInputs { h_loc, z_prev: st.z, p, dt: t - st.t_last, u: st.u };
                edge_embedding(&mut self.tape, &self.w.edge, &inputs)
            }
        };
        self.cache.z.insert(x, z);
        Some(z)
    }

    fn endpoint_terms(&mut self, e: EdgeKey, t: f64) -> [Option<EndpointTerm>; 2] {
        e.endpoints().map(|n| {
            let x = EntityId::Node(n);
            let st = *self.state(x)?;
            let p = self.query_self_attention(x, t)?;
            Some(EndpointTerm { z: st.z, u: st.u, p })
        })
    }

    /// Initial embedding for an entity that has not appeared, given a
    /// candidate attribute. Missing endpoint embeddings contribute nothing.
    pub fn candidate_embedding(&mut self, x: EntityId, t: f64, attr: &[f64]) -> Result<Var> {
        self.touch_cache(t);
        let blank = attr.iter().all(|v| *v == 0.0);
        if blank {
            if let Some(z) = self.cache.blank.get(&x) {
                return Ok(*z);
            }
        }
        let z = match x {
            EntityId::Node(_) => {
                let u = self.attr_embedding(true, None, attr)?;
                initial_embedding(&mut self.tape, &self.w.init, None, u)
            }
            EntityId::Edge(e) => {
                let u = self.attr_embedding(false, None, attr)?;
                let terms = self.endpoint_terms(e, t);
                let h = edge_local_prop(&mut self.tape, &self.w.edge, terms[0].as_ref(), terms[1].as_ref());
                initial_embedding(&mut self.tape, &self.w.init, Some(h), u)
            }
        };
        if blank {
            self.cache.blank.insert(x, z);
        }
        Ok(z)
    }

    pub fn blank_attr(&self, x: EntityId) -> Vec<f64> {
        vec![0.0; self.graph.header().attr_dim(x)]
    }

    /// Neighborhood attention of node `v` from current values, computed
    /// without the tape.
    pub fn neighborhood_weights(&self, v: NodeId) -> Vec<(NodeId, f64)> {
        let Some(sv) = self.nodes.get(&v) else { return Vec::new() };
        let u_v = self.tape.value(sv.u);
        let xi_v = self.graph.status(EntityId::Node(v)).xi();
        let neighbors: Vec<NodeId> = self.graph.neighbors(v).filter(|m| self.nodes.contains_key(m)).collect();
        let edge_mean: Option<Vec<f64>> = if self.model.config.edge_attr_factor {
            let us: Vec<&[f64]> = neighbors
                .iter()
                .filter_map(|m| EdgeKey::new(*m, v).and_then(|e| self.edges.get(&e)))
                .map(|s| self.tape.value(s.u))
                .collect();
            (!us.is_empty()).then(|| {
                let mut mean = vec![0.0; us[0].len()];
                for u in &us {
                    mean.iter_mut().zip(u.iter()).for_each(|(a, b)| *a += b);
                }
                mean.iter_mut().for_each(|a| *a *= 1.0 / us.len() as f64);
                mean
            })
        } else {
            None
        };
        let exponents: Vec<f64> = neighbors
            .iter()
            .map(|m| {
                let e = EdgeKey::new(*m, v).expect("distinct");
                let xi_m = self.graph.status(EntityId::Node(*m)).xi();
                let xi_e = self.graph.status(EntityId::Edge(e)).xi();
                let tau = attention::similarity(u_v, self.tape.value(self.nodes[m].u));
                let mut x = attention::neighbor_exponent(xi_v, xi_m, xi_e, tau);
                if let (Some(mean), Some(es)) = (&edge_mean, self.edges.get(&e)) {
                    x *= attention::similarity(self.tape.value(es.u), mean);
                }
                x
            })
            .collect();
        neighbors.into_iter().zip(attention::neighborhood_attention(&exponents)).collect()
    }

    /// Candidate entities at the current state. With `rng`, never-seen
    /// active pairs beyond `pair_samples` are subsampled uniformly with
    /// replacement and reweighted; without it they are all enumerated.
    pub fn candidates<R: Rng + ?Sized>(&self, rng: Option<&mut R>, pair_samples: usize) -> CandidateSet {
        let mut observed: Vec<EntityId> = self.nodes.keys().map(|v| EntityId::Node(*v)).collect();
        observed.extend(self.edges.keys().map(|e| EntityId::Edge(*e)));
        let universe = self.graph.header().node_universe;
        let unseen_nodes = universe as u64 - self.nodes.len() as u64;
        let unseen_node_representative = (0..universe).find(|v| !self.nodes.contains_key(v));
        let active: Vec<NodeId> = self.graph.active_nodes().collect();
        let mut pairs = Vec::new();
        for (i, a) in active.iter().enumerate() {
            for b in &active[i + 1..] {
                let e = EdgeKey::new(*a, *b).expect("distinct");
                if !self.edges.contains_key(&e) {
                    pairs.push(e);
                }
            }
        }
        let (unseen_pairs, unseen_pair_weight) = match rng {
            Some(rng) if pairs.len() > pair_samples && pair_samples > 0 => {
                let picked = (0..pair_samples).map(|_| pairs[rng.random_range(0..pairs.len())]).collect();
                (picked, pairs.len() as f64 / pair_samples as f64)
            }
            Some(_) if pair_samples == 0 => (Vec::new(), 0.0),
            _ => (pairs, 1.0),
        };
        CandidateSet { observed, unseen_nodes, unseen_node_representative, unseen_pairs, unseen_pair_weight }
    }

    /// Embedding vector at the last update.
    pub fn stored_embedding(&self, x: EntityId) -> Option<&[f64]> {
        self.state(x).map(|s| self.tape.value(s.z))
    }

    pub(crate) fn kind_weights(&self, kind: EventKind) -> (Var, Var) {
        (self.w.intensity.w[kind.index()], self.w.intensity.rho[kind.index()])
    }

    pub(crate) fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    pub(crate) fn w_hat5(&self) -> Var {
        self.w.intensity.w_hat5
    }
}
