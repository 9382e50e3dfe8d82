//! Learnable weights as a flat registry of named tensors, and the binary
//! model file.
//!
//! [`Weights<T>`] is generic over what is stored per tensor: [`Tensor`] for
//! the parameters themselves and for gradients, [`Var`](crate::autodiff::Var)
//! once they are bound to a tape.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{FdgnnError, Result};

pub const MODEL_MAGIC: &[u8; 6] = b"FDGNN1";
const EDGE_FACTOR_FLAG: &str = "meta.edge_attr_factor";

/// Dimensions and switches that fix every tensor shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub node_attr_dim: usize,
    pub edge_attr_dim: usize,
    /// Entity embedding size `d`.
    pub embed_dim: usize,
    /// Attribute embedding size.
    pub attr_embed_dim: usize,
    /// Raw attribute encoding size.
    pub raw_dim: usize,
    /// Multiply neighborhood attention exponents by an edge-attribute similarity.
    pub edge_attr_factor: bool,
}

impl ModelConfig {
    /// Attribute embeddings are mapped into embedding space by a learned
    /// matrix only when the two sizes differ.
    pub fn needs_lift(&self) -> bool {
        self.embed_dim != self.attr_embed_dim
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Attribute recursion and raw encoder for one attribute kind.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecWeights<T> {
    pub enc_w: T,
    pub enc_b: T,
    pub m0: T,
    pub b: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeWeights<T> {
    pub m1: T,
    pub m2: T,
    pub m3: T,
    pub m4: T,
    pub m5: T,
    pub m6: T,
    pub lift: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeWeights<T> {
    pub m7: T,
    pub m8: T,
    pub m9: T,
    pub m10: T,
    pub m11: T,
    pub m12: T,
    pub m13: T,
    pub m14: T,
    pub lift: Option<T>,
}

/// Embedding of entities without activity history.
#[derive(Clone, Debug, PartialEq)]
pub struct InitWeights<T> {
    pub local: T,
    pub attr: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntensityWeights<T> {
    /// Score vectors for event kinds 0..=5.
    pub w: [T; 6],
    /// Edge attribute-change score on the edge's own trajectory.
    pub w_hat5: T,
    /// Log activation scales; `psi_k = exp(rho_k)`.
    pub rho: [T; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    pub node_attr: CodecWeights<T>,
    pub edge_attr: CodecWeights<T>,
    pub node: NodeWeights<T>,
    pub edge: EdgeWeights<T>,
    pub init: InitWeights<T>,
    pub intensity: IntensityWeights<T>,
}

pub type ModelParams = Weights<Tensor>;

/// Name and shape of every tensor, in construction order.
pub fn tensor_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, u, z) = (cfg.embed_dim, cfg.attr_embed_dim, cfg.raw_dim);
    let mut out = Vec::new();
    let mut add = |name: &str, shape: &[usize]| out.push((name.to_string(), shape.to_vec()));
    for (prefix, dim) in [("attr.node", cfg.node_attr_dim), ("attr.edge", cfg.edge_attr_dim)] {
        add(&format!("{prefix}.enc.W"), &[z, dim]);
        add(&format!("{prefix}.enc.b"), &[z]);
        add(&format!("{prefix}.M0"), &[u, u + z]);
        add(&format!("{prefix}.b"), &[u]);
    }
    add("emb.node.M1", &[d, d]);
    add("emb.node.M2", &[d, d]);
    add("emb.node.m3", &[d]);
    add("emb.node.M4", &[d, u]);
    add("emb.node.m5", &[1]);
    add("emb.node.m6", &[1]);
    if cfg.needs_lift() {
        add("emb.node.lift", &[d, u]);
    }
    add("emb.edge.M7", &[d, d]);
    add("emb.edge.M8", &[d, d]);
    add("emb.edge.m9", &[d]);
    add("emb.edge.M10", &[d, u]);
    for k in 11..=14 {
        add(&format!("emb.edge.m{k}"), &[1]);
    }
    if cfg.needs_lift() {
        add("emb.edge.lift", &[d, u]);
    }
    add("emb.init.Mp", &[d, d]);
    add("emb.init.Mpp", &[d, u]);
    let score_len = [d, d, 3 * d, 3 * d, 2 * d, 3 * d];
    for (k, len) in score_len.iter().enumerate() {
        add(&format!("int.W{k}"), &[*len]);
    }
    add("int.Wh5", &[2 * d]);
    for k in 0..6 {
        add(&format!("int.psi{k}"), &[1]);
    }
    out
}

impl<T> Weights<T> {
    /// Builds every tensor slot by calling `f(name, shape)` in layout order.
    pub fn try_build<E>(cfg: &ModelConfig, mut f: impl FnMut(&str, &[usize]) -> Result<T, E>) -> Result<Self, E> {
        let layout = tensor_layout(cfg);
        let mut items = layout.iter().map(|(n, s)| f(n, s));
        let mut next = || items.next().expect("layout covers every field");
        let codec = |next: &mut dyn FnMut() -> Result<T, E>| -> Result<CodecWeights<T>, E> {
            Ok(CodecWeights { enc_w: next()?, enc_b: next()?, m0: next()?, b: next()? })
        };
        let node_attr = codec(&mut next)?;
        let edge_attr = codec(&mut next)?;
        let node = NodeWeights {
            m1: next()?,
            m2: next()?,
            m3: next()?,
            m4: next()?,
            m5: next()?,
            m6: next()?,
            lift: if cfg.needs_lift() { Some(next()?) } else { None },
        };
        let edge = EdgeWeights {
            m7: next()?,
            m8: next()?,
            m9: next()?,
            m10: next()?,
            m11: next()?,
            m12: next()?,
            m13: next()?,
            m14: next()?,
            lift: if cfg.needs_lift() { Some(next()?) } else { None },
        };
        let init = InitWeights { local: next()?, attr: next()? };
        let w = [next()?, next()?, next()?, next()?, next()?, next()?];
        let w_hat5 = next()?;
        let rho = [next()?, next()?, next()?, next()?, next()?, next()?];
        Ok(Weights { node_attr, edge_attr, node, edge, init, intensity: IntensityWeights { w, w_hat5, rho } })
    }

    pub fn build(cfg: &ModelConfig, mut f: impl FnMut(&str, &[usize]) -> T) -> Self {
        Self::try_build::<std::convert::Infallible>(cfg, |n, s| Ok(f(n, s))).unwrap_or_else(|e| match e {})
    }

    /// Every slot paired with its registry name, in layout order.
    pub fn entries(&self) -> Vec<(&'static str, &T)> {
        // Names are leaked once per distinct layout; the set is small and fixed.
        let mut out: Vec<&T> = Vec::new();
        for c in [&self.node_attr, &self.edge_attr] {
            out.extend([&c.enc_w, &c.enc_b, &c.m0, &c.b]);
        }
        let n = &self.node;
        out.extend([&n.m1, &n.m2, &n.m3, &n.m4, &n.m5, &n.m6]);
        out.extend(n.lift.as_ref());
        let e = &self.edge;
        out.extend([&e.m7, &e.m8, &e.m9, &e.m10, &e.m11, &e.m12, &e.m13, &e.m14]);
        out.extend(e.lift.as_ref());
        out.extend([&self.init.local, &self.init.attr]);
        out.extend(self.intensity.w.iter());
        out.push(&self.intensity.w_hat5);
        out.extend(self.intensity.rho.iter());
        let names = static_names(self.node.lift.is_some());
        names.iter().copied().zip(out).collect()
    }

    pub fn map<U>(&self, cfg: &ModelConfig, mut f: impl FnMut(&str, &T) -> U) -> Weights<U> {
        let entries = self.entries();
        let mut it = entries.into_iter();
        Weights::build(cfg, |name, _| {
            let (n, t) = it.next().expect("same layout");
            debug_assert_eq!(n, name);
            f(name, t)
        })
    }
}

fn static_names(lift: bool) -> &'static [&'static str] {
    use std::sync::OnceLock;
    static WITH: OnceLock<Vec<&'static str>> = OnceLock::new();
    static WITHOUT: OnceLock<Vec<&'static str>> = OnceLock::new();
    let make = |lift: bool| {
        let cfg = ModelConfig {
            node_attr_dim: 1,
            edge_attr_dim: 1,
            embed_dim: 1,
            attr_embed_dim: if lift { 2 } else { 1 },
            raw_dim: 1,
            edge_attr_factor: false,
        };
        tensor_layout(&cfg)
            .into_iter()
            .map(|(n, _)| &*Box::leak(n.into_boxed_str()))
            .collect::<Vec<&'static str>>()
    };
    if lift {
        WITH.get_or_init(|| make(true))
    } else {
        WITHOUT.get_or_init(|| make(false))
    }
}

impl Weights<Tensor> {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries_mut().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn entries_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let names = static_names(self.node.lift.is_some());
        let mut out: Vec<&mut Tensor> = Vec::new();
        for c in [&mut self.node_attr, &mut self.edge_attr] {
            out.extend([&mut c.enc_w, &mut c.enc_b, &mut c.m0, &mut c.b]);
        }
        let n = &mut self.node;
        out.extend([&mut n.m1, &mut n.m2, &mut n.m3, &mut n.m4, &mut n.m5, &mut n.m6]);
        out.extend(n.lift.as_mut());
        let e = &mut self.edge;
        out.extend([&mut e.m7, &mut e.m8, &mut e.m9, &mut e.m10, &mut e.m11, &mut e.m12, &mut e.m13, &mut e.m14]);
        out.extend(e.lift.as_mut());
        out.extend([&mut self.init.local, &mut self.init.attr]);
        out.extend(self.intensity.w.iter_mut());
        out.push(&mut self.intensity.w_hat5);
        out.extend(self.intensity.rho.iter_mut());
        names.iter().copied().zip(out).collect()
    }

    /// Registry view sorted by name.
    pub fn named(&self) -> BTreeMap<&'static str, &Tensor> {
        self.entries().into_iter().collect()
    }

    pub fn all_finite(&self) -> std::result::Result<(), &'static str> {
        match self.entries().into_iter().find(|(_, t)| t.data.iter().any(|x| !x.is_finite())) {
            Some((name, _)) => Err(name),
            None => Ok(()),
        }
    }

    /// Places every tensor on `tape` as a gradient-tracking leaf, or as a
    /// constant when `track` is false.
    pub fn bind(&self, cfg: &ModelConfig, tape: &mut Tape, track: bool) -> Weights<Var> {
        self.map(cfg, |_, t| if track { tape.param(t.data.clone()) } else { tape.constant(t.data.clone()) })
    }
}

/// Parameters plus the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn zeros(config: ModelConfig) -> Self {
        Model { config, params: Weights::build(&config, |_, s| Tensor::zeros(s)) }
    }

    /// Matrices and vectors uniform in (-0.1, 0.1); activation scales 1.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Weights::build(&config, |name, shape| {
            let mut t = Tensor::zeros(shape);
            if !name.starts_with("int.psi") {
                t.data.iter_mut().for_each(|x| *x = rng.random_range(-0.1..0.1));
            }
            t
        });
        Model { config, params }
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let mut named: Vec<(&str, Tensor)> =
            self.params.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
        let flag = if self.config.edge_attr_factor { 1.0 } else { 0.0 };
        named.push((EDGE_FACTOR_FLAG, Tensor::from_vec(&[1], vec![flag])));
        named.sort_by(|a, b| a.0.cmp(b.0));
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&(named.len() as u32).to_le_bytes())?;
        for (name, t) in named {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for d in &t.shape {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| FdgnnError::Model(m.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("missing FDGNN1 magic"));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let count = read_u32(&mut r)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not utf-8"))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                r.read_exact(&mut u64buf)?;
                shape.push(u64::from_le_bytes(u64buf) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut u64buf)?;
                data.push(f64::from_le_bytes(u64buf));
            }
            tensors.insert(name, Tensor { shape, data });
        }
        let shape_of = |name: &str| tensors.get(name).map(|t| t.shape.clone()).ok_or_else(|| bad(&format!("missing {name}")));
        let enc_node = shape_of("attr.node.enc.W")?;
        let enc_edge = shape_of("attr.edge.enc.W")?;
        let m0 = shape_of("attr.node.M0")?;
        let w0 = shape_of("int.W0")?;
        if enc_node.len() != 2 || enc_edge.len() != 2 || m0.len() != 2 || w0.len() != 1 {
            return Err(bad("unexpected tensor rank"));
        }
        let config = ModelConfig {
            node_attr_dim: enc_node[1],
            edge_attr_dim: enc_edge[1],
            embed_dim: w0[0],
            attr_embed_dim: m0[0],
            raw_dim: enc_node[0],
            edge_attr_factor: tensors.get(EDGE_FACTOR_FLAG).is_some_and(|t| t.data.first() == Some(&1.0)),
        };
        let params = Weights::try_build(&config, |name, shape| {
            let t = tensors.get(name).ok_or_else(|| bad(&format!("missing {name}")))?;
            if t.shape != shape {
                return Err(bad(&format!("{name} has shape {:?}, expected {shape:?}", t.shape)));
            }
            Ok(t.clone())
        })?;
        Ok(Model { config, params })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
