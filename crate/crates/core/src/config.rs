//! Configuration file: flat training keys plus an optional `[simulate]` table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FdgnnError, Result};
use crate::params::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Events per SGD window.
    pub batch_events: usize,
    pub epochs: usize,
    /// Survival time samples per observed event.
    pub mc_time_samples: usize,
    /// Never-seen node pairs sampled per survival time point.
    pub mc_entity_samples: usize,
    pub bptt_window: usize,
    pub seed: u64,
    pub local_lr: f64,
    pub embed_dim: usize,
    pub attr_embed_dim: usize,
    pub raw_dim: usize,
    pub edge_attr_factor: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            batch_events: 20,
            epochs: 10,
            mc_time_samples: 5,
            mc_entity_samples: 32,
            bptt_window: 20,
            seed: 0,
            local_lr: 0.01,
            embed_dim: 8,
            attr_embed_dim: 8,
            raw_dim: 8,
            edge_attr_factor: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FdgnnError::Config(format!("{what} must be positive")));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr");
        }
        if !(self.local_lr.is_finite() && self.local_lr > 0.0) {
            return bad("local_lr");
        }
        for (name, v) in [
            ("batch_events", self.batch_events),
            ("mc_time_samples", self.mc_time_samples),
            ("mc_entity_samples", self.mc_entity_samples),
            ("bptt_window", self.bptt_window),
            ("embed_dim", self.embed_dim),
            ("attr_embed_dim", self.attr_embed_dim),
            ("raw_dim", self.raw_dim),
        ] {
            if v == 0 {
                return bad(name);
            }
        }
        Ok(())
    }

    pub fn model_config(&self, node_attr_dim: usize, edge_attr_dim: usize) -> ModelConfig {
        ModelConfig {
            node_attr_dim,
            edge_attr_dim,
            embed_dim: self.embed_dim,
            attr_embed_dim: self.attr_embed_dim,
            raw_dim: self.raw_dim,
            edge_attr_factor: self.edge_attr_factor,
        }
    }
}

/// `[simulate]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub horizon: f64,
    pub universe: u32,
    /// Nodes `0..initial_nodes` are active at time 0.
    pub initial_nodes: u32,
    pub initial_edges: Vec<[u32; 2]>,
    pub node_attr_dim: usize,
    pub edge_attr_dim: usize,
    /// Constant rate per event kind; ignored when `model` is set.
    pub rates: [f64; 6],
    /// Model file used as the intensity source instead of `rates`.
    pub model: Option<PathBuf>,
    /// Standard deviation of attribute noise; 0 keeps attributes constant.
    pub attr_noise: f64,
    /// Attribute value of newly added entities.
    pub attr_value: f64,
    pub seed: u64,
    pub max_events: Option<usize>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            horizon: 100.0,
            universe: 6,
            initial_nodes: 3,
            initial_edges: vec![[0, 1]],
            node_attr_dim: 2,
            edge_attr_dim: 1,
            rates: [0.02, 0.02, 0.05, 0.05, 0.3, 0.2],
            model: None,
            attr_noise: 0.1,
            attr_value: 0.0,
            seed: 0,
            max_events: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub simulate: Option<SimulateSection>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| FdgnnError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}
