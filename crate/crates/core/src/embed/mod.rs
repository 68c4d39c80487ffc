//! Relation graph construction and node2vec-style embeddings: second-order
//! biased random walks fed to skip-gram with negative sampling.

mod alias;
mod graph;
mod model;
mod sgns;
mod walk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alias::AliasTable;
pub use graph::{build_graph, RelationGraph};
pub use model::{EmbeddingModel, ModelFormatError};
pub use sgns::{pair_gradients, pair_loss, sgd_pair_step, train_embeddings, train_with_history, PairGradients, TrainingHistory};
pub use walk::{generate_walks, step_distribution, WalkSampler};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no walks to train on")]
    NoWalks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
    /// Above this many Σ degree² entries, per-edge alias tables are replaced
    /// by rejection sampling.
    pub alias_budget: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            p: 0.25,
            q: 0.25,
            walk_length: 80,
            walks_per_node: 18,
            seed: 42,
            alias_budget: 20_000_000,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.p > 0.0 && self.q > 0.0 && self.p.is_finite() && self.q.is_finite()) {
            return Err(EmbedError::Config("p and q must be positive".into()));
        }
        if self.walk_length == 0 || self.walks_per_node == 0 {
            return Err(EmbedError::Config("walk_length and walks_per_node must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnsConfig {
    pub dimension: usize,
    /// Maximum context distance on each side; the effective window is drawn
    /// uniformly from `1..=window` for every center.
    pub window: usize,
    pub epochs: usize,
    pub negative_samples: usize,
    pub initial_lr: f32,
    pub min_lr: f32,
    pub seed: u64,
    /// 1 trains deterministically; more workers update shared parameters
    /// without locks and are not reproducible run to run.
    pub workers: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dimension: 128,
            window: 16,
            epochs: 10,
            negative_samples: 5,
            initial_lr: 0.025,
            min_lr: 1e-4,
            seed: 42,
            workers: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension == 0 || self.epochs == 0 || self.window == 0 || self.workers == 0 {
            return Err(EmbedError::Config(
                "dimension, window, epochs and workers must be positive".into(),
            ));
        }
        if !(self.initial_lr > 0.0 && self.min_lr > 0.0) {
            return Err(EmbedError::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Walks plus training in one call.
pub fn embed_graph(graph: &RelationGraph, walk: &WalkConfig, sgns: &SgnsConfig) -> Result<EmbeddingModel, EmbedError> {
    let walks = generate_walks(graph, walk)?;
    train_embeddings(&walks, graph.node_ids(), sgns)
}

pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 folded over the parts
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
