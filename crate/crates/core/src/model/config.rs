use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    /// One-hop neighbors kept per session-graph node, most recent first.
    pub max_neighbors: usize,
    /// Memory slots per attribute type.
    pub max_patterns: usize,
    pub num_buckets: usize,
    pub max_distance: usize,
    /// Dropout between modules.
    pub dropout: f64,
    /// Dropout on attention probabilities.
    pub attention_dropout: f64,
    pub max_len: usize,
    pub ffn_mult: usize,
    pub leaky_slope: f64,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 100,
            heads: 4,
            max_neighbors: 12,
            max_patterns: 12,
            num_buckets: 32,
            max_distance: 128,
            dropout: 0.0,
            attention_dropout: 0.2,
            max_len: crate::sessions::DEFAULT_MAX_LEN,
            ffn_mult: 4,
            leaky_slope: 0.01,
            layer_norm_eps: 1e-12,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d", self.d),
            ("heads", self.heads),
            ("max_neighbors", self.max_neighbors),
            ("max_patterns", self.max_patterns),
            ("num_buckets", self.num_buckets),
            ("max_distance", self.max_distance),
            ("max_len", self.max_len),
            ("ffn_mult", self.ffn_mult),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model.d = {} is not divisible by model.heads = {}",
                self.d, self.heads
            )));
        }
        if self.num_buckets < 2 || self.max_distance <= self.num_buckets / 2 {
            return Err(Error::Config(
                "model.max_distance must exceed half of model.num_buckets".into(),
            ));
        }
        for (name, p) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("model.{name} = {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

/// T5-style unidirectional bucket for a query that is `distance` positions
/// after its key: exact buckets for the first half, log-spaced beyond, the
/// last bucket absorbing everything past `max_distance`.
pub fn relative_bucket(distance: usize, num_buckets: usize, max_distance: usize) -> usize {
    let max_exact = num_buckets / 2;
    if distance < max_exact {
        return distance;
    }
    let ratio = (distance as f64 / max_exact as f64).ln() / (max_distance as f64 / max_exact as f64).ln();
    let bucket = max_exact + (ratio * (num_buckets - max_exact) as f64) as usize;
    bucket.min(num_buckets - 1)
}
