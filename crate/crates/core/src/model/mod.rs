// SPDX-License-Identifier: MIT OR Apache-2.0

//! The decoder-only model, its gradients and training loop.
//!
//! One forward implementation serves the full model and every ablated
//! circuit: it is parametrised by the set of retained residual edges, and
//! the full model is the circuit with every edge kept.

mod backward;
mod checkpoint;
mod forward;
mod params;
mod train;

pub use backward::{backward, loss_and_gradient};
pub use checkpoint::{Checkpoint, MetricsRecord};
pub use forward::{BranchSignature, HeadTrace, MlpTrace, Network, NodeTrace, Trace};
pub use params::{HeadParams, LayerParams, ModelParams, NormParams};
pub use train::{candidate_accuracy, train, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::ops::OpConfig;
use crate::tasks::VOCAB_SIZE;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub max_len: usize,
    pub ops: OpConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            width: 16,
            layers: 2,
            heads: 1,
            mlp_hidden: 32,
            max_len: 8,
            ops: OpConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size != VOCAB_SIZE {
            return Err(Error::InvalidConfig(format!(
                "vocab_size must be {VOCAB_SIZE}, got {}",
                self.vocab_size
            )));
        }
        if self.width < 2 || self.layers == 0 || self.heads == 0 || self.mlp_hidden == 0 || self.max_len == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive (width ≥ 2)".into()));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        self.ops.validate(self.width)
    }

    /// Attention score scale `1/√dh`, exact when `dh` is a perfect square.
    pub fn attention_scale(&self) -> ExactScalar {
        let dh = self.head_dim() as i64;
        let root = (dh as f64).sqrt().round() as i64;
        if root * root == dh {
            ExactScalar::ratio(1, root)
        } else {
            crate::exact::float_to_exact(1.0 / (dh as f64).sqrt()).expect("finite scale")
        }
    }

    pub fn parameter_count(&self) -> usize {
        let d = self.width;
        let dh = self.head_dim();
        let h = self.mlp_hidden;
        let norm = 2 * d;
        let head = 3 * (d * dh + dh) + dh * d + d;
        let layer = norm + self.heads * head + norm + (d * h + h) + (h * d + d);
        self.vocab_size * d + self.max_len * d + self.layers * layer + norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_near_eight_thousand_parameters() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        let n = cfg.parameter_count();
        assert!((4_000..=16_000).contains(&n), "{n}");
        assert_eq!(n, ModelParams::<f64>::init(&cfg).len());
    }

    #[test]
    fn perfect_square_head_dim_gives_exact_scale() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.attention_scale(), ExactScalar::ratio(1, 4));
        let odd = ModelConfig {
            width: 12,
            heads: 1,
            ..ModelConfig::default()
        };
        assert!((odd.attention_scale().to_f64() - 1.0 / 12f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_wrong_vocab_and_bad_heads() {
        let cfg = ModelConfig {
            vocab_size: 31,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
