// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::float_to_exact;

use super::{ModelConfig, ModelParams, TrainConfig};

/// One line of the training metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: BTreeMap<String, f64>,
}

/// On-disk model: every parameter is the exact decimal expansion of its
/// float value, so loading reproduces the bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub train: TrainConfig,
    pub steps: usize,
    pub params: BTreeMap<String, Vec<String>>,
}

impl Checkpoint {
    pub fn new(config: &ModelConfig, train: &TrainConfig, steps: usize, params: &ModelParams<f64>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (name, values) in params.tensors() {
            let encoded = values
                .iter()
                .map(|v| {
                    float_to_exact(*v)
                        .map(|e| e.to_exact_decimal().expect("dyadic rationals have finite decimals"))
                })
                .collect::<Result<Vec<_>>>()?;
            out.insert(name, encoded);
        }
        Ok(Self {
            config: config.clone(),
            seed: config.seed,
            train: train.clone(),
            steps,
            params: out,
        })
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        self.config.validate()?;
        let mut p = ModelParams::zeros_like(&self.config);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(p.tensors_mut()) {
            let values = self
                .params
                .get(name)
                .ok_or_else(|| Error::Parse(format!("checkpoint lacks tensor {name}")))?;
            if values.len() != slot.len() {
                return Err(Error::Parse(format!(
                    "tensor {name} has {} values, expected {}",
                    values.len(),
                    slot.len()
                )));
            }
            for (s, v) in slot.iter_mut().zip(values) {
                *s = v
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{name}: {v:?}: {e}")))?;
            }
        }
        Ok(p)
    }
}
