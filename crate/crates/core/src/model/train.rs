// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{projected_decision, TaskSpec};

use super::{loss_and_gradient, MetricsRecord, ModelConfig, ModelParams, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 4000,
            learning_rate: 0.05,
            momentum: 0.9,
            log_every: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f64>,
    /// Optimizer steps taken before every task reached 100% accuracy.
    pub steps: usize,
    pub metrics: Vec<MetricsRecord>,
}

/// Fraction of the task domain where the projected decision equals the
/// reference program.
pub fn candidate_accuracy(net: &Network<f64>, task: &TaskSpec) -> Result<f64> {
    let domain = task.generate_domain();
    let mut hits = 0usize;
    for x in &domain {
        let logits = net.forward(x)?.logits;
        let d = projected_decision(&logits.restrict(&task.candidates), &task.candidates);
        if d == task.reference_program(x)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / domain.len() as f64)
}

/// Full-batch gradient descent with heavy-ball momentum on the union of all
/// task domains, stopping as soon as every task is solved exactly.
pub fn train(config: &ModelConfig, tasks: &[TaskSpec], tc: &TrainConfig) -> Result<TrainOutcome> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("train: no tasks"));
    }
    if tc.learning_rate.is_nan() || tc.learning_rate <= 0.0 || !(0.0..1.0).contains(&tc.momentum) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive and momentum in [0, 1), got {} / {}",
            tc.learning_rate, tc.momentum
        )));
    }
    let mut batch = Vec::new();
    for task in tasks {
        for x in task.generate_domain() {
            let y = task.reference_program(&x)?;
            batch.push((x, y));
        }
    }
    let mut net: Network<f64> = Network::from_f64(config, &ModelParams::init(config))?;
    let mut velocity = vec![0.0; net.params.len()];
    let mut metrics = Vec::new();
    let log_every = tc.log_every.max(1);

    for step in 0..=tc.max_steps {
        let (loss, grads) = loss_and_gradient(&net, &batch)?;
        let mut accuracy = BTreeMap::new();
        for task in tasks {
            accuracy.insert(task.name.as_str().to_string(), candidate_accuracy(&net, task)?);
        }
        let solved = accuracy.values().all(|&a| a == 1.0);
        if solved || step % log_every == 0 || step == tc.max_steps {
            metrics.push(MetricsRecord {
                step,
                loss,
                accuracy: accuracy.clone(),
            });
        }
        if solved {
            return Ok(TrainOutcome {
                params: net.params,
                steps: step,
                metrics,
            });
        }
        if step == tc.max_steps {
            let report = accuracy
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::TrainingBudgetExhausted {
                steps: tc.max_steps,
                report,
            });
        }
        let g = grads.flatten();
        let mut flat = net.params.flatten();
        for ((w, v), gi) in flat.iter_mut().zip(velocity.iter_mut()).zip(&g) {
            *v = tc.momentum * *v + gi;
            *w -= tc.learning_rate * *v;
        }
        let mut offset = 0;
        for t in net.params.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        if !net.params.all_finite() {
            return Err(Error::TrainingBudgetExhausted {
                steps: step + 1,
                report: "parameters diverged to non-finite values".into(),
            });
        }
    }
    unreachable!("loop returns at max_steps")
}
