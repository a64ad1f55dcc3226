// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{float_to_exact, ExactScalar};
use crate::ops::{leaky_relu, OpConfig};
use crate::scalar::{Matrix, Scalar};
use crate::tasks::projected_decision;

use super::teacher::TeacherRelation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 0.2,
            momentum: 0.9,
            max_steps: 5000,
            seed: 0,
        }
    }
}

/// One-hidden-layer leaky MLP over the one-hot encoding of an abstract
/// sequence, with one logit per candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate<S> {
    pub alphabet_size: usize,
    pub seq_len: usize,
    pub candidates: [u32; 2],
    /// `(seq_len · alphabet_size) × hidden`.
    pub w1: Matrix<S>,
    pub b1: Vec<S>,
    /// `hidden × 2`.
    pub w2: Matrix<S>,
    pub b2: Vec<S>,
    pub slope: S,
}

impl<S: Scalar> Surrogate<S> {
    fn one_hot_rows(&self, x: &[u8]) -> Vec<usize> {
        x.iter()
            .enumerate()
            .map(|(p, &a)| p * self.alphabet_size + a as usize)
            .collect()
    }

    fn hidden_pre(&self, x: &[u8]) -> Vec<S> {
        let mut pre = self.b1.clone();
        for r in self.one_hot_rows(x) {
            for (h, w) in pre.iter_mut().zip(self.w1.row(r)) {
                S::add_acc(h, w);
            }
        }
        pre
    }

    pub fn logits(&self, x: &[u8]) -> Vec<S> {
        let h: Vec<S> = self.hidden_pre(x).iter().map(|v| leaky_relu(v, &self.slope)).collect();
        let mut out = self.w2.left_mul(&h);
        for (o, b) in out.iter_mut().zip(&self.b2) {
            S::add_acc(o, b);
        }
        out
    }

    pub fn decide(&self, x: &[u8]) -> u32 {
        projected_decision(&self.logits(x), &self.candidates)
    }
}

impl Surrogate<f64> {
    pub fn to_exact(&self) -> Result<Surrogate<ExactScalar>> {
        let conv = |v: &[f64]| v.iter().map(|x| float_to_exact(*x)).collect::<Result<Vec<_>>>();
        Ok(Surrogate {
            alphabet_size: self.alphabet_size,
            seq_len: self.seq_len,
            candidates: self.candidates,
            w1: Matrix {
                rows: self.w1.rows,
                cols: self.w1.cols,
                data: conv(&self.w1.data)?,
            },
            b1: conv(&self.b1)?,
            w2: Matrix {
                rows: self.w2.rows,
                cols: self.w2.cols,
                data: conv(&self.w2.data)?,
            },
            b2: conv(&self.b2)?,
            slope: OpConfig::default().leaky_slope,
        })
    }

    fn init(teacher: &TeacherRelation, config: &SurrogateConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let inputs = teacher.seq_len * teacher.alphabet.len();
        let mut sample = |rows: usize, cols: usize| {
            let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid std");
            Matrix {
                rows,
                cols,
                data: (0..rows * cols).map(|_| normal.sample(&mut rng)).collect(),
            }
        };
        let w1 = sample(inputs, config.hidden);
        let w2 = sample(config.hidden, 2);
        Self {
            alphabet_size: teacher.alphabet.len(),
            seq_len: teacher.seq_len,
            candidates: teacher.candidates,
            w1,
            b1: vec![0.0; config.hidden],
            w2,
            b2: vec![0.0; 2],
            slope: OpConfig::default().leaky_slope.to_f64(),
        }
    }

    fn flat_len(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }

    fn apply(&mut self, step: &[f64]) {
        let params = self
            .w1
            .data
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.data.iter_mut())
            .chain(self.b2.iter_mut());
        for (p, s) in params.zip(step) {
            *p -= s;
        }
    }

    /// Mean cross-entropy over the candidates and its gradient, flattened in
    /// `w1, b1, w2, b2` order.
    fn loss_and_gradient(&self, teacher: &TeacherRelation) -> (f64, Vec<f64>) {
        let hidden = self.b1.len();
        let mut gw1 = Matrix::<f64>::zeros(self.w1.rows, hidden);
        let mut gb1 = vec![0.0; hidden];
        let mut gw2 = Matrix::<f64>::zeros(hidden, 2);
        let mut gb2 = vec![0.0; 2];
        let n = teacher.inputs.len() as f64;
        let mut loss = 0.0;
        for (x, y) in teacher.inputs.iter().zip(&teacher.outputs) {
            let target = teacher.candidates.iter().position(|c| c == y).expect("candidate");
            let pre = self.hidden_pre(x);
            let h: Vec<f64> = pre.iter().map(|v| leaky_relu(v, &self.slope)).collect();
            let logits = self.logits(x);
            let m = logits[0].max(logits[1]);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            let p: Vec<f64> = logits.iter().map(|l| (l - m).exp() / z).collect();
            loss -= p[target].ln() / n;
            let g: Vec<f64> = (0..2).map(|k| (p[k] - if k == target { 1.0 } else { 0.0 }) / n).collect();
            for k in 0..2 {
                gb2[k] += g[k];
            }
            let gh = self.w2.backprop_left_mul(&h, &g, &mut gw2);
            let gpre: Vec<f64> = gh
                .iter()
                .zip(&pre)
                .map(|(g, v)| if *v >= 0.0 { *g } else { self.slope * g })
                .collect();
            for (b, g) in gb1.iter_mut().zip(&gpre) {
                *b += g;
            }
            for r in self.one_hot_rows(x) {
                for (w, g) in gw1.data[r * hidden..(r + 1) * hidden].iter_mut().zip(&gpre) {
                    *w += g;
                }
            }
        }
        let grad = gw1.data.into_iter().chain(gb1).chain(gw2.data).chain(gb2).collect();
        (loss, grad)
    }

    fn disagreements(&self, teacher: &TeacherRelation) -> usize {
        teacher
            .inputs
            .iter()
            .zip(&teacher.outputs)
            .filter(|(x, y)| self.decide(x) != **y)
            .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFit {
    pub surrogate: Surrogate<f64>,
    pub steps: usize,
    pub final_loss: f64,
}

/// Full-batch gradient descent with momentum until the float surrogate
/// agrees with the teacher on every input.
pub fn fit_surrogate(teacher: &TeacherRelation, config: &SurrogateConfig) -> Result<SurrogateFit> {
    teacher.validate()?;
    if config.hidden == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::InvalidConfig(format!("bad surrogate config {config:?}")));
    }
    let mut s = Surrogate::init(teacher, config);
    let mut velocity = vec![0.0; s.flat_len()];
    let mut last_loss = f64::INFINITY;
    for step in 0..=config.max_steps {
        if s.disagreements(teacher) == 0 {
            return Ok(SurrogateFit {
                surrogate: s,
                steps: step,
                final_loss: last_loss,
            });
        }
        if step == config.max_steps {
            break;
        }
        let (loss, grad) = s.loss_and_gradient(teacher);
        last_loss = loss;
        for (v, g) in velocity.iter_mut().zip(&grad) {
            *v = config.momentum * *v + config.learning_rate * g;
        }
        s.apply(&velocity);
    }
    Err(Error::FitBudgetExhausted {
        steps: config.max_steps,
        disagreements: s.disagreements(teacher),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub agree: usize,
    pub total: usize,
    /// Domain indices where the exact surrogate differs from the teacher.
    pub disagreements: Vec<usize>,
}

impl Agreement {
    pub fn is_total(&self) -> bool {
        self.agree == self.total
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.agree as f64 / self.total as f64
    }
}

/// Exhaustive exact-mode check of the surrogate against the teacher.
pub fn validate_surrogate(surrogate: &Surrogate<ExactScalar>, teacher: &TeacherRelation) -> Agreement {
    let disagreements: Vec<usize> = teacher
        .inputs
        .iter()
        .zip(&teacher.outputs)
        .enumerate()
        .filter(|(_, (x, y))| surrogate.decide(x) != **y)
        .map(|(i, _)| i)
        .collect();
    Agreement {
        agree: teacher.inputs.len() - disagreements.len(),
        total: teacher.inputs.len(),
        disagreements,
    }
}
