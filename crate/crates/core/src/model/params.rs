// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scalar::{Matrix, Scalar};

use super::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<S> {
    pub wq: Matrix<S>,
    pub bq: Vec<S>,
    pub wk: Matrix<S>,
    pub bk: Vec<S>,
    pub wv: Matrix<S>,
    pub bv: Vec<S>,
    /// `dh × d`.
    pub wo: Matrix<S>,
    pub bo: Vec<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<S> {
    /// Shared by every head of the layer; each head normalises its own input.
    pub attn_norm: NormParams<S>,
    pub heads: Vec<HeadParams<S>>,
    pub mlp_norm: NormParams<S>,
    pub w1: Matrix<S>,
    pub b1: Vec<S>,
    pub w2: Matrix<S>,
    pub b2: Vec<S>,
}

/// All weights. The token embedding doubles as the unembedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    pub tok_emb: Matrix<S>,
    pub pos_emb: Matrix<S>,
    pub layers: Vec<LayerParams<S>>,
    pub final_norm: NormParams<S>,
}

impl<S: Scalar> NormParams<S> {
    fn identity(d: usize) -> Self {
        Self {
            gamma: vec![S::one(); d],
            beta: vec![S::zero(); d],
        }
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros_like(cfg: &ModelConfig) -> Self {
        let d = cfg.width;
        let dh = cfg.head_dim();
        let h = cfg.mlp_hidden;
        let zero_norm = || NormParams {
            gamma: vec![S::zero(); d],
            beta: vec![S::zero(); d],
        };
        let head = || HeadParams {
            wq: Matrix::zeros(d, dh),
            bq: vec![S::zero(); dh],
            wk: Matrix::zeros(d, dh),
            bk: vec![S::zero(); dh],
            wv: Matrix::zeros(d, dh),
            bv: vec![S::zero(); dh],
            wo: Matrix::zeros(dh, d),
            bo: vec![S::zero(); d],
        };
        Self {
            tok_emb: Matrix::zeros(cfg.vocab_size, d),
            pos_emb: Matrix::zeros(cfg.max_len, d),
            layers: (0..cfg.layers)
                .map(|_| LayerParams {
                    attn_norm: zero_norm(),
                    heads: (0..cfg.heads).map(|_| head()).collect(),
                    mlp_norm: zero_norm(),
                    w1: Matrix::zeros(d, h),
                    b1: vec![S::zero(); h],
                    w2: Matrix::zeros(h, d),
                    b2: vec![S::zero(); d],
                })
                .collect(),
            final_norm: zero_norm(),
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[S])> {
        let mut out: Vec<(String, &[S])> = vec![
            ("tok_emb".into(), &self.tok_emb.data[..]),
            ("pos_emb".into(), &self.pos_emb.data[..]),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.attn_norm.gamma"), &layer.attn_norm.gamma));
            out.push((format!("layers.{l}.attn_norm.beta"), &layer.attn_norm.beta));
            for (h, head) in layer.heads.iter().enumerate() {
                let p = format!("layers.{l}.heads.{h}");
                out.push((format!("{p}.wq"), &head.wq.data));
                out.push((format!("{p}.bq"), &head.bq));
                out.push((format!("{p}.wk"), &head.wk.data));
                out.push((format!("{p}.bk"), &head.bk));
                out.push((format!("{p}.wv"), &head.wv.data));
                out.push((format!("{p}.bv"), &head.bv));
                out.push((format!("{p}.wo"), &head.wo.data));
                out.push((format!("{p}.bo"), &head.bo));
            }
            out.push((format!("layers.{l}.mlp_norm.gamma"), &layer.mlp_norm.gamma));
            out.push((format!("layers.{l}.mlp_norm.beta"), &layer.mlp_norm.beta));
            out.push((format!("layers.{l}.w1"), &layer.w1.data));
            out.push((format!("layers.{l}.b1"), &layer.b1));
            out.push((format!("layers.{l}.w2"), &layer.w2.data));
            out.push((format!("layers.{l}.b2"), &layer.b2));
        }
        out.push(("final_norm.gamma".into(), &self.final_norm.gamma));
        out.push(("final_norm.beta".into(), &self.final_norm.beta));
        out
    }

    /// Same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<S>> {
        let mut out: Vec<&mut Vec<S>> = vec![&mut self.tok_emb.data, &mut self.pos_emb.data];
        for layer in &mut self.layers {
            out.push(&mut layer.attn_norm.gamma);
            out.push(&mut layer.attn_norm.beta);
            for head in &mut layer.heads {
                out.push(&mut head.wq.data);
                out.push(&mut head.bq);
                out.push(&mut head.wk.data);
                out.push(&mut head.bk);
                out.push(&mut head.wv.data);
                out.push(&mut head.bv);
                out.push(&mut head.wo.data);
                out.push(&mut head.bo);
            }
            out.push(&mut layer.mlp_norm.gamma);
            out.push(&mut layer.mlp_norm.beta);
            out.push(&mut layer.w1.data);
            out.push(&mut layer.b1);
            out.push(&mut layer.w2.data);
            out.push(&mut layer.b2);
        }
        out.push(&mut self.final_norm.gamma);
        out.push(&mut self.final_norm.beta);
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<S> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().cloned()).collect()
    }

    pub fn get_flat(&self, index: usize) -> &S {
        let mut i = index;
        for (_, t) in self.tensors() {
            if i < t.len() {
                return &t[i];
            }
            i -= t.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_flat(&mut self, index: usize, value: S) {
        let mut i = index;
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> ModelParams<T> {
        let vmap = |v: &Vec<S>| v.iter().map(&f).collect::<Vec<T>>();
        let norm = |n: &NormParams<S>| NormParams {
            gamma: vmap(&n.gamma),
            beta: vmap(&n.beta),
        };
        ModelParams {
            tok_emb: self.tok_emb.map(&f),
            pos_emb: self.pos_emb.map(&f),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_norm: norm(&l.attn_norm),
                    heads: l
                        .heads
                        .iter()
                        .map(|h| HeadParams {
                            wq: h.wq.map(&f),
                            bq: vmap(&h.bq),
                            wk: h.wk.map(&f),
                            bk: vmap(&h.bk),
                            wv: h.wv.map(&f),
                            bv: vmap(&h.bv),
                            wo: h.wo.map(&f),
                            bo: vmap(&h.bo),
                        })
                        .collect(),
                    mlp_norm: norm(&l.mlp_norm),
                    w1: l.w1.map(&f),
                    b1: vmap(&l.b1),
                    w2: l.w2.map(&f),
                    b2: vmap(&l.b2),
                })
                .collect(),
            final_norm: norm(&self.final_norm),
        }
    }
}

impl ModelParams<f64> {
    /// Embeddings `N(0, 1/4)`, projections `N(0, 1/fan_in)`, zero biases,
    /// identity norms.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut normal = |std: f64, n: usize| -> Vec<f64> {
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        let mut p = Self::zeros_like(cfg);
        p.tok_emb.data = normal(0.5, p.tok_emb.data.len());
        p.pos_emb.data = normal(0.5, p.pos_emb.data.len());
        for layer in &mut p.layers {
            layer.attn_norm = NormParams::identity(cfg.width);
            for head in &mut layer.heads {
                for w in [&mut head.wq, &mut head.wk, &mut head.wv, &mut head.wo] {
                    w.data = normal(1.0 / (w.rows as f64).sqrt(), w.data.len());
                }
            }
            layer.mlp_norm = NormParams::identity(cfg.width);
            for w in [&mut layer.w1, &mut layer.w2] {
                w.data = normal(1.0 / (w.rows as f64).sqrt(), w.data.len());
            }
        }
        p.final_norm = NormParams::identity(cfg.width);
        p
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_accessors_agree_with_tensor_order() {
        let cfg = ModelConfig::default();
        let mut p = ModelParams::init(&cfg);
        let flat = p.flatten();
        assert_eq!(*p.get_flat(700), flat[700]);
        p.set_flat(700, 42.0);
        assert_eq!(p.flatten()[700], 42.0);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), p.tensors_mut().len());
        assert_eq!(names[0], "tok_emb");
        assert_eq!(names.last().unwrap(), "final_norm.beta");
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::default();
        assert_eq!(ModelParams::init(&cfg), ModelParams::init(&cfg));
        let other = ModelConfig { seed: 1, ..cfg.clone() };
        assert_ne!(ModelParams::init(&cfg), ModelParams::init(&other));
    }
}
