// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal attention with sparsemax weights.
//!
//! Row `i` projects the scaled scores `q_i·k_j · scale` for `j ≤ i` onto the
//! simplex over exactly those positions; future positions are not part of
//! the projection domain at all.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::sparsemax::{sparsemax, sparsemax_vjp, SparsemaxBranch};

#[derive(Clone, Debug)]
pub struct AttentionOutput<S> {
    pub output: Vec<Vec<S>>,
    /// Row `i` has length `i + 1`.
    pub weights: Vec<Vec<S>>,
    pub branches: Vec<SparsemaxBranch>,
}

pub fn causal_sparsemax_attention<S: Scalar>(
    q: &[Vec<S>],
    k: &[Vec<S>],
    v: &[Vec<S>],
    scale: &S,
) -> Result<AttentionOutput<S>> {
    let n = q.len();
    if n == 0 {
        return Err(Error::EmptyInput("attention"));
    }
    if k.len() != n || v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "attention expects equal sequence lengths, got q={n} k={} v={}",
            k.len(),
            v.len()
        )));
    }
    let dk = q[0].len();
    let dv = v[0].len();
    if q.iter().chain(k).any(|r| r.len() != dk) || v.iter().any(|r| r.len() != dv) {
        return Err(Error::ShapeMismatch("attention rows have inconsistent widths".into()));
    }

    let mut output = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut branches = Vec::with_capacity(n);
    for i in 0..n {
        let (o, a, branch) = attention_row(&q[i], &k[..=i], &v[..=i], scale)?;
        output.push(o);
        weights.push(a);
        branches.push(branch);
    }
    Ok(AttentionOutput {
        output,
        weights,
        branches,
    })
}

/// One query row attending over `k`/`v` (all visible positions).
pub fn attention_row<S: Scalar>(
    q: &[S],
    k: &[Vec<S>],
    v: &[Vec<S>],
    scale: &S,
) -> Result<(Vec<S>, Vec<S>, SparsemaxBranch)> {
    if k.is_empty() || k.len() != v.len() {
        return Err(Error::ShapeMismatch(format!("attention row over {} keys and {} values", k.len(), v.len())));
    }
    let dv = v[0].len();
    let scores: Vec<S> = k.iter().map(|kj| S::dot(q, kj) * scale.clone()).collect();
    let (a, branch) = sparsemax(&scores)?;
    let o = (0..dv)
        .map(|c| {
            let column: Vec<S> = v.iter().map(|r| r[c].clone()).collect();
            S::dot(&a, &column)
        })
        .collect();
    Ok((o, a, branch))
}

pub struct AttentionGrads {
    pub q: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

pub fn attention_vjp(
    grad_out: &[Vec<f64>],
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    forward: &AttentionOutput<f64>,
    scale: f64,
) -> AttentionGrads {
    let n = q.len();
    let dk = q[0].len();
    let dv = v[0].len();
    let mut gq = vec![vec![0.0; dk]; n];
    let mut gk = vec![vec![0.0; dk]; n];
    let mut gv = vec![vec![0.0; dv]; n];
    for i in 0..n {
        let a = &forward.weights[i];
        let mut ga = vec![0.0; i + 1];
        for j in 0..=i {
            ga[j] = grad_out[i].iter().zip(&v[j]).map(|(g, x)| g * x).sum();
            for c in 0..dv {
                gv[j][c] += a[j] * grad_out[i][c];
            }
        }
        let gs = sparsemax_vjp(&ga, &forward.branches[i]);
        for j in 0..=i {
            if gs[j] == 0.0 {
                continue;
            }
            let w = gs[j] * scale;
            for c in 0..dk {
                gq[i][c] += w * k[j][c];
                gk[j][c] += w * q[i][c];
            }
        }
    }
    AttentionGrads { q: gq, k: gk, v: gv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactScalar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_position_copies_value() {
        let v = vec![vec![ExactScalar::ratio(3, 2), ExactScalar::from_integer(-1)]];
        let q = vec![vec![ExactScalar::from_integer(5)]];
        let out = causal_sparsemax_attention(&q, &q, &v, &ExactScalar::one()).unwrap();
        assert_eq!(out.weights[0], vec![ExactScalar::one()]);
        assert_eq!(out.output[0], v[0]);
    }

    #[test]
    fn equal_scores_average_values() {
        let q = vec![vec![1.0], vec![0.0]];
        let k = vec![vec![1.0], vec![1.0]];
        let v = vec![vec![2.0, 0.0], vec![0.0, 4.0]];
        let out = causal_sparsemax_attention(&q, &k, &v, &1.0).unwrap();
        assert_eq!(out.weights[1], vec![0.5, 0.5]);
        assert_eq!(out.output[1], vec![1.0, 2.0]);
    }

    #[test]
    fn large_gap_is_one_hot() {
        // Two-element sparsemax is one-hot once the gap reaches 1.
        let q = vec![vec![0.0], vec![1.0]];
        let k = vec![vec![0.0], vec![2.0]];
        let v = vec![vec![1.0], vec![7.0]];
        let out = causal_sparsemax_attention(&q, &k, &v, &0.5).unwrap();
        assert_eq!(out.weights[1], vec![0.0, 1.0]);
        assert_eq!(out.output[1], vec![7.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let q = vec![vec![1.0], vec![1.0]];
        let k = vec![vec![1.0]];
        assert!(causal_sparsemax_attention(&q, &k, &q, &1.0).is_err());
        let k2 = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(causal_sparsemax_attention(&q, &k2, &q, &1.0).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut checked = 0;
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            let mut rand_mat = |w: usize| -> Vec<Vec<f64>> {
                (0..n).map(|_| (0..w).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
            };
            let q = rand_mat(3);
            let k = rand_mat(3);
            let v = rand_mat(2);
            let g = rand_mat(2);
            let scale = 0.7;
            let fwd = causal_sparsemax_attention(&q, &k, &v, &scale).unwrap();
            let grads = attention_vjp(&g, &q, &k, &v, &fwd, scale);
            let loss = |q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>]| -> Option<f64> {
                let o = causal_sparsemax_attention(q, k, v, &scale).unwrap();
                if o.branches != fwd.branches {
                    return None;
                }
                Some(o.output.iter().flatten().zip(g.iter().flatten()).map(|(a, b)| a * b).sum())
            };
            let h = 1e-6;
            let mut ok = true;
            let mut errs = Vec::new();
            for which in 0..3 {
                for i in 0..n {
                    let width = if which == 2 { 2 } else { 3 };
                    for c in 0..width {
                        let (mut qp, mut kp, mut vp) = (q.clone(), k.clone(), v.clone());
                        let (mut qm, mut km, mut vm) = (q.clone(), k.clone(), v.clone());
                        let analytic = match which {
                            0 => { qp[i][c] += h; qm[i][c] -= h; grads.q[i][c] }
                            1 => { kp[i][c] += h; km[i][c] -= h; grads.k[i][c] }
                            _ => { vp[i][c] += h; vm[i][c] -= h; grads.v[i][c] }
                        };
                        match (loss(&qp, &kp, &vp), loss(&qm, &km, &vm)) {
                            (Some(lp), Some(lm)) => {
                                let fd = (lp - lm) / (2.0 * h);
                                let denom = fd.abs().max(analytic.abs()).max(1e-3);
                                errs.push((fd - analytic).abs() / denom);
                            }
                            _ => ok = false,
                        }
                    }
                }
            }
            if ok {
                checked += 1;
                assert!(errs.iter().all(|e| *e < 1e-4), "{errs:?}");
            }
        }
        assert!(checked > 100);
    }
}
