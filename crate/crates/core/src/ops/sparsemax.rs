// SPDX-License-Identifier: MIT OR Apache-2.0

//! Euclidean projection onto the probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Matrix, Scalar};

/// Linear region of a sparsemax evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsemaxBranch {
    /// Indices with strictly positive output, ascending.
    pub support: Vec<usize>,
}

/// The threshold τ with `Σ max(s_i − τ, 0) = 1`.
///
/// Coordinates are visited in descending score order; exact ties keep index
/// order so the support size is reproducible.
pub fn sparsemax_threshold<S: Scalar>(scores: &[S]) -> Result<S> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("sparsemax"));
    }
    if scores.iter().any(|s| !s.to_f64().is_finite()) {
        return Err(Error::NonFinite(f64::NAN));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut cumsum = S::zero();
    let mut best_sum = S::zero();
    let mut best_k = 0usize;
    for (j, &idx) in order.iter().enumerate() {
        S::add_acc(&mut cumsum, &scores[idx]);
        let k = S::from_int(j as i64 + 1);
        if S::one() + k * scores[idx].clone() > cumsum {
            best_k = j + 1;
            best_sum = cumsum.clone();
        }
    }
    // The top-ranked coordinate always satisfies the condition.
    debug_assert!(best_k >= 1);
    Ok((best_sum - S::one()) / S::from_int(best_k as i64))
}

/// `p_i = max(s_i − τ, 0)`; coordinates exactly at the threshold map to zero.
pub fn sparsemax<S: Scalar>(scores: &[S]) -> Result<(Vec<S>, SparsemaxBranch)> {
    let tau = sparsemax_threshold(scores)?;
    let mut support = Vec::new();
    let probs = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let shifted = s.clone() - tau.clone();
            if shifted.is_positive() {
                support.push(i);
                shifted
            } else {
                S::zero()
            }
        })
        .collect();
    Ok((probs, SparsemaxBranch { support }))
}

/// `J_ij = [i∈S][j∈S](δ_ij − 1/|S|)` for the recorded support `S`.
pub fn sparsemax_jacobian<S: Scalar>(m: usize, branch: &SparsemaxBranch) -> Matrix<S> {
    let mut jac = Matrix::zeros(m, m);
    let size = S::from_int(branch.support.len() as i64);
    let inv = S::one() / size;
    for &i in &branch.support {
        for &j in &branch.support {
            let delta = if i == j { S::one() } else { S::zero() };
            *jac.get_mut(i, j) = delta - inv.clone();
        }
    }
    jac
}

/// `Jᵀ g` (the Jacobian is symmetric).
pub fn sparsemax_vjp(grad_out: &[f64], branch: &SparsemaxBranch) -> Vec<f64> {
    let mut grad = vec![0.0; grad_out.len()];
    if branch.support.is_empty() {
        return grad;
    }
    let mean = branch.support.iter().map(|&i| grad_out[i]).sum::<f64>() / branch.support.len() as f64;
    for &i in &branch.support {
        grad[i] = grad_out[i] - mean;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactScalar;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact(v: &[(i64, i64)]) -> Vec<ExactScalar> {
        v.iter().map(|&(n, d)| ExactScalar::ratio(n, d)).collect()
    }

    #[test]
    fn uniform_scores_give_uniform_weights() {
        let (p, b) = sparsemax(&exact(&[(1, 1), (1, 1), (1, 1)])).unwrap();
        assert_eq!(p, exact(&[(1, 3), (1, 3), (1, 3)]));
        assert_eq!(b.support, vec![0, 1, 2]);
    }

    #[test]
    fn two_element_closed_form() {
        // Two-element projection: τ = (s0 + s1 − 1)/2 when |s0 − s1| < 1.
        let s = exact(&[(1, 2), (0, 1)]);
        let tau_oracle = (s[0].clone() + s[1].clone() - ExactScalar::one()) / ExactScalar::from_integer(2);
        assert_eq!(tau_oracle, ExactScalar::ratio(-1, 4));
        assert_eq!(sparsemax_threshold(&s).unwrap(), tau_oracle);
        let (p, _) = sparsemax(&s).unwrap();
        assert_eq!(p, exact(&[(3, 4), (1, 4)]));
    }

    /// Brute-force minimisation of ‖p − s‖² over a simplex grid of step 1/n.
    fn grid_projection(s: &[f64], n: usize) -> Vec<f64> {
        let mut best = (f64::INFINITY, vec![]);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let p = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                let d: f64 = p.iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, p.to_vec());
                }
            }
        }
        best.1
    }

    #[test]
    fn dominant_score_is_one_hot() {
        let s = exact(&[(3, 1), (0, 1), (0, 1)]);
        assert_eq!(sparsemax_threshold(&s).unwrap(), ExactScalar::from_integer(2));
        let (p, b) = sparsemax(&s).unwrap();
        assert_eq!(p, exact(&[(1, 1), (0, 1), (0, 1)]));
        assert_eq!(b.support, vec![0]);
        assert_eq!(grid_projection(&[3.0, 0.0, 0.0], 200), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_empty_input() {
        assert!(matches!(sparsemax::<f64>(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn single_element_is_constant_one() {
        let (p, b) = sparsemax(&[-7.5]).unwrap();
        assert_eq!(p, vec![1.0]);
        let jac: Matrix<ExactScalar> = sparsemax_jacobian(1, &b);
        assert_eq!(jac.data, vec![ExactScalar::zero()]);
    }

    #[test]
    fn tie_at_threshold_is_zeroed() {
        // τ = 0: the third score sits exactly on the threshold.
        let s = exact(&[(1, 2), (1, 2), (0, 1)]);
        let (p, b) = sparsemax(&s).unwrap();
        assert_eq!(p[2], ExactScalar::zero());
        assert_eq!(b.support, vec![0, 1]);
    }

    fn finite_difference_jacobian(s: &[f64]) -> Vec<Vec<f64>> {
        let h = 1e-6;
        let m = s.len();
        let mut jac = vec![vec![0.0; m]; m];
        for j in 0..m {
            let mut plus = s.to_vec();
            let mut minus = s.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let (pp, _) = sparsemax(&plus).unwrap();
            let (pm, _) = sparsemax(&minus).unwrap();
            for i in 0..m {
                jac[i][j] = (pp[i] - pm[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn jacobian_examples_match_finite_differences() {
        // Support {0, 1} for m = 3.
        let s = [0.6, 0.3, -1.0];
        let (_, b) = sparsemax(&s).unwrap();
        assert_eq!(b.support, vec![0, 1]);
        let jac: Matrix<ExactScalar> = sparsemax_jacobian(3, &b);
        let half = ExactScalar::ratio(1, 2);
        let z = ExactScalar::zero();
        assert_eq!(
            jac.data,
            vec![half.clone(), -&half, z.clone(), -&half, half.clone(), z.clone(), z.clone(), z.clone(), z.clone()]
        );
        let fd = finite_difference_jacobian(&s);
        for i in 0..3 {
            for j in 0..3 {
                assert!((fd[i][j] - jac.get(i, j).to_f64()).abs() < 1e-6);
            }
        }

        // One-hot support {0} for m = 2: locally constant.
        let s = [2.0, 0.0];
        let (_, b) = sparsemax(&s).unwrap();
        let jac: Matrix<f64> = sparsemax_jacobian(2, &b);
        assert!(jac.data.iter().all(|v| *v == 0.0));
        let fd = finite_difference_jacobian(&s);
        assert!(fd.iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn vjp_is_jacobian_transpose_product() {
        let s = [0.2, 0.1, 0.15, -2.0];
        let (_, b) = sparsemax(&s).unwrap();
        let jac: Matrix<f64> = sparsemax_jacobian(4, &b);
        let g = [0.3, -1.0, 2.0, 0.5];
        let vjp = sparsemax_vjp(&g, &b);
        for j in 0..4 {
            let manual: f64 = (0..4).map(|i| jac.get(i, j) * g[i]).sum();
            assert!((manual - vjp[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn output_beats_random_simplex_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let m = rng.random_range(1..=6);
            let s: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (p, _) = sparsemax(&s).unwrap();
            let dist = |q: &[f64]| q.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = dist(&p);
            for _ in 0..10_000 {
                let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let total: f64 = raw.iter().sum();
                let q: Vec<f64> = raw.iter().map(|r| r / total).collect();
                assert!(best <= dist(&q) + 1e-12);
            }
        }
    }

    fn small_exact_vec(max_len: usize) -> impl Strategy<Value = Vec<ExactScalar>> {
        proptest::collection::vec((-40i64..40, 1i64..8), 1..=max_len)
            .prop_map(|v| v.into_iter().map(|(n, d)| ExactScalar::ratio(n, d)).collect())
    }

    proptest! {
        #[test]
        fn exact_output_lies_on_simplex(s in small_exact_vec(6)) {
            let (p, b) = sparsemax(&s).unwrap();
            prop_assert!(p.iter().all(|x| !x.is_negative()));
            prop_assert_eq!(p.iter().sum::<ExactScalar>(), ExactScalar::one());
            prop_assert!(!b.support.is_empty());
            let tau = sparsemax_threshold(&s).unwrap();
            for (i, (pi, si)) in p.iter().zip(&s).enumerate() {
                let expected = (si.clone() - tau.clone()).max(ExactScalar::zero());
                prop_assert_eq!(pi, &expected);
                prop_assert_eq!(b.support.contains(&i), pi.is_positive());
            }
        }

        #[test]
        fn shift_invariance_is_exact(s in small_exact_vec(6), n in -30i64..30, d in 1i64..7) {
            let c = ExactScalar::ratio(n, d);
            let shifted: Vec<_> = s.iter().map(|x| x.clone() + c.clone()).collect();
            prop_assert_eq!(sparsemax(&s).unwrap(), sparsemax(&shifted).unwrap());
        }

        #[test]
        fn affine_within_a_branch(a in small_exact_vec(5), delta in proptest::collection::vec(-3i64..3, 5)) {
            let b: Vec<ExactScalar> = a.iter().zip(&delta)
                .map(|(x, dx)| x.clone() + ExactScalar::ratio(*dx, 997)).collect();
            let (pa, ba) = sparsemax(&a).unwrap();
            let (pb, bb) = sparsemax(&b).unwrap();
            let mid: Vec<_> = a.iter().zip(&b)
                .map(|(x, y)| (x.clone() + y.clone()) / ExactScalar::from_integer(2)).collect();
            let (pm, bm) = sparsemax(&mid).unwrap();
            if ba == bb && ba == bm {
                for i in 0..a.len() {
                    let avg = (pa[i].clone() + pb[i].clone()) / ExactScalar::from_integer(2);
                    prop_assert_eq!(&pm[i], &avg);
                }
            }
        }

        #[test]
        fn float_and_exact_agree(s in proptest::collection::vec(-10.0f64..10.0, 1..=6)) {
            let (pf, _) = sparsemax(&s).unwrap();
            let se: Vec<ExactScalar> = s.iter().map(|x| ExactScalar::from_f64(*x)).collect();
            let (pe, _) = sparsemax(&se).unwrap();
            for (f, e) in pf.iter().zip(&pe) {
                prop_assert!((f - e.to_f64()).abs() < 1e-9);
            }
        }
    }
}
