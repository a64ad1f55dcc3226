// SPDX-License-Identifier: MIT OR Apache-2.0

//! Signed L1 BandNorm.
//!
//! `c = x − mean(x)` is split into its positive part `p` and negative part
//! `n`. Each side's L1 mass `m` is brought into the band `[L, U]`:
//!
//! | mass        | mode      | adjustment                                        |
//! |-------------|-----------|---------------------------------------------------|
//! | `m = 0`     | `Zero`    | side stays zero                                   |
//! | `0 < m < L` | `Lift`    | add `(L − m)/k` to each of the `k` nonzero coords |
//! | `L ≤ m ≤ U` | `Pass`    | unchanged                                         |
//! | `m > U`     | `Project` | soft-threshold so the mass is exactly `U`         |
//!
//! The result `z = p′ − n′` is recentred and mapped through `γ ⊙ z + β`.

use serde::{Deserialize, Serialize};

use crate::affine::AffineForm;
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::scalar::{mean, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordSign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "-")]
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideMode {
    Project,
    Lift,
    Pass,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideBranch {
    pub mode: SideMode,
    /// Coordinates carrying nonzero output mass after adjustment, ascending.
    pub active: Vec<usize>,
}

/// Linear region of one BandNorm evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandNormBranch {
    pub signs: Vec<CoordSign>,
    pub positive: SideBranch,
    pub negative: SideBranch,
}

impl BandNormBranch {
    fn side_coords(&self, sign: CoordSign) -> Vec<usize> {
        self.signs
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == sign)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BandNormOutput<S> {
    pub output: Vec<S>,
    /// Recentred `z`, before the `γ/β` map.
    pub normalized: Vec<S>,
    pub branch: BandNormBranch,
}

/// Adjusts one side's magnitudes (all strictly positive) into the band.
fn adjust_side<S: Scalar>(values: &[S], low: &S, high: &S) -> (Vec<S>, SideMode, Vec<usize>) {
    if values.is_empty() {
        return (Vec::new(), SideMode::Zero, Vec::new());
    }
    let mut mass = S::zero();
    for v in values {
        S::add_acc(&mut mass, v);
    }
    if mass > *high {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite"));
        let mut cumsum = S::zero();
        let mut best = (0usize, S::zero());
        for (j, &idx) in order.iter().enumerate() {
            S::add_acc(&mut cumsum, &values[idx]);
            let k = S::from_int(j as i64 + 1);
            if values[idx].clone() * k > cumsum.clone() - high.clone() {
                best = (j + 1, cumsum.clone());
            }
        }
        let tau = (best.1 - high.clone()) / S::from_int(best.0 as i64);
        let mut active = Vec::new();
        let adjusted = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let shifted = v.clone() - tau.clone();
                if shifted.is_positive() {
                    active.push(i);
                    shifted
                } else {
                    S::zero()
                }
            })
            .collect();
        (adjusted, SideMode::Project, active)
    } else if mass < *low {
        let lift = (low.clone() - mass) / S::from_int(values.len() as i64);
        let adjusted = values.iter().map(|v| v.clone() + lift.clone()).collect();
        (adjusted, SideMode::Lift, (0..values.len()).collect())
    } else {
        (values.to_vec(), SideMode::Pass, (0..values.len()).collect())
    }
}

pub fn bandnorm<S: Scalar>(x: &[S], gamma: &[S], beta: &[S], low: &S, high: &S) -> Result<BandNormOutput<S>> {
    let d = x.len();
    if d < 2 {
        return Err(Error::ShapeMismatch(format!("bandnorm needs at least 2 coordinates, got {d}")));
    }
    if gamma.len() != d || beta.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "bandnorm affine parameters have lengths {}/{} for width {d}",
            gamma.len(),
            beta.len()
        )));
    }
    let mu = mean(x);
    let centered: Vec<S> = x.iter().map(|v| v.clone() - mu.clone()).collect();
    let signs: Vec<CoordSign> = centered
        .iter()
        .map(|c| {
            if c.is_positive() {
                CoordSign::Positive
            } else if c.is_zero() {
                CoordSign::Zero
            } else {
                CoordSign::Negative
            }
        })
        .collect();

    let mut z = vec![S::zero(); d];
    let mut sides = Vec::with_capacity(2);
    for sign in [CoordSign::Positive, CoordSign::Negative] {
        let coords: Vec<usize> = (0..d).filter(|&i| signs[i] == sign).collect();
        let magnitudes: Vec<S> = coords
            .iter()
            .map(|&i| match sign {
                CoordSign::Positive => centered[i].clone(),
                _ => -centered[i].clone(),
            })
            .collect();
        let (adjusted, mode, local_active) = adjust_side(&magnitudes, low, high);
        for (&i, v) in coords.iter().zip(adjusted) {
            z[i] = match sign {
                CoordSign::Positive => v,
                _ => -v,
            };
        }
        sides.push(SideBranch {
            mode,
            active: local_active.into_iter().map(|j| coords[j]).collect(),
        });
    }
    let negative = sides.pop().expect("two sides");
    let positive = sides.pop().expect("two sides");

    let zmu = mean(&z);
    for v in z.iter_mut() {
        *v = v.clone() - zmu.clone();
    }
    let output = z
        .iter()
        .zip(gamma)
        .zip(beta)
        .map(|((zi, g), b)| g.clone() * zi.clone() + b.clone())
        .collect();
    Ok(BandNormOutput {
        output,
        normalized: z,
        branch: BandNormBranch {
            signs,
            positive,
            negative,
        },
    })
}

pub struct BandNormGrads {
    pub input: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Vector-Jacobian product on the recorded branch.
pub fn bandnorm_vjp(grad_out: &[f64], forward: &BandNormOutput<f64>, gamma: &[f64]) -> BandNormGrads {
    let d = grad_out.len();
    let grad_gamma: Vec<f64> = grad_out.iter().zip(&forward.normalized).map(|(g, z)| g * z).collect();
    let grad_beta = grad_out.to_vec();
    let gz: Vec<f64> = grad_out.iter().zip(gamma).map(|(g, w)| g * w).collect();
    let gz_mean = gz.iter().sum::<f64>() / d as f64;
    let gz: Vec<f64> = gz.iter().map(|g| g - gz_mean).collect();

    let mut gc = vec![0.0; d];
    for side in [&forward.branch.positive, &forward.branch.negative] {
        match side.mode {
            SideMode::Zero => {}
            SideMode::Pass => {
                for &i in &side.active {
                    gc[i] += gz[i];
                }
            }
            SideMode::Project | SideMode::Lift => {
                let k = side.active.len() as f64;
                let m = side.active.iter().map(|&i| gz[i]).sum::<f64>() / k;
                for &i in &side.active {
                    gc[i] += gz[i] - m;
                }
            }
        }
    }
    let gc_mean = gc.iter().sum::<f64>() / d as f64;
    BandNormGrads {
        input: gc.iter().map(|g| g - gc_mean).collect(),
        gamma: grad_gamma,
        beta: grad_beta,
    }
}

fn centered_forms(x: &[AffineForm]) -> Vec<AffineForm> {
    let d = x.len();
    let dim = x[0].dim();
    let inv_d = ExactScalar::ratio(1, d as i64);
    let mu = AffineForm::sum(x, dim).scale(&inv_d);
    x.iter().map(|f| f.sub(&mu)).collect()
}

/// Magnitude forms (`c_i` or `−c_i`) for one side.
fn side_magnitudes(centered: &[AffineForm], coords: &[usize], sign: CoordSign) -> Vec<AffineForm> {
    coords
        .iter()
        .map(|&i| match sign {
            CoordSign::Positive => centered[i].clone(),
            _ => centered[i].neg(),
        })
        .collect()
}

/// Threshold form `τ = (Σ_A v_i − U)/|A|` of a projection branch.
fn projection_threshold(magnitudes: &[AffineForm], coords: &[usize], active: &[usize], high: &ExactScalar) -> AffineForm {
    let dim = magnitudes[0].dim();
    let selected: Vec<&AffineForm> = coords
        .iter()
        .zip(magnitudes)
        .filter(|(c, _)| active.contains(c))
        .map(|(_, m)| m)
        .collect();
    AffineForm::sum(selected, dim)
        .add_constant(&-high)
        .scale(&ExactScalar::ratio(1, active.len() as i64))
}

/// BandNorm evaluated on affine inputs with the branch held fixed.
///
/// At any `η` where the branch's inequalities hold this equals
/// [`bandnorm`] applied to the evaluated inputs.
pub fn bandnorm_affine(
    x: &[AffineForm],
    branch: &BandNormBranch,
    gamma: &[ExactScalar],
    beta: &[ExactScalar],
    low: &ExactScalar,
    high: &ExactScalar,
) -> Vec<AffineForm> {
    let d = x.len();
    let dim = x[0].dim();
    let centered = centered_forms(x);
    let mut z: Vec<AffineForm> = vec![AffineForm::constant(ExactScalar::zero(), dim); d];
    for (sign, side) in [(CoordSign::Positive, &branch.positive), (CoordSign::Negative, &branch.negative)] {
        let coords = branch.side_coords(sign);
        if coords.is_empty() {
            continue;
        }
        let magnitudes = side_magnitudes(&centered, &coords, sign);
        let adjusted: Vec<AffineForm> = match side.mode {
            SideMode::Zero => continue,
            SideMode::Pass => magnitudes.clone(),
            SideMode::Lift => {
                let mass = AffineForm::sum(&magnitudes, dim);
                let lift = mass
                    .neg()
                    .add_constant(low)
                    .scale(&ExactScalar::ratio(1, coords.len() as i64));
                magnitudes.iter().map(|m| m.add(&lift)).collect()
            }
            SideMode::Project => {
                let tau = projection_threshold(&magnitudes, &coords, &side.active, high);
                coords
                    .iter()
                    .zip(&magnitudes)
                    .map(|(c, m)| {
                        if side.active.contains(c) {
                            m.sub(&tau)
                        } else {
                            AffineForm::constant(ExactScalar::zero(), dim)
                        }
                    })
                    .collect()
            }
        };
        for (&i, v) in coords.iter().zip(adjusted) {
            z[i] = match sign {
                CoordSign::Positive => v,
                _ => v.neg(),
            };
        }
    }
    let z = centered_forms(&z);
    z.iter()
        .zip(gamma)
        .zip(beta)
        .map(|((zi, g), b)| zi.scale(g).add_constant(b))
        .collect()
}

/// One inequality of a branch certificate: the branch is followed wherever
/// `form > 0` for every constraint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConstraint {
    pub label: String,
    pub form: AffineForm,
}

/// Affine conditions in `η` under which BandNorm follows `branch`.
///
/// Emits one sign condition per nonzero coordinate of `c` (two opposite
/// conditions for an exact zero, which can only hold on a degenerate box),
/// the mass-versus-band conditions for each side (`Pass`: 2, `Lift`: 1,
/// `Project`: 1), and for a projection one ordering condition per side
/// coordinate fixing the soft-threshold's active set.
pub fn bandnorm_branch_inequalities(
    x: &[AffineForm],
    branch: &BandNormBranch,
    low: &ExactScalar,
    high: &ExactScalar,
) -> Vec<BranchConstraint> {
    let dim = x[0].dim();
    let centered = centered_forms(x);
    let mut out = Vec::new();
    for (i, (c, sign)) in centered.iter().zip(&branch.signs).enumerate() {
        match sign {
            CoordSign::Positive => out.push(BranchConstraint { label: format!("sign[{i}] > 0"), form: c.clone() }),
            CoordSign::Negative => out.push(BranchConstraint { label: format!("sign[{i}] < 0"), form: c.neg() }),
            CoordSign::Zero => {
                out.push(BranchConstraint { label: format!("sign[{i}] = 0 (lower)"), form: c.clone() });
                out.push(BranchConstraint { label: format!("sign[{i}] = 0 (upper)"), form: c.neg() });
            }
        }
    }
    for (sign, side, name) in [
        (CoordSign::Positive, &branch.positive, "positive"),
        (CoordSign::Negative, &branch.negative, "negative"),
    ] {
        let coords = branch.side_coords(sign);
        if coords.is_empty() {
            continue;
        }
        let magnitudes = side_magnitudes(&centered, &coords, sign);
        let mass = AffineForm::sum(&magnitudes, dim);
        match side.mode {
            SideMode::Zero => {}
            SideMode::Pass => {
                out.push(BranchConstraint { label: format!("{name} mass >= L"), form: mass.add_constant(&-low) });
                out.push(BranchConstraint { label: format!("{name} mass <= U"), form: mass.neg().add_constant(high) });
            }
            SideMode::Lift => {
                out.push(BranchConstraint { label: format!("{name} mass < L"), form: mass.neg().add_constant(low) });
            }
            SideMode::Project => {
                out.push(BranchConstraint { label: format!("{name} mass > U"), form: mass.add_constant(&-high) });
                let tau = projection_threshold(&magnitudes, &coords, &side.active, high);
                for (c, m) in coords.iter().zip(&magnitudes) {
                    if side.active.contains(c) {
                        out.push(BranchConstraint { label: format!("{name} coord {c} above threshold"), form: m.sub(&tau) });
                    } else {
                        out.push(BranchConstraint { label: format!("{name} coord {c} below threshold"), form: tau.sub(m) });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ex(v: &[(i64, i64)]) -> Vec<ExactScalar> {
        v.iter().map(|&(n, d)| ExactScalar::ratio(n, d)).collect()
    }

    fn unit(d: usize) -> (Vec<ExactScalar>, Vec<ExactScalar>) {
        (vec![ExactScalar::one(); d], vec![ExactScalar::zero(); d])
    }

    fn run(x: &[(i64, i64)], low: (i64, i64), high: (i64, i64)) -> BandNormOutput<ExactScalar> {
        let (g, b) = unit(x.len());
        bandnorm(&ex(x), &g, &b, &ExactScalar::ratio(low.0, low.1), &ExactScalar::ratio(high.0, high.1)).unwrap()
    }

    #[test]
    fn pass_through_inside_band() {
        let out = run(&[(1, 1), (-1, 1)], (1, 2), (2, 1));
        assert_eq!(out.output, ex(&[(1, 1), (-1, 1)]));
        assert_eq!(out.branch.positive.mode, SideMode::Pass);
        assert_eq!(out.branch.negative.mode, SideMode::Pass);
    }

    #[test]
    fn projection_caps_mass() {
        let out = run(&[(3, 1), (-3, 1)], (1, 2), (1, 1));
        assert_eq!(out.output, ex(&[(1, 1), (-1, 1)]));
        assert_eq!(out.branch.positive.mode, SideMode::Project);
        assert_eq!(out.branch.positive.active, vec![0]);
    }

    #[test]
    fn lift_raises_mass_additively() {
        let out = run(&[(1, 5), (-1, 5)], (1, 1), (2, 1));
        assert_eq!(out.output, ex(&[(1, 1), (-1, 1)]));
        assert_eq!(out.branch.positive.mode, SideMode::Lift);
    }

    #[test]
    fn constant_input_is_zero_branch() {
        let out = run(&[(2, 1), (2, 1), (2, 1)], (1, 1), (2, 1));
        assert_eq!(out.branch.positive.mode, SideMode::Zero);
        assert_eq!(out.branch.negative.mode, SideMode::Zero);
        assert!(out.output.iter().all(ExactScalar::is_zero));
    }

    #[test]
    fn short_input_rejected() {
        let r = bandnorm(&[1.0], &[1.0], &[0.0], &0.5, &2.0);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    fn random_exact(rng: &mut ChaCha8Rng, d: usize, scale: i64) -> Vec<ExactScalar> {
        (0..d).map(|_| ExactScalar::ratio(rng.random_range(-scale..=scale), 64)).collect()
    }

    #[test]
    fn masses_land_in_band_and_output_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let low = ExactScalar::ratio(1, 2);
        let high = ExactScalar::from_integer(2);
        for _ in 0..300 {
            let d = rng.random_range(2..=8);
            let x = random_exact(&mut rng, d, 400);
            let (g, b) = unit(d);
            let out = bandnorm(&x, &g, &b, &low, &high).unwrap();
            assert_eq!(out.normalized.iter().sum::<ExactScalar>(), ExactScalar::zero());
            // Reconstruct pre-recentring sides from the branch and check masses.
            let mu = x.iter().sum::<ExactScalar>() / ExactScalar::from_integer(d as i64);
            let centered: Vec<_> = x.iter().map(|v| v.clone() - mu.clone()).collect();
            for (side, positive) in [(&out.branch.positive, true), (&out.branch.negative, false)] {
                let coords: Vec<usize> = (0..d)
                    .filter(|&i| if positive { centered[i].is_positive() } else { centered[i].is_negative() })
                    .collect();
                let raw: Vec<f64> = coords.iter().map(|&i| centered[i].to_f64().abs()).collect();
                let (adj, mode, _) = adjust_side(&raw, &low.to_f64(), &high.to_f64());
                assert_eq!(mode, side.mode);
                let mass: f64 = adj.iter().sum();
                if mode == SideMode::Zero {
                    assert_eq!(mass, 0.0);
                } else {
                    assert!(mass >= low.to_f64() - 1e-9 && mass <= high.to_f64() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn affine_follow_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let low = ExactScalar::from_integer(1);
        let high = ExactScalar::from_integer(3);
        for _ in 0..100 {
            let d = rng.random_range(2..=6);
            let x = random_exact(&mut rng, d, 300);
            let gamma = random_exact(&mut rng, d, 100);
            let beta = random_exact(&mut rng, d, 100);
            let out = bandnorm(&x, &gamma, &beta, &low, &high).unwrap();
            let forms: Vec<AffineForm> = x.iter().enumerate().map(|(i, v)| AffineForm::coordinate(v.clone(), i, d)).collect();
            let affine = bandnorm_affine(&forms, &out.branch, &gamma, &beta, &low, &high);
            let zero_eta = vec![ExactScalar::zero(); d];
            for (f, y) in affine.iter().zip(&out.output) {
                assert_eq!(&f.evaluate(&zero_eta), y);
            }
            // A nearby point inside the certified branch evaluates identically.
            let constraints = bandnorm_branch_inequalities(&forms, &out.branch, &low, &high);
            let eta: Vec<ExactScalar> = (0..d).map(|_| ExactScalar::ratio(rng.random_range(-3..=3), 4096)).collect();
            if constraints.iter().all(|c| c.form.evaluate(&eta).is_positive()) {
                let moved: Vec<_> = x.iter().zip(&eta).map(|(a, b)| a.clone() + b.clone()).collect();
                let direct = bandnorm(&moved, &gamma, &beta, &low, &high).unwrap();
                assert_eq!(direct.branch, out.branch);
                for (f, y) in affine.iter().zip(&direct.output) {
                    assert_eq!(&f.evaluate(&eta), y);
                }
            }
        }
    }

    fn constant_forms(x: &[(i64, i64)]) -> Vec<AffineForm> {
        ex(x).into_iter().map(|v| AffineForm::constant(v, 2)).collect()
    }

    #[test]
    fn constant_inputs_give_constant_constraints() {
        let x = [(1, 1), (-1, 1)];
        let out = run(&x, (1, 2), (2, 1));
        let cons = bandnorm_branch_inequalities(&constant_forms(&x), &out.branch, &ExactScalar::ratio(1, 2), &ExactScalar::from_integer(2));
        assert!(cons.iter().all(|c| c.form.is_constant() && c.form.constant.is_positive()));
    }

    #[test]
    fn pass_branch_constraint_count() {
        // d = 2: 2 sign conditions plus 2 band conditions on each side.
        let x = [(1, 1), (-1, 1)];
        let out = run(&x, (1, 2), (2, 1));
        let forms: Vec<AffineForm> = ex(&x).into_iter().enumerate().map(|(i, v)| AffineForm::coordinate(v, i, 2)).collect();
        let cons = bandnorm_branch_inequalities(&forms, &out.branch, &ExactScalar::ratio(1, 2), &ExactScalar::from_integer(2));
        assert_eq!(cons.len(), 2 + 2 * 2);
    }

    #[test]
    fn projection_branch_adds_ordering_constraints() {
        // Positive side {0, 1, 2} projected with all three coordinates active.
        let x = [(3, 1), (3, 1), (3, 1), (-9, 2), (-9, 2)];
        let out = run(&x, (1, 2), (2, 1));
        assert_eq!(out.branch.positive.mode, SideMode::Project);
        let k = out.branch.positive.active.len();
        assert_eq!(k, 3);
        assert_eq!(out.branch.negative.mode, SideMode::Project);
        let kn = out.branch.negative.active.len();
        let forms: Vec<AffineForm> = ex(&x).into_iter().enumerate().map(|(i, v)| AffineForm::coordinate(v, i, 5)).collect();
        let cons = bandnorm_branch_inequalities(&forms, &out.branch, &ExactScalar::ratio(1, 2), &ExactScalar::from_integer(2));
        assert_eq!(cons.len(), 5 + (1 + k) + (1 + kn));
        assert!(cons.iter().all(|c| c.form.constant.is_positive()));
    }

    fn finite_difference_check(x: &[f64], gamma: &[f64], beta: &[f64], g_out: &[f64], low: f64, high: f64) -> Option<f64> {
        let out = bandnorm(x, gamma, beta, &low, &high).unwrap();
        let grads = bandnorm_vjp(g_out, &out, gamma);
        let h = 1e-6;
        let loss = |xs: &[f64]| -> (f64, BandNormBranch) {
            let o = bandnorm(xs, gamma, beta, &low, &high).unwrap();
            (o.output.iter().zip(g_out).map(|(a, b)| a * b).sum(), o.branch)
        };
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (lp, bp) = loss(&xp);
            let (lm, bm) = loss(&xm);
            if bp != out.branch || bm != out.branch {
                return None;
            }
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grads.input[i].abs()).max(1e-3);
            worst = worst.max((fd - grads.input[i]).abs() / denom);
        }
        Some(worst)
    }

    #[test]
    fn vjp_matches_finite_differences_on_every_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = [0usize; 3];
        for _ in 0..2000 {
            let d = rng.random_range(2..=8);
            let scale = [0.05, 1.0, 6.0][rng.random_range(0..3)];
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
            let gamma: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
            let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if let Some(err) = finite_difference_check(&x, &gamma, &beta, &g, 0.5, 2.0) {
                assert!(err < 1e-4, "relative error {err}");
                let out = bandnorm(&x, &gamma, &beta, &0.5, &2.0).unwrap();
                match out.branch.positive.mode {
                    SideMode::Lift => checked[0] += 1,
                    SideMode::Pass => checked[1] += 1,
                    SideMode::Project => checked[2] += 1,
                    SideMode::Zero => {}
                }
            }
        }
        assert!(checked.iter().all(|&c| c > 20), "mode coverage {checked:?}");
    }

    #[test]
    fn affine_parameter_gradients() {
        let x = [0.7, -0.2, 0.4, -1.3];
        let gamma = [1.1, 0.9, 1.3, 0.7];
        let beta = [0.1, 0.0, -0.2, 0.3];
        let g = [0.5, -1.0, 0.25, 2.0];
        let out = bandnorm(&x, &gamma, &beta, &0.5, &2.0).unwrap();
        let grads = bandnorm_vjp(&g, &out, &gamma);
        let h = 1e-6;
        for i in 0..4 {
            let mut gp = gamma;
            let mut gm = gamma;
            gp[i] += h;
            gm[i] -= h;
            let f = |gm: &[f64]| -> f64 {
                bandnorm(&x, gm, &beta, &0.5, &2.0).unwrap().output.iter().zip(&g).map(|(a, b)| a * b).sum()
            };
            let fd = (f(&gp) - f(&gm)) / (2.0 * h);
            assert!((fd - grads.gamma[i]).abs() < 1e-6);
            assert_eq!(grads.beta[i], g[i]);
        }
    }

    proptest! {
        #[test]
        fn float_and_exact_agree(x in proptest::collection::vec(-10.0f64..10.0, 2..=8)) {
            let d = x.len();
            let ones = vec![1.0; d];
            let zeros = vec![0.0; d];
            let f = bandnorm(&x, &ones, &zeros, &1.0, &4.0).unwrap();
            let xe: Vec<ExactScalar> = x.iter().map(|v| ExactScalar::from_f64(*v)).collect();
            let (ge, be) = unit(d);
            let e = bandnorm(&xe, &ge, &be, &ExactScalar::one(), &ExactScalar::from_integer(4)).unwrap();
            for (a, b) in f.output.iter().zip(&e.output) {
                prop_assert!((a - b.to_f64()).abs() < 1e-9);
            }
        }

        #[test]
        fn midpoint_is_affine_within_branch(
            a in proptest::collection::vec(-200i64..200, 2..=6),
            delta in proptest::collection::vec(-2i64..=2, 6),
        ) {
            let d = a.len();
            let xa: Vec<_> = a.iter().map(|&v| ExactScalar::ratio(v, 32)).collect();
            let xb: Vec<_> = xa.iter().zip(&delta).map(|(v, dv)| v.clone() + ExactScalar::ratio(*dv, 1024)).collect();
            let xm: Vec<_> = xa.iter().zip(&xb).map(|(u, v)| (u.clone() + v.clone()) / ExactScalar::from_integer(2)).collect();
            let (g, b) = unit(d);
            let low = ExactScalar::one();
            let high = ExactScalar::from_integer(3);
            let oa = bandnorm(&xa, &g, &b, &low, &high).unwrap();
            let ob = bandnorm(&xb, &g, &b, &low, &high).unwrap();
            let om = bandnorm(&xm, &g, &b, &low, &high).unwrap();
            if oa.branch == ob.branch && oa.branch == om.branch {
                for i in 0..d {
                    let avg = (oa.output[i].clone() + ob.output[i].clone()) / ExactScalar::from_integer(2);
                    prop_assert_eq!(&om.output[i], &avg);
                }
            }
        }
    }
}
