// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affine::{box_min, AffineForm, RadiusBound};
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::model::Network;
use crate::ops::{bandnorm, bandnorm_affine, bandnorm_branch_inequalities, BranchConstraint};
use crate::tasks::{projected_decision, TaskSpec};

use super::Verdict;

/// One robustness question: can a perturbation of the final residual with
/// `‖η‖∞ ≤ epsilon` change the decision on domain input `index`?
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustnessQuery {
    pub index: usize,
    pub epsilon: ExactScalar,
}

impl RobustnessQuery {
    pub fn new(index: usize, epsilon: ExactScalar) -> Result<Self> {
        if epsilon.is_negative() {
            return Err(Error::NegativeEpsilon(epsilon.to_string()));
        }
        Ok(Self { index, epsilon })
    }
}

/// The ε-independent part of a robustness check: the branch certificate of
/// the final BandNorm and the decision margins on that branch.
#[derive(Clone, Debug)]
pub struct RobustnessAnalysis {
    pub winner: u32,
    pub constraints: Vec<BranchConstraint>,
    /// `logit_winner − logit_other` for every other candidate.
    pub margins: Vec<(u32, AffineForm)>,
}

impl RobustnessAnalysis {
    pub fn build(net: &Network<ExactScalar>, task: &TaskSpec, residual: &[ExactScalar]) -> Result<Self> {
        let d = residual.len();
        let forms: Vec<AffineForm> = residual
            .iter()
            .enumerate()
            .map(|(i, r)| AffineForm::coordinate(r.clone(), i, d))
            .collect();
        let norm = &net.params.final_norm;
        let clean = bandnorm(residual, &norm.gamma, &norm.beta, &net.band_low, &net.band_high)?;
        let constraints = bandnorm_branch_inequalities(&forms, &clean.branch, &net.band_low, &net.band_high);
        let y = bandnorm_affine(&forms, &clean.branch, &norm.gamma, &norm.beta, &net.band_low, &net.band_high);
        let logit = |t: u32| {
            let row = net.params.tok_emb.row(t as usize);
            let mut acc = AffineForm::constant(ExactScalar::zero(), d);
            for (yj, w) in y.iter().zip(row) {
                acc.add_scaled(yj, w);
            }
            acc
        };
        let restricted = net.unembed(&clean.output).restrict(&task.candidates);
        let winner = projected_decision(&restricted, &task.candidates);
        let win_form = logit(winner);
        let margins = task
            .candidates
            .iter()
            .filter(|&&t| t != winner)
            .map(|&t| (t, win_form.sub(&logit(t))))
            .collect();
        Ok(Self {
            winner,
            constraints,
            margins,
        })
    }

    /// Supremum of the radii at which both stages pass.
    pub fn max_certified_epsilon(&self) -> RadiusBound {
        self.constraints
            .iter()
            .map(|c| &c.form)
            .chain(self.margins.iter().map(|(_, m)| m))
            .map(RadiusBound::for_strict)
            .fold(RadiusBound::Unbounded, RadiusBound::min)
    }
}

/// Per-input outcome with the slack of the tightest constraint and margin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputCertificate {
    pub index: usize,
    pub tokens: Vec<u32>,
    pub verdict: Verdict,
    pub decision: u32,
    pub max_certified_epsilon: RadiusBound,
    /// Smallest `box_min` over the branch constraints.
    pub branch_slack: Option<ExactScalar>,
    /// Smallest `box_min` over the decision margins (only if the branch
    /// was certified).
    pub decision_margin: Option<ExactScalar>,
    pub violated_constraint: Option<String>,
    /// A box vertex realising a non-positive margin.
    pub eta: Option<Vec<ExactScalar>>,
    pub flips_to: Option<u32>,
}

pub(crate) fn certify(
    analysis: &RobustnessAnalysis,
    index: usize,
    tokens: &[u32],
    epsilon: &ExactScalar,
) -> InputCertificate {
    let mut cert = InputCertificate {
        index,
        tokens: tokens.to_vec(),
        verdict: Verdict::Verified,
        decision: analysis.winner,
        max_certified_epsilon: analysis.max_certified_epsilon(),
        branch_slack: None,
        decision_margin: None,
        violated_constraint: None,
        eta: None,
        flips_to: None,
    };
    if epsilon.is_zero() {
        return cert;
    }
    let mut tightest: Option<(ExactScalar, &BranchConstraint)> = None;
    for c in &analysis.constraints {
        let m = box_min(&c.form, epsilon);
        if tightest.as_ref().is_none_or(|(t, _)| m < *t) {
            tightest = Some((m, c));
        }
    }
    if let Some((slack, c)) = tightest {
        if !slack.is_positive() {
            cert.verdict = Verdict::Unknown;
            cert.violated_constraint = Some(c.label.clone());
        }
        cert.branch_slack = Some(slack);
        if cert.verdict == Verdict::Unknown {
            return cert;
        }
    }
    let mut worst: Option<(ExactScalar, u32, &AffineForm)> = None;
    for (t, m) in &analysis.margins {
        let v = box_min(m, epsilon);
        if worst.as_ref().is_none_or(|(w, _, _)| v < *w) {
            worst = Some((v, *t, m));
        }
    }
    if let Some((margin, other, form)) = worst {
        if !margin.is_positive() {
            // A zero margin only flips the decision if the tie goes to the
            // other candidate; otherwise nothing in the box flips and the
            // strict check can only decline to certify.
            if margin.is_negative() || other < analysis.winner {
                cert.verdict = Verdict::Refuted;
                cert.eta = Some(form.minimizing_vertex(epsilon));
                cert.flips_to = Some(other);
            } else {
                cert.verdict = Verdict::Unknown;
                cert.violated_constraint = Some(format!("margin against {other} is zero at a vertex"));
            }
        }
        cert.decision_margin = Some(margin);
    }
    cert
}

/// Decision of the concrete final stage (BandNorm, unembedding, projection)
/// at `residual + eta`, evaluated without the branch certificate.
pub fn resimulate_perturbation(
    net: &Network<ExactScalar>,
    task: &TaskSpec,
    residual: &[ExactScalar],
    eta: &[ExactScalar],
) -> Result<u32> {
    let x: Vec<ExactScalar> = residual.iter().zip(eta).map(|(r, e)| r + e).collect();
    let norm = &net.params.final_norm;
    let out = bandnorm(&x, &norm.gamma, &norm.beta, &net.band_low, &net.band_high)?;
    let restricted = net.unembed(&out.output).restrict(&task.candidates);
    Ok(projected_decision(&restricted, &task.candidates))
}

/// Uniform samples from the ε-box in float arithmetic; returns the first
/// perturbation found that changes the decision.
pub fn falsify_by_sampling(
    net: &Network<f64>,
    task: &TaskSpec,
    residual: &[f64],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    let norm = &net.params.final_norm;
    let decide = |x: &[f64]| -> Result<u32> {
        let out = bandnorm(x, &norm.gamma, &norm.beta, &net.band_low, &net.band_high)?;
        let restricted = net.unembed(&out.output).restrict(&task.candidates);
        Ok(projected_decision(&restricted, &task.candidates))
    };
    let clean = decide(residual)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = residual.to_vec();
    for _ in 0..samples {
        let eta: Vec<f64> = (0..residual.len()).map(|_| rng.random_range(-epsilon..=epsilon)).collect();
        for ((xi, r), e) in x.iter_mut().zip(residual).zip(&eta) {
            *xi = r + e;
        }
        if decide(&x)? != clean {
            return Ok(Some(eta));
        }
    }
    Ok(None)
}
