// SPDX-License-Identifier: MIT OR Apache-2.0

//! The SMT-representable operator stack.
//!
//! Each operator is generic over [`Scalar`](crate::scalar::Scalar) so the same
//! code runs in float (training) and exact (verification) mode. Operators
//! with data-dependent branches return a branch record describing the linear
//! region they evaluated in; within a fixed region every operator here is an
//! affine function of its input.

mod activation;
mod attention;
mod bandnorm;
mod sparsemax;

pub use activation::{leaky_relu, leaky_relu_derivative};
pub use attention::{attention_row, attention_vjp, causal_sparsemax_attention, AttentionGrads, AttentionOutput};
pub use bandnorm::{
    bandnorm, bandnorm_affine, bandnorm_branch_inequalities, bandnorm_vjp, BandNormBranch,
    BandNormGrads, BandNormOutput, BranchConstraint, CoordSign, SideBranch, SideMode,
};
pub use sparsemax::{sparsemax, sparsemax_jacobian, sparsemax_threshold, sparsemax_vjp, SparsemaxBranch};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactScalar;

/// Operator constants shared by every layer.
///
/// The BandNorm band `[band_low, band_high]` defaults to `[d/8, d/2]` for a
/// model of width `d` when left unset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpConfig {
    pub leaky_slope: ExactScalar,
    #[serde(default)]
    pub band_low: Option<ExactScalar>,
    #[serde(default)]
    pub band_high: Option<ExactScalar>,
}

impl Default for OpConfig {
    fn default() -> Self {
        Self {
            leaky_slope: ExactScalar::ratio(1, 100),
            band_low: None,
            band_high: None,
        }
    }
}

impl OpConfig {
    /// Resolved `(L, U)` for a model of width `width`.
    pub fn band(&self, width: usize) -> (ExactScalar, ExactScalar) {
        let w = width as i64;
        (
            self.band_low.clone().unwrap_or_else(|| ExactScalar::ratio(w, 8)),
            self.band_high.clone().unwrap_or_else(|| ExactScalar::ratio(w, 2)),
        )
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        let zero = ExactScalar::zero();
        let one = ExactScalar::one();
        if self.leaky_slope <= zero || self.leaky_slope >= one {
            return Err(Error::InvalidConfig(format!(
                "leaky slope must lie in (0, 1), got {}",
                self.leaky_slope
            )));
        }
        let (low, high) = self.band(width);
        if low.is_negative() || low >= high {
            return Err(Error::InvalidConfig(format!(
                "band must satisfy 0 <= L < U, got [{low}, {high}]"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_band_is_eighth_and_half_of_width() {
        let (l, u) = OpConfig::default().band(16);
        assert_eq!(l, ExactScalar::from_integer(2));
        assert_eq!(u, ExactScalar::from_integer(8));
    }

    #[test]
    fn rejects_bad_constants() {
        let mut cfg = OpConfig::default();
        cfg.leaky_slope = ExactScalar::one();
        assert!(cfg.validate(16).is_err());
        let cfg = OpConfig {
            band_low: Some(ExactScalar::from_integer(3)),
            band_high: Some(ExactScalar::from_integer(3)),
            ..OpConfig::default()
        };
        assert!(cfg.validate(16).is_err());
        assert!(OpConfig::default().validate(16).is_ok());
    }
}
