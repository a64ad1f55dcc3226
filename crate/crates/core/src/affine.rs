// SPDX-License-Identifier: MIT OR Apache-2.0

//! Affine forms over a perturbation vector and their extrema on ℓ∞ boxes.

use serde::{Deserialize, Serialize};

use crate::exact::ExactScalar;

/// `constant + Σ_i coefficients[i] · η_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineForm {
    pub constant: ExactScalar,
    pub coefficients: Vec<ExactScalar>,
}

impl AffineForm {
    pub fn constant(value: ExactScalar, dim: usize) -> Self {
        Self {
            constant: value,
            coefficients: vec![ExactScalar::zero(); dim],
        }
    }

    /// `value + η_index`.
    pub fn coordinate(value: ExactScalar, index: usize, dim: usize) -> Self {
        let mut form = Self::constant(value, dim);
        form.coefficients[index] = ExactScalar::one();
        form
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_constant(&self) -> bool {
        self.coefficients.iter().all(ExactScalar::is_zero)
    }

    /// Σ |coefficients_i|.
    pub fn l1_coefficients(&self) -> ExactScalar {
        self.coefficients.iter().map(ExactScalar::abs).sum()
    }

    pub fn evaluate(&self, eta: &[ExactScalar]) -> ExactScalar {
        assert_eq!(eta.len(), self.dim(), "perturbation dimension");
        let mut acc = self.constant.clone();
        for (c, e) in self.coefficients.iter().zip(eta) {
            if !c.is_zero() && !e.is_zero() {
                acc += c * e;
            }
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "affine form dimension");
        Self {
            constant: &self.constant + &other.constant,
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "affine form dimension");
        Self {
            constant: &self.constant - &other.constant,
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, factor: &ExactScalar) -> Self {
        Self {
            constant: &self.constant * factor,
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            constant: -&self.constant,
            coefficients: self.coefficients.iter().map(|c| -c).collect(),
        }
    }

    pub fn add_constant(&self, value: &ExactScalar) -> Self {
        Self {
            constant: &self.constant + value,
            coefficients: self.coefficients.clone(),
        }
    }

    /// In-place `self += factor · other`.
    pub fn add_scaled(&mut self, other: &Self, factor: &ExactScalar) {
        assert_eq!(self.dim(), other.dim(), "affine form dimension");
        if factor.is_zero() {
            return;
        }
        self.constant += &other.constant * factor;
        for (a, b) in self.coefficients.iter_mut().zip(&other.coefficients) {
            if !b.is_zero() {
                *a += b * factor;
            }
        }
    }

    /// Sum of forms; `dim` is used when the iterator is empty.
    pub fn sum<'a>(forms: impl IntoIterator<Item = &'a AffineForm>, dim: usize) -> Self {
        let mut acc = Self::constant(ExactScalar::zero(), dim);
        for f in forms {
            acc.add_scaled(f, &ExactScalar::one());
        }
        acc
    }

    /// The box vertex `η_i = -ε·sign(coefficients_i)` at which the form is minimal.
    pub fn minimizing_vertex(&self, epsilon: &ExactScalar) -> Vec<ExactScalar> {
        self.coefficients
            .iter()
            .map(|c| match c.signum() {
                1 => -epsilon,
                -1 => epsilon.clone(),
                _ => ExactScalar::zero(),
            })
            .collect()
    }
}

/// `min_{‖η‖∞ ≤ ε} f(η) = constant − ε·Σ|coefficients_i|`.
pub fn box_min(form: &AffineForm, epsilon: &ExactScalar) -> ExactScalar {
    debug_assert!(!epsilon.is_negative(), "epsilon must be non-negative");
    &form.constant - &(epsilon * &form.l1_coefficients())
}

/// `max_{‖η‖∞ ≤ ε} f(η) = constant + ε·Σ|coefficients_i|`.
pub fn box_max(form: &AffineForm, epsilon: &ExactScalar) -> ExactScalar {
    debug_assert!(!epsilon.is_negative(), "epsilon must be non-negative");
    &form.constant + &(epsilon * &form.l1_coefficients())
}

/// Largest radius at which a strict constraint `form > 0` still holds on the
/// open box, i.e. the supremum of ε with `box_min(form, ε) > 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum RadiusBound {
    Finite(ExactScalar),
    Unbounded,
}

impl RadiusBound {
    pub fn for_strict(form: &AffineForm) -> Self {
        let l1 = form.l1_coefficients();
        if !form.constant.is_positive() {
            return RadiusBound::Finite(ExactScalar::zero());
        }
        if l1.is_zero() {
            RadiusBound::Unbounded
        } else {
            RadiusBound::Finite(&form.constant / &l1)
        }
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (RadiusBound::Unbounded, b) => b,
            (a, RadiusBound::Unbounded) => a,
            (RadiusBound::Finite(a), RadiusBound::Finite(b)) => RadiusBound::Finite(a.min(b)),
        }
    }

    pub fn finite(&self) -> Option<&ExactScalar> {
        match self {
            RadiusBound::Finite(v) => Some(v),
            RadiusBound::Unbounded => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn form(constant: i64, coefficients: &[i64]) -> AffineForm {
        AffineForm {
            constant: ExactScalar::from_integer(constant),
            coefficients: coefficients.iter().map(|&c| ExactScalar::from_integer(c)).collect(),
        }
    }

    /// Enumerates all 2^d vertices of the ε-box.
    fn vertex_min(f: &AffineForm, eps: &ExactScalar) -> ExactScalar {
        let d = f.dim();
        (0..(1u32 << d))
            .map(|mask| {
                let eta: Vec<_> = (0..d)
                    .map(|i| if mask >> i & 1 == 1 { eps.clone() } else { -eps })
                    .collect();
                f.evaluate(&eta)
            })
            .min()
            .unwrap()
    }

    #[test]
    fn box_min_matches_vertex_enumeration_on_example() {
        let f = form(2, &[1, -3]);
        let eps = ExactScalar::ratio(1, 10);
        assert_eq!(vertex_min(&f, &eps), ExactScalar::ratio(8, 5));
        assert_eq!(box_min(&f, &eps), ExactScalar::ratio(8, 5));
        assert_eq!(box_max(&f, &eps), ExactScalar::ratio(12, 5));
    }

    #[test]
    fn constant_and_degenerate_boxes() {
        let f = form(5, &[]);
        assert_eq!(box_min(&f, &ExactScalar::from_integer(7)), ExactScalar::from_integer(5));
        let g = form(0, &[1]);
        assert_eq!(box_min(&g, &ExactScalar::zero()), ExactScalar::zero());
    }

    #[test]
    fn radius_of_single_constraint() {
        let f = form(2, &[1, -3]);
        assert_eq!(RadiusBound::for_strict(&f), RadiusBound::Finite(ExactScalar::ratio(1, 2)));
        assert_eq!(RadiusBound::for_strict(&form(3, &[0, 0])), RadiusBound::Unbounded);
        assert_eq!(
            RadiusBound::for_strict(&form(-1, &[2])),
            RadiusBound::Finite(ExactScalar::zero())
        );
    }

    #[test]
    fn minimizing_vertex_attains_box_min() {
        let f = form(2, &[1, -3, 0]);
        let eps = ExactScalar::ratio(1, 4);
        let v = f.minimizing_vertex(&eps);
        assert_eq!(f.evaluate(&v), box_min(&f, &eps));
    }

    proptest! {
        #[test]
        fn box_min_equals_vertex_oracle(
            constant in -50i64..50,
            coefficients in proptest::collection::vec(-20i64..20, 0..=8),
            eps_index in 0usize..3,
        ) {
            let eps = [ExactScalar::zero(), ExactScalar::ratio(1, 4), ExactScalar::one()][eps_index].clone();
            let f = form(constant, &coefficients);
            prop_assert_eq!(box_min(&f, &eps), vertex_min(&f, &eps));
        }
    }
}
