// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::scalar::Scalar;

/// `x` for `x ≥ 0`, `α·x` otherwise.
pub fn leaky_relu<S: Scalar>(x: &S, slope: &S) -> S {
    if *x >= S::zero() {
        x.clone()
    } else {
        slope.clone() * x.clone()
    }
}

/// Derivative on the branch the forward pass takes; `x = 0` is positive.
pub fn leaky_relu_derivative<S: Scalar>(x: &S, slope: &S) -> S {
    if *x >= S::zero() {
        S::one()
    } else {
        slope.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactScalar;

    #[test]
    fn both_branches_and_the_boundary() {
        let a = ExactScalar::ratio(1, 100);
        assert_eq!(leaky_relu(&ExactScalar::from_integer(3), &a), ExactScalar::from_integer(3));
        assert_eq!(leaky_relu(&ExactScalar::from_integer(-2), &a), ExactScalar::ratio(-1, 50));
        assert_eq!(leaky_relu(&ExactScalar::zero(), &a), ExactScalar::zero());
        assert_eq!(leaky_relu_derivative(&0.0, &0.01), 1.0);
        assert_eq!(leaky_relu_derivative(&-1e-9, &0.01), 0.01);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let h = 1e-6;
        for &x in &[-3.0, -0.5, 0.25, 2.0] {
            let fd = (leaky_relu(&(x + h), &0.01) - leaky_relu(&(x - h), &0.01)) / (2.0 * h);
            let an = leaky_relu_derivative(&x, &0.01);
            assert!(((fd - an) / an).abs() < 1e-4);
        }
    }
}
