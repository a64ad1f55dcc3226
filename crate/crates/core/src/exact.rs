// SPDX-License-Identifier: MIT OR Apache-2.0

//! Arbitrary-precision rationals.
//!
//! [`ExactScalar`] is the carrier of every verified quantity. Values are kept
//! in lowest terms with a positive denominator, so structural equality is
//! numeric equality. In JSON artifacts a value is written as the string
//! `"num/den"` in base 10, including integers (`"-3/1"`).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ExactScalar(BigRational);

/// Converts a finite binary float to the rational it denotes, bit for bit.
pub fn float_to_exact(x: f64) -> Result<ExactScalar> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let exponent_bits = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    // Subnormals share the minimum exponent and lack the implicit bit.
    let (mantissa, exponent) = if exponent_bits == 0 {
        (fraction, -1074)
    } else {
        (fraction | (1u64 << 52), exponent_bits - 1075)
    };
    let mut value = if exponent >= 0 {
        BigRational::from_integer(BigInt::from(mantissa) << exponent as usize)
    } else {
        BigRational::new(
            BigInt::from(mantissa),
            BigInt::one() << ((-exponent) as usize),
        )
    };
    if negative {
        value = -value;
    }
    Ok(ExactScalar(value))
}

impl ExactScalar {
    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    pub fn from_integer(v: i64) -> Self {
        Self(BigRational::from_integer(BigInt::from(v)))
    }

    /// `num / den`; panics when `den == 0`.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Parse("zero denominator".into()));
        }
        Ok(Self(BigRational::new(num, den)))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Self(self.0.abs())
    }

    /// -1, 0 or 1.
    pub fn signum(&self) -> i8 {
        match self.0.numer().sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn recip(&self) -> Self {
        Self(self.0.recip())
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Nearest double (ties-to-even as implemented by `num-rational`).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or_else(|| {
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    /// Finite decimal expansion, available when the denominator has no prime
    /// factors other than 2 and 5 (in particular for every converted float).
    pub fn to_exact_decimal(&self) -> Option<String> {
        let mut den = self.0.denom().clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let (mut twos, mut fives) = (0usize, 0usize);
        while den.is_even() {
            den /= &two;
            twos += 1;
        }
        while (&den % &five).is_zero() {
            den /= &five;
            fives += 1;
        }
        if !den.is_one() {
            return None;
        }
        let digits = twos.max(fives);
        let scale = num_traits::pow(two, digits - twos) * num_traits::pow(five, digits - fives);
        let scaled = self.0.numer().abs() * scale;
        let mut text = scaled.to_string();
        if digits > 0 {
            if text.len() <= digits {
                text = format!("{}{}", "0".repeat(digits + 1 - text.len()), text);
            }
            text.insert(text.len() - digits, '.');
        }
        if self.is_negative() {
            text.insert(0, '-');
        }
        Some(text)
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }
}

/// Least common multiple of the denominators and each value's numerator
/// rescaled to it.
fn common_denominator(values: &[ExactScalar]) -> (Vec<BigInt>, BigInt) {
    let mut lcm = BigInt::one();
    for v in values {
        let d = v.0.denom();
        if !d.is_one() && *d != lcm {
            lcm = lcm.lcm(d);
        }
    }
    let nums = values
        .iter()
        .map(|v| {
            if v.0.denom() == &lcm {
                v.0.numer().clone()
            } else {
                v.0.numer() * (&lcm / v.0.denom())
            }
        })
        .collect();
    (nums, lcm)
}

/// `Σ aᵢ·bᵢ` over integer numerators, reduced once.
pub fn exact_dot(a: &[ExactScalar], b: &[ExactScalar]) -> ExactScalar {
    debug_assert_eq!(a.len(), b.len());
    let (na, da) = common_denominator(a);
    let (nb, db) = common_denominator(b);
    let mut acc = BigInt::zero();
    for (x, y) in na.iter().zip(&nb) {
        if !x.is_zero() && !y.is_zero() {
            acc += x * y;
        }
    }
    ExactScalar(BigRational::new(acc, da * db))
}

/// `Σ vᵢ` reduced once.
pub fn exact_sum(values: &[ExactScalar]) -> ExactScalar {
    match values {
        [] => ExactScalar::zero(),
        [v] => v.clone(),
        _ => {
            let (nums, den) = common_denominator(values);
            ExactScalar(BigRational::new(nums.into_iter().sum(), den))
        }
    }
}

/// `x · W` for a row-major `rows × cols` matrix, one reduction per output.
pub fn exact_left_mul(x: &[ExactScalar], w: &[ExactScalar], cols: usize) -> Vec<ExactScalar> {
    debug_assert_eq!(x.len() * cols, w.len());
    let (nx, dx) = common_denominator(x);
    let (nw, dw) = common_denominator(w);
    let den = dx * dw;
    let mut acc = vec![BigInt::zero(); cols];
    for (r, xr) in nx.iter().enumerate() {
        if xr.is_zero() {
            continue;
        }
        for (a, wv) in acc.iter_mut().zip(&nw[r * cols..(r + 1) * cols]) {
            if !wv.is_zero() {
                *a += xr * wv;
            }
        }
    }
    acc.into_iter()
        .map(|n| ExactScalar(BigRational::new(n, den.clone())))
        .collect()
}

impl From<BigRational> for ExactScalar {
    fn from(v: BigRational) -> Self {
        Self(v)
    }
}

impl From<i64> for ExactScalar {
    fn from(v: i64) -> Self {
        Self::from_integer(v)
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for ExactScalar {
    type Err = Error;

    /// Accepts `"num/den"`, a bare integer, or a finite decimal such as `"-0.125"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("not a rational: {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let num: BigInt = n.trim().parse().map_err(|_| bad())?;
            let den: BigInt = d.trim().parse().map_err(|_| bad())?;
            return Self::from_big(num, den);
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            let negative = int_part.starts_with('-');
            let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let mut num: BigInt = digits.parse().map_err(|_| bad())?;
            if negative {
                num = -num;
            }
            let den = num_traits::pow(BigInt::from(10), frac_part.len());
            return Self::from_big(num, den);
        }
        let num: BigInt = s.parse().map_err(|_| bad())?;
        Ok(Self(BigRational::from_integer(num)))
    }
}

impl Serialize for ExactScalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactScalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $assign_trait:ident, $assign_method:ident) => {
        impl $trait for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: ExactScalar) -> ExactScalar {
                ExactScalar(self.0.$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a ExactScalar> for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &'a ExactScalar) -> ExactScalar {
                ExactScalar(self.0.$method(&rhs.0))
            }
        }
        impl<'a> $trait<&'a ExactScalar> for &'a ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &'a ExactScalar) -> ExactScalar {
                ExactScalar((&self.0).$method(&rhs.0))
            }
        }
        impl $assign_trait for ExactScalar {
            fn $assign_method(&mut self, rhs: ExactScalar) {
                self.0.$assign_method(rhs.0);
            }
        }
        impl<'a> $assign_trait<&'a ExactScalar> for ExactScalar {
            fn $assign_method(&mut self, rhs: &'a ExactScalar) {
                self.0.$assign_method(&rhs.0);
            }
        }
    };
}

forward_binop!(Add, add, AddAssign, add_assign);
forward_binop!(Sub, sub, SubAssign, sub_assign);
forward_binop!(Mul, mul, MulAssign, mul_assign);

impl Div for ExactScalar {
    type Output = ExactScalar;
    fn div(self, rhs: ExactScalar) -> ExactScalar {
        assert!(!rhs.is_zero(), "division by zero");
        ExactScalar(self.0 / rhs.0)
    }
}

impl<'a> Div<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn div(self, rhs: &'a ExactScalar) -> ExactScalar {
        assert!(!rhs.is_zero(), "division by zero");
        ExactScalar(&self.0 / &rhs.0)
    }
}

impl Neg for ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar(-self.0)
    }
}

impl Neg for &ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar(-&self.0)
    }
}

impl Sum for ExactScalar {
    fn sum<I: Iterator<Item = ExactScalar>>(iter: I) -> Self {
        iter.fold(ExactScalar::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a ExactScalar> for ExactScalar {
    fn sum<I: Iterator<Item = &'a ExactScalar>>(iter: I) -> Self {
        iter.fold(ExactScalar::zero(), |acc, x| acc + x)
    }
}

/// Total order helper for sorting slices of rationals.
pub fn cmp_exact(a: &ExactScalar, b: &ExactScalar) -> Ordering {
    a.cmp(b)
}
