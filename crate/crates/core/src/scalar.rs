// SPDX-License-Identifier: MIT OR Apache-2.0

//! The scalar abstraction shared by float training and exact verification.
//!
//! Every operator in [`crate::ops`] and the model forward pass are generic
//! over [`Scalar`]. With `f64` they run the training arithmetic; with
//! [`ExactScalar`] they evaluate the exported rational circuit, where each
//! float parameter is read as the dyadic rational it denotes.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::exact::{exact_dot, exact_sum, exact_left_mul, float_to_exact, ExactScalar};

pub trait Scalar:
    Clone
    + PartialOrd
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(v: i64) -> Self;
    /// Exact for rationals; panics on non-finite input, which parameter
    /// loading rules out.
    fn from_f64(v: f64) -> Self;
    fn from_exact(v: &ExactScalar) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    /// `acc += a * b`.
    fn mul_acc(acc: &mut Self, a: &Self, b: &Self);

    /// `acc += a`.
    fn add_acc(acc: &mut Self, a: &Self);

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = Self::zero();
        for (x, y) in a.iter().zip(b) {
            Self::mul_acc(&mut acc, x, y);
        }
        acc
    }

    /// Elementwise sum of equal-length rows; zeros of width `d` if empty.
    fn sum_rows(rows: &[&[Self]], d: usize) -> Vec<Self> {
        let mut acc = vec![Self::zero(); d];
        for r in rows {
            for (a, x) in acc.iter_mut().zip(r.iter()) {
                Self::add_acc(a, x);
            }
        }
        acc
    }

    /// `x · W`; see [`Matrix::left_mul`].
    fn left_mul(x: &[Self], w: &Matrix<Self>) -> Vec<Self> {
        let mut out = vec![Self::zero(); w.cols];
        for (r, xr) in x.iter().enumerate() {
            if xr.is_zero() {
                continue;
            }
            for (o, wv) in out.iter_mut().zip(w.row(r)) {
                Self::mul_acc(o, xr, wv);
            }
        }
        out
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_exact(v: &ExactScalar) -> Self {
        v.to_f64()
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn mul_acc(acc: &mut Self, a: &Self, b: &Self) {
        *acc += a * b;
    }
    fn add_acc(acc: &mut Self, a: &Self) {
        *acc += a;
    }
}

impl Scalar for ExactScalar {
    fn zero() -> Self {
        ExactScalar::zero()
    }
    fn one() -> Self {
        ExactScalar::one()
    }
    fn from_int(v: i64) -> Self {
        ExactScalar::from_integer(v)
    }
    fn from_f64(v: f64) -> Self {
        float_to_exact(v).expect("finite parameter")
    }
    fn from_exact(v: &ExactScalar) -> Self {
        v.clone()
    }
    fn to_f64(&self) -> f64 {
        ExactScalar::to_f64(self)
    }
    fn is_zero(&self) -> bool {
        ExactScalar::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        ExactScalar::is_positive(self)
    }
    fn mul_acc(acc: &mut Self, a: &Self, b: &Self) {
        if !a.is_zero() && !b.is_zero() {
            *acc += a * b;
        }
    }
    fn add_acc(acc: &mut Self, a: &Self) {
        if !a.is_zero() {
            *acc += a;
        }
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        exact_dot(a, b)
    }
    fn sum_rows(rows: &[&[Self]], d: usize) -> Vec<Self> {
        (0..d)
            .map(|c| {
                let column: Vec<Self> = rows.iter().map(|r| r[c].clone()).collect();
                exact_sum(&column)
            })
            .collect()
    }
    fn left_mul(x: &[Self], w: &Matrix<Self>) -> Vec<Self> {
        exact_left_mul(x, &w.data, w.cols)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> &S {
        &self.data[r * self.cols + c]
    }

    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut S {
        &mut self.data[r * self.cols + c]
    }

    /// `x · W` for a row vector `x` of length `rows`.
    pub fn left_mul(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.rows, "left_mul dimension");
        S::left_mul(x, self)
    }

    pub fn map<T>(&self, f: impl Fn(&S) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Matrix<f64> {
    /// Gradient helper for `y = x · W`: `dW += xᵀ g`, returns `dx = g Wᵀ`.
    pub fn backprop_left_mul(&self, x: &[f64], grad_out: &[f64], grad_weight: &mut Matrix<f64>) -> Vec<f64> {
        let mut grad_x = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += row[c] * grad_out[c];
                grad_weight.data[r * self.cols + c] += x[r] * grad_out[c];
            }
            grad_x[r] = acc;
        }
        grad_x
    }
}

pub fn vec_add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

pub fn vec_add_assign<S: Scalar>(a: &mut [S], b: &[S]) {
    for (x, y) in a.iter_mut().zip(b) {
        S::add_acc(x, y);
    }
}

pub fn mean<S: Scalar>(v: &[S]) -> S {
    let mut acc = S::zero();
    for x in v {
        S::add_acc(&mut acc, x);
    }
    acc / S::from_int(v.len() as i64)
}
