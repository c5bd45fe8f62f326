//! Scalar abstraction shared by every numerical module.
//!
//! Everything in this crate is written against [`Real`], which is implemented
//! for `f32` and `f64`. The tolerances quoted throughout the tests assume
//! `f64`; `f32` is supported for memory-bound experimentation.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftNum;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FftNum
    + Default
    + Sum
    + Display
    + LowerExp
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Converts an `f64` literal.
    fn of(v: f64) -> Self;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn as_f64(self) -> f64;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Absolute value without the `Float`/`Signed` method ambiguity.
#[inline]
pub fn abs<T: Real>(x: T) -> T {
    Float::abs(x)
}

/// Squared Euclidean norm.
pub fn norm_sq<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if abs(self.sum) >= abs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.carry);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// `log(sum(exp(v)))` with max-subtraction.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}
