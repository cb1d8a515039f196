//! Scalar abstraction shared by the numeric modules.
//!
//! Tables, distinguishers, the threshold optimizer and the predictor analytics are
//! written once over [`Scalar`] and instantiated with `f64` (the default), `f32`,
//! or [`Exact`] (arbitrary-precision rationals). The exact instantiation lets the
//! success-probability bounds be checked without any rounding at all.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational scalar.
pub type Exact = BigRational;

pub trait Scalar:
    Num + Signed + FromPrimitive + ToPrimitive + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Absolute slack for equality-style checks at requested tolerance `tol`.
    /// Exact types return zero.
    fn slack(tol: f64) -> Self;

    /// `1 - (1 - d)^ell`, evaluated without catastrophic cancellation for small `d`.
    fn one_minus_pow_complement(d: &Self, ell: u64) -> Self {
        Self::one() - num_traits::pow(Self::one() - d.clone(), ell as usize)
    }

    /// Smallest integer `>= self`. Saturates at `u64::MAX`.
    fn ceil_u64(&self) -> u64;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn from_count(v: u64) -> Self {
        Self::from_u64(v).expect("count fits scalar")
    }

    /// `2^e` for integer `e` (negative allowed).
    fn pow2(e: i32) -> Self {
        let p = num_traits::pow(Self::from_count(2), e.unsigned_abs() as usize);
        if e >= 0 {
            p
        } else {
            Self::one() / p
        }
    }

    /// Strictly greater than zero (`0.0` and `-0.0` are not).
    fn positive(&self) -> bool {
        *self > Self::zero()
    }

    /// Strictly less than zero.
    fn negative(&self) -> bool {
        *self < Self::zero()
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    fn slack(tol: f64) -> Self {
        tol
    }

    fn one_minus_pow_complement(d: &Self, ell: u64) -> Self {
        -((ell as f64) * (-*d).ln_1p()).exp_m1()
    }

    fn ceil_u64(&self) -> u64 {
        let c = self.ceil();
        if c >= u64::MAX as f64 {
            u64::MAX
        } else {
            c.max(0.0) as u64
        }
    }
}

impl Scalar for f32 {
    fn slack(tol: f64) -> Self {
        (tol as f32).max(f32::EPSILON * 64.0)
    }

    fn one_minus_pow_complement(d: &Self, ell: u64) -> Self {
        -((ell as f32) * (-*d).ln_1p()).exp_m1()
    }

    fn ceil_u64(&self) -> u64 {
        let c = self.ceil();
        if c >= u64::MAX as f32 {
            u64::MAX
        } else {
            c.max(0.0) as u64
        }
    }
}

impl Scalar for BigRational {
    fn slack(_tol: f64) -> Self {
        BigRational::zero()
    }

    fn ceil_u64(&self) -> u64 {
        let c: BigInt = self.ceil().to_integer();
        if c.is_negative() {
            0
        } else {
            c.to_u64().unwrap_or(u64::MAX)
        }
    }

    fn lit(v: f64) -> Self {
        BigRational::from_float(v).expect("finite literal")
    }
}

/// `|a - b| <= slack(tol)`.
pub fn approx_eq<T: Scalar>(a: &T, b: &T, tol: f64) -> bool {
    (a.clone() - b.clone()).abs() <= T::slack(tol)
}

pub(crate) fn sum<T: Scalar>(it: impl IntoIterator<Item = T>) -> T {
    it.into_iter().fold(T::zero(), |acc, v| acc + v)
}
