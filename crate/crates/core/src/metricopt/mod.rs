//! Real-valued distinguishers and the entropy-constrained maximizer
//! `max E D(Y,Z) s.t. H̃∞(Y|Z) >= k`.
//!
//! The maximizer is characterized by a threshold profile: per-`z` cut levels `t(z)`
//! with a common normalized super-threshold mass `λ' = E_U max(D(U,z) - t(z), 0)`.
//! `λ'` is always stored in expectation units (the sum form is `2^n λ'`).

mod optimizer;
mod threshold;

use std::path::Path;

pub use optimizer::{
    advantage, brute_force_opt, kkt_violation, modified_distinguisher, optimal_distribution, OptimalDistribution,
    BRUTE_FORCE_MAX_M, BRUTE_FORCE_MAX_N,
};
pub use threshold::{
    entropy_curve, exact_threshold, find_threshold_failure_bound, find_threshold_sampled, ThresholdSearch,
};

use crate::distmodel::{read_dense, write_dense, ConditionalTable, JointTable, MAX_TABLE_BITS};
use crate::error::{usage, Result};
use crate::scalar::{sum, Scalar};

/// Declared output range of a distinguisher.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputRange {
    /// `[0, 1]`, an ordinary distinguisher.
    Unit,
    /// `[0, 2]`, a threshold-shifted distinguisher `D'`.
    Shifted,
}

impl OutputRange {
    fn upper<T: Scalar>(self) -> T {
        match self {
            OutputRange::Unit => T::one(),
            OutputRange::Shifted => T::from_count(2),
        }
    }
}

/// Table-backed map `{0,1}^n × {0,1}^m -> [0, 1]` (or `[0, 2]` when shifted),
/// indexed `x · 2^m + z` like [`JointTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distinguisher<T = f64> {
    n: usize,
    m: usize,
    values: Vec<T>,
    range: OutputRange,
}

impl<T: Scalar> Distinguisher<T> {
    pub fn new(n: usize, m: usize, values: Vec<T>) -> Result<Self> {
        Self::with_range(n, m, values, OutputRange::Unit)
    }

    pub fn with_range(n: usize, m: usize, values: Vec<T>, range: OutputRange) -> Result<Self> {
        if n == 0 || n + m > MAX_TABLE_BITS {
            return usage(format!("distinguisher shape ({n}, {m}) outside desk-scale caps"));
        }
        if values.len() != 1usize << (n + m) {
            return usage(format!("expected {} values, got {}", 1usize << (n + m), values.len()));
        }
        let hi: T = range.upper();
        if let Some(bad) = values.iter().find(|v| v.negative() || **v > hi) {
            return usage(format!("value {bad} outside the declared range {range:?}"));
        }
        Ok(Self { n, m, values, range })
    }

    /// Builds the table by evaluating `f(x, z)` everywhere.
    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(1 << (n + m));
        for x in 0..1usize << n {
            for z in 0..1usize << m {
                values.push(f(x, z));
            }
        }
        Self::new(n, m, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn range(&self) -> OutputRange {
        self.range
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn value(&self, x: usize, z: usize) -> &T {
        &self.values[(x << self.m) | z]
    }

    /// `D(·, z)` as a vector over `x`.
    pub fn column(&self, z: usize) -> Vec<T> {
        (0..1usize << self.n).map(|x| self.value(x, z).clone()).collect()
    }

    /// `E D(U, z)` for uniform `U`.
    pub fn uniform_mean(&self, z: usize) -> T {
        sum((0..1usize << self.n).map(|x| self.value(x, z).clone())) / T::from_count(1 << self.n)
    }

    /// `E D(X, Z)` under the joint table.
    pub fn expectation(&self, t: &JointTable<T>) -> Result<T> {
        self.check_shape(t.n(), t.m())?;
        Ok(sum(self.values.iter().zip(t.probs()).map(|(d, p)| d.clone() * p.clone())))
    }

    /// `E_z E D(Y|Z=z, z)` for a conditional table.
    pub fn conditional_expectation(&self, y: &ConditionalTable<T>) -> Result<T> {
        self.check_shape(y.n(), y.m())?;
        Ok(sum(y.marginal().iter().enumerate().map(|(z, pz)| pz.clone() * self.row_expectation(y.row(z), z))))
    }

    /// `Σ_x D(x, z) p(x)`.
    pub fn row_expectation(&self, p: &[T], z: usize) -> T {
        sum(p.iter().enumerate().map(|(x, px)| px.clone() * self.value(x, z).clone()))
    }

    pub(crate) fn check_shape(&self, n: usize, m: usize) -> Result<()> {
        if self.n != n || self.m != m {
            return usage(format!("distinguisher shape ({}, {}) vs table shape ({n}, {m})", self.n, self.m));
        }
        Ok(())
    }

    pub fn convert<U: Scalar>(&self) -> Distinguisher<U> {
        Distinguisher {
            n: self.n,
            m: self.m,
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            range: self.range,
        }
    }
}

impl Distinguisher<f64> {
    /// Same layout as [`JointTable::store`], values in `[0, 1]`.
    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        write_dense(path.as_ref(), self.n, self.m, &self.values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (n, m, values) = read_dense(path.as_ref())?;
        Self::new(n, m, values)
    }
}

/// Per-`z` thresholds and the common normalized level `λ'`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdProfile<T = f64> {
    pub thresholds: Vec<T>,
    pub lambda_norm: T,
}
