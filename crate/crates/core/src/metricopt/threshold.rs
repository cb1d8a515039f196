use rand::Rng;

use super::Distinguisher;
use crate::bitlin::Stream;
use crate::error::{domain, usage, Result};
use crate::scalar::{sum, Scalar};

/// Tolerance for deciding that a level sits on a breakpoint of `λ'(t)`.
pub(crate) const BREAK_TOL: f64 = 1e-12;

/// Where a level `λ'` falls on one column's piecewise-linear map `t ↦ E max(D(U) - t, 0)`.
#[derive(Clone, Debug)]
pub(crate) struct Position<T> {
    pub threshold: T,
    /// `#{x : D(x) > t}`.
    pub above: usize,
    /// `#{x : D(x) >= t}`.
    pub at_or_above: usize,
    /// Distinct value equal to the threshold, when `λ'` sits on its breakpoint.
    pub boundary: Option<T>,
}

/// Sorted breakpoints of one column `D(·, z)`.
///
/// For the `j`-th largest distinct value `v_j`, `breaks[j] = E max(D(U) - v_j, 0)`.
/// Between breakpoints the map is linear with slope `-at_or_above[j] / 2^n`.
#[derive(Clone, Debug)]
pub(crate) struct Column<T> {
    size: usize,
    values: Vec<T>,
    above: Vec<usize>,
    at_or_above: Vec<usize>,
    breaks: Vec<T>,
    mean: T,
}

impl<T: Scalar> Column<T> {
    pub fn new(raw: &[T]) -> Self {
        let size = raw.len();
        let mut sorted: Vec<T> = raw.to_vec();
        // Stable, descending; ties keep index order.
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("comparable values"));
        let mut values = Vec::new();
        let mut above = Vec::new();
        let mut at_or_above = Vec::new();
        let mut i = 0;
        while i < size {
            let v = sorted[i].clone();
            let start = i;
            while i < size && sorted[i] == v {
                i += 1;
            }
            values.push(v);
            above.push(start);
            at_or_above.push(i);
        }
        let scale = T::from_count(size as u64);
        let mut breaks = vec![T::zero()];
        for j in 1..values.len() {
            let step = (values[j - 1].clone() - values[j].clone()) * T::from_count(at_or_above[j - 1] as u64) / scale.clone();
            let next = breaks[j - 1].clone() + step;
            breaks.push(next);
        }
        let mean = sum(raw.iter().cloned()) / scale;
        Self { size, values, above, at_or_above, breaks, mean }
    }

    pub fn mean(&self) -> &T {
        &self.mean
    }

    pub fn breaks(&self) -> &[T] {
        &self.breaks
    }

    /// Threshold and superlevel counts at level `lambda >= 0`.
    pub fn locate(&self, lambda: &T) -> Position<T> {
        let tol = T::slack(BREAK_TOL);
        let upper = lambda.clone() + tol.clone();
        let j = self.breaks.partition_point(|b| *b <= upper).max(1) - 1;
        let gap = lambda.clone() - self.breaks[j].clone();
        if gap.abs() <= tol {
            return Position {
                threshold: self.values[j].clone(),
                above: self.above[j],
                at_or_above: self.at_or_above[j],
                boundary: Some(self.values[j].clone()),
            };
        }
        let ge = self.at_or_above[j];
        let threshold = self.values[j].clone() - gap * T::from_count(self.size as u64) / T::from_count(ge as u64);
        Position { threshold, above: ge, at_or_above: ge, boundary: None }
    }

    /// Whether `v` lies in the superlevel set at `pos` (strictly above, or on the boundary).
    pub fn classify(pos: &Position<T>, v: &T) -> Level {
        match &pos.boundary {
            Some(b) if v == b => Level::Boundary,
            Some(b) if v > b => Level::Above,
            Some(_) => Level::Below,
            None if *v > pos.threshold => Level::Above,
            None => Level::Below,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Level {
    Above,
    Boundary,
    Below,
}

/// The unique `t` with `E_U max(D(U, z) - t, 0) = lambda_norm`.
///
/// Attainable levels are `0 < λ' <= E D(U,z) + 1` (thresholds in `[-1, 1]`).
pub fn exact_threshold<T: Scalar>(d: &Distinguisher<T>, z: usize, lambda_norm: &T) -> Result<T> {
    if z >= 1 << d.m() {
        return usage(format!("z = {z} out of range for m = {}", d.m()));
    }
    let col = Column::new(&d.column(z));
    check_level(&col, lambda_norm)?;
    Ok(col.locate(lambda_norm).threshold)
}

fn check_level<T: Scalar>(col: &Column<T>, lambda: &T) -> Result<()> {
    let top = col.mean().clone() + T::one();
    if !lambda.positive() || *lambda > top.clone() + T::slack(BREAK_TOL) {
        return domain(format!("level {lambda} outside the attainable range (0, {top}]"));
    }
    Ok(())
}

/// `k(λ') = n - log2 E_z [1 / P(D(U,z) >= t(z))]`, non-decreasing and right-continuous in `λ'`.
pub fn entropy_curve<T: Scalar>(d: &Distinguisher<T>, z_marginal: &[T], lambda_norm: &T) -> Result<f64> {
    if z_marginal.len() != 1 << d.m() {
        return usage(format!("Z marginal has {} entries, expected {}", z_marginal.len(), 1 << d.m()));
    }
    let size = T::from_count(1 << d.n());
    let mut expect = T::zero();
    for (z, pz) in z_marginal.iter().enumerate() {
        if !pz.positive() {
            continue;
        }
        let col = Column::new(&d.column(z));
        check_level(&col, lambda_norm)?;
        let pos = col.locate(lambda_norm);
        expect = expect + pz.clone() * size.clone() / T::from_count(pos.at_or_above as u64);
    }
    Ok(d.n() as f64 - expect.to_f64_lossy().log2())
}

/// Outcome of the sampled threshold search.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSearch {
    pub threshold: f64,
    pub rounds: u32,
    pub evaluations: u64,
    /// The search stopped inside the acceptance window rather than by interval width.
    pub accepted: bool,
}

/// `2 log2(12/δ) e^{-Nδ²/3}`: the failure probability bound of [`find_threshold_sampled`].
pub fn find_threshold_failure_bound(delta: f64, samples: u64) -> f64 {
    2.0 * (12.0 / delta).log2() * (-(samples as f64) * delta * delta / 3.0).exp()
}

/// Bisection for a threshold `t'` with `E max(D(U) - t', 0) ∈ [λ', λ' + δ]` using only samples of `D`.
///
/// `eval` maps an input in `0..2^n` to `D(x) ∈ [0, 1]`. Each round draws `samples`
/// fresh uniform inputs, moves up when the estimate exceeds `λ' + 2δ/3`, down when it
/// falls below `λ' + δ/3`, and returns immediately otherwise. The search stops once the
/// bracket is narrower than `δ/12`; a final midpoint below `-1 + δ/12` is reported as `-1`.
pub fn find_threshold_sampled<F: FnMut(u64) -> f64>(
    mut eval: F,
    n: usize,
    lambda_norm: f64,
    delta: f64,
    samples: u64,
    rng: &mut Stream,
) -> Result<ThresholdSearch> {
    if !(lambda_norm > 0.0 && lambda_norm < 1.0) {
        return usage(format!("λ' = {lambda_norm} must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta <= 0.25) {
        return usage(format!("δ = {delta} must lie in (0, 1/4]"));
    }
    if samples == 0 {
        return usage("at least one sample per round is required");
    }
    if n == 0 || n > 63 {
        return usage(format!("input length {n} unsupported"));
    }
    let domain_size = 1u64 << n;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut rounds = 0;
    let mut evaluations = 0;
    let mut t;
    loop {
        t = 0.5 * (lo + hi);
        rounds += 1;
        let mut acc = 0.0;
        for _ in 0..samples {
            let x = rng.gen_range(0..domain_size);
            acc += (eval(x) - t).max(0.0);
        }
        evaluations += samples;
        let estimate = acc / samples as f64;
        if estimate > lambda_norm + 2.0 * delta / 3.0 {
            lo = t;
        } else if estimate < lambda_norm + delta / 3.0 {
            hi = t;
        } else {
            return Ok(ThresholdSearch { threshold: t, rounds, evaluations, accepted: true });
        }
        if hi - lo <= delta / 12.0 {
            break;
        }
    }
    if t < -1.0 + delta / 12.0 {
        t = -1.0;
    }
    Ok(ThresholdSearch { threshold: t, rounds, evaluations, accepted: false })
}
