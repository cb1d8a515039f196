//! Rejection-sampling predictor built from a threshold-shifted distinguisher, with its
//! closed-form success probability and the distinguisher-to-guesser attack.

use rand::Rng;

use crate::bitlin::{BitVec, Stream};
use crate::distmodel::JointTable;
use crate::error::{domain, usage, Error, Result};
use crate::metricopt::{modified_distinguisher, optimal_distribution, Distinguisher, OptimalDistribution};
use crate::scalar::{sum, Scalar};

/// Absolute slack on float comparisons of success probabilities.
pub const COMPARISON_SLACK: f64 = 1e-12;

/// Round budget of the predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictorParams {
    pub ell: u64,
}

impl PredictorParams {
    pub fn new(ell: u64) -> Result<Self> {
        if ell == 0 {
            return usage("the predictor needs at least one round");
        }
        Ok(Self { ell })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictOutcome {
    Guess(BitVec),
    Abort,
}

impl PredictOutcome {
    pub fn guess(self) -> Option<BitVec> {
        match self {
            PredictOutcome::Guess(x) => Some(x),
            PredictOutcome::Abort => None,
        }
    }
}

/// `g(d) = (1 - (1 - d)^ℓ) / d`, with `g(0) = ℓ`.
pub fn g_eval<T: Scalar>(d: &T, ell: u64) -> Result<T> {
    if d.negative() || *d > T::one() {
        return usage(format!("g is defined on [0, 1], got {d}"));
    }
    if d.is_zero() {
        return Ok(T::from_count(ell));
    }
    Ok(T::one_minus_pow_complement(d, ell) / d.clone())
}

/// `h(s) = (1 - (1 - s)^ℓ)(1 + a/s)` on `s ∈ (0, 1]`.
pub fn h_eval(s: f64, a: f64, ell: u64) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return usage(format!("h is defined on (0, 1], got {s}"));
    }
    Ok(f64::one_minus_pow_complement(&s, ell) * (1.0 + a / s))
}

/// Draws up to `ℓ` uniform candidates `x` and accepts each with probability `D'(x,z)/2`.
///
/// Counts every evaluation of `D'`, the desk-scale stand-in for circuit size.
#[derive(Debug)]
pub struct Predictor<'a> {
    dp: &'a Distinguisher<f64>,
    params: PredictorParams,
    evaluations: u64,
}

impl<'a> Predictor<'a> {
    pub fn new(dp: &'a Distinguisher<f64>, params: PredictorParams) -> Self {
        Self { dp, params, evaluations: 0 }
    }

    pub fn sample(&mut self, z: usize, rng: &mut Stream) -> PredictOutcome {
        let n = self.dp.n();
        for _ in 0..self.params.ell {
            let x = rng.gen_range(0..1usize << n);
            self.evaluations += 1;
            let accept = 0.5 * self.dp.value(x, z).clamp(0.0, 2.0);
            if rng.gen::<f64>() < accept {
                return PredictOutcome::Guess(BitVec::truncated(x as u64, n));
            }
        }
        PredictOutcome::Abort
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// One run of the predictor on side information `z`.
pub fn predictor_sample(z: usize, dp: &Distinguisher<f64>, params: PredictorParams, rng: &mut Stream) -> Result<PredictOutcome> {
    if z >= 1 << dp.m() {
        return usage(format!("z = {z} out of range for m = {}", dp.m()));
    }
    Ok(Predictor::new(dp, params).sample(z, rng))
}

/// `Pr[predictor aborts | z] = (1 - E D'(U,z)/2)^ℓ`.
pub fn abort_prob<T: Scalar>(dp: &Distinguisher<T>, z: usize, ell: u64) -> T {
    let s = dp.uniform_mean(z) / T::from_count(2);
    T::one() - T::one_minus_pow_complement(&s, ell)
}

/// `Pr[predictor(Z) = X] = Σ_z Σ_x P(x,z) 2^{-n-1} D'(x,z) g(E D'(U,z)/2)`.
pub fn exact_success_prob<T: Scalar>(t: &JointTable<T>, dp: &Distinguisher<T>, ell: u64) -> Result<T> {
    dp.check_shape(t.n(), t.m())?;
    let two = T::from_count(2);
    let scale = T::pow2(t.n() as i32 + 1);
    let mut total = T::zero();
    for z in 0..t.z_count() {
        let s = T::min_of(dp.uniform_mean(z) / two.clone(), T::one());
        let g = g_eval(&s, ell)?;
        let hit = sum((0..t.x_count()).map(|x| t.prob(x, z).clone() * dp.value(x, z).clone()));
        total = total + g * hit / scale.clone();
    }
    Ok(total)
}

/// Empirical success frequency of the predictor against samples of `(X, Z)`.
pub fn monte_carlo_success(t: &JointTable<f64>, dp: &Distinguisher<f64>, params: PredictorParams, trials: u64, rng: &mut Stream) -> Result<f64> {
    dp.check_shape(t.n(), t.m())?;
    let sampler = t.sampler();
    let mut predictor = Predictor::new(dp, params);
    let mut hits = 0u64;
    for _ in 0..trials {
        let (x, z) = sampler.sample(rng);
        if predictor.sample(z, rng).guess().is_some_and(|g| g.bits() == x as u64) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Result of converting a distinguisher into a guesser for `X` given `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    /// Advantage of `D` over the optimal `Y*` of entropy `k`.
    pub epsilon: f64,
    pub ell: u64,
    pub success_exact: f64,
    /// `2^{-k}(1 + 2^{k-n} ε)`.
    pub bound: f64,
    pub pass: bool,
    /// `E_U D'(U, z)`, common to every `z`.
    pub lambda_norm: f64,
}

/// `⌈2 · 2^{n-k} / ε⌉`.
pub fn round_budget<T: Scalar>(n: usize, k: f64, epsilon: &T) -> Result<u64> {
    if !epsilon.positive() {
        return Err(Error::HypothesisViolated(format!("advantage ε = {epsilon} is not positive")));
    }
    let ell = T::from_count(2) * T::lit((n as f64 - k).exp2()) / epsilon.clone();
    let ell = ell.ceil_u64();
    if ell == u64::MAX {
        return domain(format!("round budget for ε = {epsilon} overflows"));
    }
    Ok(ell.max(1))
}

/// `2^{-k}(1 + 2^{k-n} ε)`.
pub fn success_bound<T: Scalar>(n: usize, k: f64, epsilon: &T) -> T {
    T::lit((-k).exp2()) * (T::one() + T::lit((k - n as f64).exp2()) * epsilon.clone())
}

/// Builds `Y*`, the thresholds and `D'`, then evaluates the predictor exactly.
/// Success and bound are compared in `T`.
pub fn predictor_attack<T: Scalar>(t: &JointTable<T>, d: &Distinguisher<T>, k: f64) -> Result<AttackReport> {
    let opt = optimal_distribution(d, t, k)?;
    let epsilon = d.expectation(t)? - opt.objective.clone();
    attack_with(t, d, k, &opt, epsilon)
}

/// As [`predictor_attack`], with `ε` supplied instead of measured; it only sets `ℓ` and the bound.
pub fn predictor_attack_with_epsilon<T: Scalar>(t: &JointTable<T>, d: &Distinguisher<T>, k: f64, epsilon: f64) -> Result<AttackReport> {
    let opt = optimal_distribution(d, t, k)?;
    attack_with(t, d, k, &opt, T::lit(epsilon))
}

fn attack_with<T: Scalar>(t: &JointTable<T>, d: &Distinguisher<T>, k: f64, opt: &OptimalDistribution<T>, epsilon: T) -> Result<AttackReport> {
    let n = d.n();
    let ell = round_budget(n, k, &epsilon)?;
    let dp = modified_distinguisher(d, &opt.profile)?;
    let success = exact_success_prob(t, &dp, ell)?;
    let bound = success_bound(n, k, &epsilon);
    Ok(AttackReport {
        epsilon: epsilon.to_f64_lossy(),
        ell,
        success_exact: success.to_f64_lossy(),
        bound: bound.to_f64_lossy(),
        pass: success >= bound,
        lambda_norm: opt.profile.lambda_norm.to_f64_lossy(),
    })
}

/// Instance with a positive advantage at entropy `k`: `X | z` is uniform on a random
/// set `S_z` of size `2^{⌈k⌉-1}` where `D ∈ [0.9, 1]`, and `D < 0.6` elsewhere.
pub fn planted_attack_instance(n: usize, m: usize, k: f64, rng: &mut Stream) -> Result<(Distinguisher<f64>, JointTable<f64>)> {
    if !(k >= 1.0 && k < n as f64) {
        return usage(format!("planted instance needs 1 <= k < n, got k = {k}, n = {n}"));
    }
    let support = 1usize << (k.ceil() as usize - 1);
    let mut inside = vec![false; 1 << (n + m)];
    for z in 0..1usize << m {
        for x in rand::seq::index::sample(rng, 1 << n, support) {
            inside[(x << m) | z] = true;
        }
    }
    let values = inside.iter().map(|&s| if s { 0.9 + 0.1 * rng.gen::<f64>() } else { 0.6 * rng.gen::<f64>() }).collect();
    let weights = inside.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    Ok((Distinguisher::new(n, m, values)?, JointTable::from_weights(n, m, weights)?))
}

/// Exact success probabilities of two nested distinguishers.
#[derive(Clone, Debug, PartialEq)]
pub struct Degradation {
    pub s1: f64,
    pub s2: f64,
    /// `max_z (E D2(U,z) - E D1(U,z))`.
    pub delta: f64,
    /// `s2 >= (1 - ℓδ/2) s1`.
    pub ok: bool,
}

/// Compares the predictor built on `d1` with the one built on a pointwise larger `d2`.
pub fn approx_distinguisher_degradation<T: Scalar>(
    t: &JointTable<T>,
    d1: &Distinguisher<T>,
    d2: &Distinguisher<T>,
    ell: u64,
) -> Result<Degradation> {
    d1.check_shape(t.n(), t.m())?;
    d2.check_shape(t.n(), t.m())?;
    if d1.values().iter().zip(d2.values()).any(|(a, b)| b < a) {
        return usage("the second distinguisher must dominate the first pointwise");
    }
    let delta = (0..t.z_count())
        .map(|z| (d2.uniform_mean(z) - d1.uniform_mean(z)).to_f64_lossy())
        .fold(0.0, f64::max);
    let s1 = exact_success_prob(t, d1, ell)?.to_f64_lossy();
    let s2 = exact_success_prob(t, d2, ell)?.to_f64_lossy();
    let floor = (1.0 - ell as f64 * delta / 2.0) * s1;
    Ok(Degradation { s1, s2, delta, ok: s2 >= floor - COMPARISON_SLACK })
}
