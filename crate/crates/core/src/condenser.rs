//! The Goldreich-Levin condenser `K = R·X` and the reduction that turns a key
//! predictor into a recoverer of `X`.
//!
//! Given an adversary guessing `R·x` from `(z, R)` with probability `2^{-k+Δ}`,
//! [`reduction_b`] picks a bit position `i`, fixes random rows `r^{i-1}`, and for each
//! guess `a^{i-1}` of their inner products with `x` turns the adversary into an
//! erasing predictor for `r_i·x`; Hadamard list decoding plus an `Eq` oracle then
//! recovers `x`.

use std::collections::HashMap;

use rand::Rng;

use crate::bitlin::{mask, mat_vec_mul, BitMatrix, BitVec, Stream};
use crate::distmodel::{planted_source, Membership, PlantedSource};
use crate::error::{domain, usage, Result};
use crate::hadamard::{list_size_for_ratio, recover_with_eq, ErasureOracle};

/// Largest `n` and `k` the condenser experiment accepts.
pub const MAX_CONDENSER_N: usize = 14;
pub const MAX_CONDENSER_K: usize = 8;

/// `z = 1.6449`, the one-sided 95% normal quantile.
pub const Z_95_ONE_SIDED: f64 = 1.6448536269514722;

/// Guesses the key `R·x` from the side information `z` and the matrix `R`.
pub trait KeyAdversary {
    fn key_len(&self) -> usize;

    fn guess(&mut self, z: u64, r: &BitMatrix, rng: &mut Stream) -> BitVec;
}

impl<A: KeyAdversary + ?Sized> KeyAdversary for &mut A {
    fn key_len(&self) -> usize {
        (**self).key_len()
    }

    fn guess(&mut self, z: u64, r: &BitMatrix, rng: &mut Stream) -> BitVec {
        (**self).guess(z, r, rng)
    }
}

/// `K = R·x`.
pub fn gl_condense(x: &BitVec, r: &BitMatrix) -> Result<BitVec> {
    mat_vec_mul(r, x)
}

/// Outputs a uniform key.
#[derive(Clone, Copy, Debug)]
pub struct UniformAdversary {
    pub k: usize,
}

impl KeyAdversary for UniformAdversary {
    fn key_len(&self) -> usize {
        self.k
    }

    fn guess(&mut self, _z: u64, _r: &BitMatrix, rng: &mut Stream) -> BitVec {
        BitVec::random(self.k, rng)
    }
}

/// With probability `q`, answers `R·x` for the `x` it holds for `z`; otherwise
/// (or for unknown `z`) guesses uniformly.
#[derive(Clone, Debug)]
pub struct PlantedKeyAdversary {
    k: usize,
    q: f64,
    lookup: HashMap<u64, u64>,
}

impl PlantedKeyAdversary {
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `q + (1 - q) 2^{-k}` against the values it holds.
    pub fn advantage(&self) -> f64 {
        self.q + (1.0 - self.q) * (-(self.k as f64)).exp2()
    }
}

impl KeyAdversary for PlantedKeyAdversary {
    fn key_len(&self) -> usize {
        self.k
    }

    fn guess(&mut self, z: u64, r: &BitMatrix, rng: &mut Stream) -> BitVec {
        if rng.gen::<f64>() < self.q {
            if let Some(&x) = self.lookup.get(&z) {
                return BitVec::truncated(r.mul_unchecked(x), self.k);
            }
        }
        BitVec::random(self.k, rng)
    }
}

/// Adversary holding the secrets `(z, x)`, which must lie in the source's supports.
pub fn planted_key_adversary(
    source: &PlantedSource,
    secrets: impl IntoIterator<Item = (u64, BitVec)>,
    q: f64,
) -> Result<PlantedKeyAdversary> {
    if !(0.0..=1.0).contains(&q) {
        return usage(format!("q = {q} outside [0, 1]"));
    }
    let mut lookup = HashMap::new();
    for (z, x) in secrets {
        if z >= 1 << source.m() || !source.support(z as usize).contains(&x.bits()) {
            return usage(format!("({x}, {z}) is not in the support of the source"));
        }
        lookup.insert(z, x.bits());
    }
    Ok(PlantedKeyAdversary { k: source.k(), q, lookup })
}

/// Flips a fair coin: defers to the inner adversary on heads, guesses uniformly on tails.
/// Every key then has probability at least `2^{-k-1}`.
#[derive(Clone, Debug)]
pub struct DummyCoin<A> {
    inner: A,
}

pub fn dummy_coin_wrap<A: KeyAdversary>(inner: A) -> DummyCoin<A> {
    DummyCoin { inner }
}

impl<A> DummyCoin<A> {
    pub fn into_inner(self) -> A {
        self.inner
    }
}

impl<A: KeyAdversary> KeyAdversary for DummyCoin<A> {
    fn key_len(&self) -> usize {
        self.inner.key_len()
    }

    fn guess(&mut self, z: u64, r: &BitMatrix, rng: &mut Stream) -> BitVec {
        if rng.gen::<bool>() {
            self.inner.guess(z, r, rng)
        } else {
            BitVec::random(self.inner.key_len(), rng)
        }
    }
}

/// Predictor `P_i` for `r_i·x`: fixed rows `r^{i-1}`, fresh rows `r_{i+1}..r_k` per
/// query, answering `Â_i` when the adversary's first `i-1` key bits equal `a^{i-1}`.
#[derive(Debug)]
pub struct PrefixPredictor<'a, A> {
    adversary: &'a mut A,
    z: u64,
    i: usize,
    prefix_bits: u64,
    rows: BitMatrix,
    invocations: u64,
}

impl<A: KeyAdversary> ErasureOracle for PrefixPredictor<'_, A> {
    fn query(&mut self, r: BitVec, rng: &mut Stream) -> Option<bool> {
        let k = self.rows.rows();
        self.rows.set_row_bits(self.i - 1, r.bits());
        self.rows.randomize_rows(self.i, k, rng);
        self.invocations += 1;
        let key = self.adversary.guess(self.z, &self.rows, rng).bits();
        if key & mask(self.i - 1) == self.prefix_bits {
            Some((key >> (self.i - 1)) & 1 == 1)
        } else {
            None
        }
    }
}

impl<'a, A: KeyAdversary> PrefixPredictor<'a, A> {
    pub fn invocations(&self) -> u64 {
        self.invocations
    }
}

/// Builds `P_i` (with `i` counted from 1) over `{0,1}^n`.
pub fn prefix_predictor<'a, A: KeyAdversary>(
    adversary: &'a mut A,
    z: u64,
    i: usize,
    r_prefix: &[BitVec],
    a_prefix: &BitVec,
    n: usize,
) -> Result<PrefixPredictor<'a, A>> {
    let k = adversary.key_len();
    if i == 0 || i > k {
        return usage(format!("bit position {i} outside 1..={k}"));
    }
    if r_prefix.len() != i - 1 || a_prefix.len() != i - 1 {
        return usage(format!("position {i} needs {} prefix rows and bits", i - 1));
    }
    let mut rows = BitMatrix::zeros(k, n);
    for (j, r) in r_prefix.iter().enumerate() {
        if r.len() != n {
            return usage(format!("prefix row of length {} for n = {n}", r.len()));
        }
        rows.set_row(j, *r);
    }
    Ok(PrefixPredictor { adversary, z, i, prefix_bits: a_prefix.bits(), rows, invocations: 0 })
}

/// Parameters of the reduction: key length `k`, gap `Δ`, margin `δ = (Δ-2) ln2 / (2k)`,
/// and the iteration budget `⌈2k/δ⌉`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReductionParams {
    pub k: usize,
    pub gap: u32,
    pub delta: f64,
    pub iterations: u64,
}

impl ReductionParams {
    pub fn new(k: usize, gap: u32) -> Result<Self> {
        if k == 0 || k > MAX_CONDENSER_K {
            return usage(format!("key length {k} outside 1..={MAX_CONDENSER_K}"));
        }
        if gap < 3 {
            return domain(format!("gap Δ = {gap} gives no guarantee; need Δ >= 3"));
        }
        let delta = (gap as f64 - 2.0) * std::f64::consts::LN_2 / (2.0 * k as f64);
        let iterations = (2.0 * k as f64 / delta).ceil() as u64;
        Ok(Self { k, gap, delta, iterations })
    }

    /// List exponent for position `i`, from `(e+c)/(c-e)^2 <= 2^i/δ^2`.
    pub fn list_exponent(&self, n: usize, i: usize) -> Result<usize> {
        list_size_for_ratio(n, (i as f64).exp2() / (self.delta * self.delta))
    }

    /// Worst-case adversary invocations of one reduction run:
    /// `iterations · 2^{k-1} · n · 2^{l(k)}`.
    pub fn invocation_ceiling(&self, n: usize) -> Result<u64> {
        let l = self.list_exponent(n, self.k)?;
        Ok(self.iterations * (1u64 << (self.k - 1)) * n as u64 * (1u64 << l))
    }
}

/// Outcome of one run of [`reduction_b`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionOutcome {
    pub value: Option<BitVec>,
    pub iterations: u64,
    pub decodes: u64,
    pub invocations: u64,
}

/// Recovers `x` from `z` using the key adversary and the membership oracle.
pub fn reduction_b<A: KeyAdversary, M: Membership + ?Sized>(
    adversary: &mut A,
    z: u64,
    eq: &M,
    params: &ReductionParams,
    n: usize,
    rng: &mut Stream,
) -> Result<ReductionOutcome> {
    let k = params.k;
    if adversary.key_len() != k {
        return usage(format!("adversary outputs {} bits, parameters say {k}", adversary.key_len()));
    }
    let lists: Vec<usize> = (1..=k).map(|i| params.list_exponent(n, i)).collect::<Result<_>>()?;
    let mut decodes = 0;
    let mut invocations = 0;
    for iteration in 1..=params.iterations {
        let i = rng.gen_range(1..=k);
        let r_prefix: Vec<BitVec> = (0..i - 1).map(|_| BitVec::random(n, rng)).collect();
        for a in 0..1u64 << (i - 1) {
            let a_prefix = BitVec::truncated(a, i - 1);
            let mut oracle = prefix_predictor(adversary, z, i, &r_prefix, &a_prefix, n)?;
            let found = recover_with_eq(&mut oracle, eq, n, lists[i - 1], 1, rng)?;
            decodes += 1;
            invocations += oracle.invocations();
            if found.value.is_some() {
                return Ok(ReductionOutcome { value: found.value, iterations: iteration, decodes, invocations });
            }
        }
    }
    Ok(ReductionOutcome { value: None, iterations: params.iterations, decodes, invocations })
}

/// `q` making `q + (1-q) 2^{-k}` equal to `advantage`.
pub fn planting_rate(k: usize, advantage: f64) -> Result<f64> {
    let floor = (-(k as f64)).exp2();
    if !(floor..=1.0).contains(&advantage) {
        return domain(format!("advantage {advantage} outside [2^-{k}, 1]"));
    }
    Ok((advantage - floor) / (1.0 - floor))
}

/// One-sided Wilson lower confidence bound for a binomial proportion.
pub fn wilson_lower(successes: u64, trials: u64, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let nt = trials as f64;
    let p = successes as f64 / nt;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * nt);
    let spread = z * (p * (1.0 - p) / nt + z2 / (4.0 * nt * nt)).sqrt();
    ((centre - spread) / (1.0 + z2 / nt)).max(0.0)
}

/// Settings of [`condenser_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct CondenserConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub gap: u32,
    /// Advantage of the planted adversary; `None` plants it at `2^{-k+Δ}`.
    pub adversary_advantage: Option<f64>,
    pub trials: u64,
    pub seed: u64,
    /// Cap on adversary invocations per trial; `None` uses [`ReductionParams::invocation_ceiling`].
    pub invocation_ceiling: Option<u64>,
}

impl CondenserConfig {
    pub fn new(n: usize, k: usize, trials: u64, seed: u64) -> Self {
        Self { n, k, m: 4, gap: 3, adversary_advantage: None, trials, seed, invocation_ceiling: None }
    }
}

/// Aggregate of a condenser experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct CondenserReport {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub gap: u32,
    pub q: f64,
    pub adversary_advantage: f64,
    pub trials: u64,
    pub recovered: u64,
    pub rate: f64,
    pub rate_lower_95: f64,
    /// `2^{-k+Δ-3}`.
    pub target: f64,
    pub max_invocations: u64,
    pub total_invocations: u64,
    pub invocation_ceiling: u64,
    pub within_ceiling: bool,
    /// Largest list exponent used, `l(k)`.
    pub list_exponent: usize,
    pub pass: bool,
}

/// Plants an adversary of the configured advantage on a planted source, wraps it
/// with the dummy coin, and measures how often the reduction recovers `X`.
///
/// Trials use streams `(seed, t)`; the source comes from stream `(seed, u64::MAX)`.
/// The success accounting of the reduction treats its iterations as independent;
/// the measured rate is the end-to-end check of the bound, not of that assumption.
pub fn condenser_experiment(cfg: &CondenserConfig) -> Result<CondenserReport> {
    let (n, k) = (cfg.n, cfg.k);
    if k == 0 || k > n || n > MAX_CONDENSER_N || k > MAX_CONDENSER_K {
        return usage(format!("need 1 <= k <= n <= {MAX_CONDENSER_N} and k <= {MAX_CONDENSER_K}; got n = {n}, k = {k}"));
    }
    if cfg.trials == 0 {
        return usage("at least one trial is required");
    }
    let params = ReductionParams::new(k, cfg.gap)?;
    let advantage = cfg.adversary_advantage.unwrap_or_else(|| (cfg.gap as f64 - k as f64).exp2().min(1.0));
    let q = planting_rate(k, advantage)?;
    let ceiling = match cfg.invocation_ceiling {
        Some(c) => c,
        None => params.invocation_ceiling(n)?,
    };
    let source = planted_source(n, k, cfg.m, &mut crate::bitlin::stream(cfg.seed, u64::MAX))?;

    let mut recovered = 0;
    let mut max_invocations = 0;
    let mut total_invocations = 0;
    for t in 0..cfg.trials {
        let mut rng = crate::bitlin::stream(cfg.seed, t);
        let (x, z) = source.sample(&mut rng);
        let planted = planted_key_adversary(&source, [(z, x)], q)?;
        let mut adversary = dummy_coin_wrap(planted);
        let eq = source.eq_oracle(x);
        let out = reduction_b(&mut adversary, z, &eq, &params, n, &mut rng)?;
        if out.value == Some(x) {
            recovered += 1;
        }
        max_invocations = max_invocations.max(out.invocations);
        total_invocations += out.invocations;
    }
    let rate = recovered as f64 / cfg.trials as f64;
    let rate_lower_95 = wilson_lower(recovered, cfg.trials, Z_95_ONE_SIDED);
    let target = (cfg.gap as f64 - k as f64 - 3.0).exp2();
    let within_ceiling = max_invocations <= ceiling;
    Ok(CondenserReport {
        n,
        k,
        m: cfg.m,
        gap: cfg.gap,
        q,
        adversary_advantage: advantage,
        trials: cfg.trials,
        recovered,
        rate,
        rate_lower_95,
        target,
        max_invocations,
        total_invocations,
        invocation_ceiling: ceiling,
        within_ceiling,
        list_exponent: params.list_exponent(n, k)?,
        pass: rate_lower_95 > target && within_ceiling,
    })
}
