//! Explicit joint distributions `(X, Z)` over `{0,1}^n × {0,1}^m` and exact entropy meters.
//!
//! Dense tables are indexed `x · 2^m + z`. The mass-sum tolerance on construction is
//! `1e-9`; construction never renormalizes, use [`JointTable::from_weights`]
//! when the input is unnormalized.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bitlin::{BitVec, Stream};
use crate::error::{usage, Error, Result};
use crate::scalar::{sum, Scalar};

/// Largest `n + m` a dense table may have.
pub const MAX_TABLE_BITS: usize = 24;

/// Mass-sum tolerance applied when tables are built or loaded.
pub const MASS_TOLERANCE: f64 = 1e-9;

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return usage("X must have at least one bit");
    }
    if n + m > MAX_TABLE_BITS {
        return usage(format!("n + m = {} exceeds the desk-scale cap of {MAX_TABLE_BITS}", n + m));
    }
    Ok(())
}

fn check_distribution<T: Scalar>(p: &[T], what: &str) -> Result<()> {
    if let Some(bad) = p.iter().find(|v| v.negative()) {
        return usage(format!("{what} has negative entry {bad}"));
    }
    let total = sum(p.iter().cloned());
    if (total.clone() - T::one()).abs() > T::slack(MASS_TOLERANCE) {
        return usage(format!("{what} has total mass {total}, expected 1"));
    }
    Ok(())
}

/// Probability table for `(X, Z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable<T = f64> {
    n: usize,
    m: usize,
    probs: Vec<T>,
}

impl<T: Scalar> JointTable<T> {
    pub fn new(n: usize, m: usize, probs: Vec<T>) -> Result<Self> {
        check_shape(n, m)?;
        if probs.len() != 1usize << (n + m) {
            return usage(format!("expected {} probabilities, got {}", 1usize << (n + m), probs.len()));
        }
        check_distribution(&probs, "joint table")?;
        Ok(Self { n, m, probs })
    }

    /// Normalizes nonnegative weights into a table.
    pub fn from_weights(n: usize, m: usize, weights: Vec<T>) -> Result<Self> {
        check_shape(n, m)?;
        if weights.iter().any(|w| w.negative()) {
            return usage("weights must be nonnegative");
        }
        let total = sum(weights.iter().cloned());
        if total.is_zero() {
            return usage("weights sum to zero");
        }
        let probs = weights.into_iter().map(|w| w / total.clone()).collect();
        Self::new(n, m, probs)
    }

    /// `P(x, z) = px(x) · pz(z)`.
    pub fn product(px: &[T], pz: &[T]) -> Result<Self> {
        let n = px.len().trailing_zeros() as usize;
        let m = pz.len().trailing_zeros() as usize;
        if px.len() != 1 << n || pz.len() != 1 << m {
            return usage("marginal lengths must be powers of two");
        }
        check_distribution(px, "X marginal")?;
        check_distribution(pz, "Z marginal")?;
        let mut probs = Vec::with_capacity(px.len() * pz.len());
        for a in px {
            for b in pz {
                probs.push(a.clone() * b.clone());
            }
        }
        Self::new(n, m, probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn x_count(&self) -> usize {
        1 << self.n
    }

    pub fn z_count(&self) -> usize {
        1 << self.m
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, x: usize, z: usize) -> &T {
        &self.probs[(x << self.m) | z]
    }

    pub fn z_marginal(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.z_count()];
        for x in 0..self.x_count() {
            for (z, slot) in out.iter_mut().enumerate() {
                *slot = slot.clone() + self.prob(x, z).clone();
            }
        }
        out
    }

    pub fn x_marginal(&self) -> Vec<T> {
        (0..self.x_count())
            .map(|x| sum((0..self.z_count()).map(|z| self.prob(x, z).clone())))
            .collect()
    }

    pub fn conditional(&self) -> ConditionalTable<T> {
        let marginal = self.z_marginal();
        let rows = marginal
            .iter()
            .enumerate()
            .map(|(z, pz)| {
                if pz.is_zero() {
                    vec![T::zero(); self.x_count()]
                } else {
                    (0..self.x_count()).map(|x| self.prob(x, z).clone() / pz.clone()).collect()
                }
            })
            .collect();
        ConditionalTable { n: self.n, m: self.m, marginal, rows }
    }

    /// Same table over another scalar type (via `f64`; exact for `f64 -> Exact`).
    /// Entrywise conversion, renormalized in `U` so the total is exactly one there.
    pub fn convert<U: Scalar>(&self) -> JointTable<U> {
        let raw: Vec<U> = self.probs.iter().map(|p| U::lit(p.to_f64_lossy())).collect();
        let total = sum(raw.iter().cloned());
        JointTable { n: self.n, m: self.m, probs: raw.into_iter().map(|p| p / total.clone()).collect() }
    }
}

/// Per-`z` conditional distributions of `X` together with the marginal of `Z`.
///
/// Rows for `z` with `P_Z(z) = 0` carry no meaning and are skipped by every meter.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable<T = f64> {
    n: usize,
    m: usize,
    marginal: Vec<T>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> ConditionalTable<T> {
    pub fn new(n: usize, marginal: Vec<T>, rows: Vec<Vec<T>>) -> Result<Self> {
        let m = marginal.len().trailing_zeros() as usize;
        check_shape(n, m)?;
        if marginal.len() != 1 << m || rows.len() != marginal.len() {
            return usage("marginal and row counts must agree and be a power of two");
        }
        check_distribution(&marginal, "Z marginal")?;
        for (z, (row, pz)) in rows.iter().zip(&marginal).enumerate() {
            if row.len() != 1 << n {
                return usage(format!("row {z} has length {}, expected {}", row.len(), 1 << n));
            }
            if pz.positive() {
                check_distribution(row, &format!("conditional X|Z={z}"))?;
            }
        }
        Ok(Self { n, m, marginal, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn marginal(&self) -> &[T] {
        &self.marginal
    }

    pub fn row(&self, z: usize) -> &[T] {
        &self.rows[z]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// `max_x P(x | z)`.
    pub fn row_max(&self, z: usize) -> T {
        self.rows[z].iter().cloned().fold(T::zero(), T::max_of)
    }

    pub fn to_joint(&self) -> JointTable<T> {
        let zc = self.marginal.len();
        let mut probs = vec![T::zero(); (1 << self.n) * zc];
        for (z, (row, pz)) in self.rows.iter().zip(&self.marginal).enumerate() {
            for (x, p) in row.iter().enumerate() {
                probs[x * zc + z] = p.clone() * pz.clone();
            }
        }
        JointTable { n: self.n, m: self.m, probs }
    }

    /// `E_z max_x P(x|z)`, the best unbounded guessing probability.
    pub fn guess_prob(&self) -> T {
        sum(self
            .marginal
            .iter()
            .enumerate()
            .filter(|(_, pz)| pz.positive())
            .map(|(z, pz)| pz.clone() * self.row_max(z)))
    }

    /// `H̃∞(X|Z)` in bits.
    pub fn avg_min_entropy(&self) -> f64 {
        -self.guess_prob().to_f64_lossy().log2()
    }
}

/// `-log2 max_x p(x)`.
pub fn min_entropy<T: Scalar>(p: &[T]) -> Result<f64> {
    if p.is_empty() {
        return usage("min-entropy of an empty distribution");
    }
    check_distribution(p, "distribution")?;
    let top = p.iter().cloned().fold(T::zero(), T::max_of);
    Ok(-top.to_f64_lossy().log2())
}

/// `E_z max_x P[X=x | Z=z]`: the success probability of the optimal unbounded predictor.
pub fn unbounded_guess_prob<T: Scalar>(t: &JointTable<T>) -> T {
    // E_z max_x P(x|z) = Σ_z max_x P(x,z); no division needed.
    sum((0..t.z_count()).map(|z| (0..t.x_count()).map(|x| t.prob(x, z).clone()).fold(T::zero(), T::max_of)))
}

/// Average min-entropy `H̃∞(X|Z) = -log2 E_z max_x P[X=x | Z=z]`.
pub fn avg_min_entropy<T: Scalar>(t: &JointTable<T>) -> f64 {
    -unbounded_guess_prob(t).to_f64_lossy().log2()
}

/// Half the L1 distance between two tables of the same shape.
pub fn stat_distance<T: Scalar>(t1: &JointTable<T>, t2: &JointTable<T>) -> Result<T> {
    if t1.n != t2.n || t1.m != t2.m {
        return usage(format!("shape ({}, {}) vs ({}, {})", t1.n, t1.m, t2.n, t2.m));
    }
    let l1 = sum(t1.probs.iter().zip(&t2.probs).map(|(a, b)| (a.clone() - b.clone()).abs()));
    Ok(l1 / T::from_count(2))
}

/// Membership oracle for a single value: `Eq(x') = [x' = x]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EqOracle {
    target: BitVec,
}

impl EqOracle {
    pub fn new(target: BitVec) -> Self {
        Self { target }
    }

    /// Rejects every candidate.
    pub fn reject_all(len: usize) -> RejectAll {
        RejectAll(len)
    }

    pub fn target(&self) -> BitVec {
        self.target
    }
}

/// Anything that can confirm a candidate value.
pub trait Membership {
    fn accepts(&self, candidate: &BitVec) -> bool;
}

impl Membership for EqOracle {
    fn accepts(&self, candidate: &BitVec) -> bool {
        *candidate == self.target
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RejectAll(pub usize);

impl Membership for RejectAll {
    fn accepts(&self, _candidate: &BitVec) -> bool {
        false
    }
}

/// Source where `X | Z=z` is uniform on a random `2^k`-subset of `{0,1}^n` and `Z` is uniform.
#[derive(Clone, Debug)]
pub struct PlantedSource {
    n: usize,
    k: usize,
    m: usize,
    supports: Vec<Vec<u64>>,
    table: JointTable<f64>,
}

impl PlantedSource {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn table(&self) -> &JointTable<f64> {
        &self.table
    }

    /// Sorted support of `X | Z=z`.
    pub fn support(&self, z: usize) -> &[u64] {
        &self.supports[z]
    }

    /// Draws `(x, z)` from the source.
    pub fn sample(&self, rng: &mut Stream) -> (BitVec, u64) {
        use rand::Rng;
        let z = rng.gen_range(0..self.supports.len());
        let support = &self.supports[z];
        let x = support[rng.gen_range(0..support.len())];
        (BitVec::truncated(x, self.n), z as u64)
    }

    /// The verification oracle handed to a reduction that must recover `x`.
    pub fn eq_oracle(&self, x: BitVec) -> EqOracle {
        EqOracle::new(x)
    }
}

/// Planted source with exactly `k` bits of average min-entropy.
pub fn planted_source(n: usize, k: usize, m: usize, rng: &mut Stream) -> Result<PlantedSource> {
    check_shape(n, m)?;
    if k > n {
        return usage(format!("k = {k} exceeds n = {n}"));
    }
    let xs = 1usize << n;
    let zs = 1usize << m;
    let size = 1usize << k;
    let mass = 1.0 / (size as f64 * zs as f64);
    let mut probs = vec![0.0; xs * zs];
    let mut supports = Vec::with_capacity(zs);
    for z in 0..zs {
        let mut support: Vec<u64> = index::sample(rng, xs, size).into_iter().map(|x| x as u64).collect();
        support.sort_unstable();
        for &x in &support {
            probs[((x as usize) << m) | z] = mass;
        }
        supports.push(support);
    }
    let table = JointTable::new(n, m, probs)?;
    Ok(PlantedSource { n, k, m, supports, table })
}

#[derive(Serialize, Deserialize)]
struct DenseFile {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

pub(crate) fn write_dense(path: &Path, n: usize, m: usize, values: &[f64]) -> Result<()> {
    let doc = DenseFile { n, m, values: values.to_vec() };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub(crate) fn read_dense(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let doc: DenseFile = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((doc.n, doc.m, doc.values))
}

impl JointTable<f64> {
    /// Stores the table as a JSON document `{ "n", "m", "values" }` in index order `x·2^m + z`.
    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        write_dense(path.as_ref(), self.n, self.m, &self.probs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (n, m, values) = read_dense(path.as_ref())?;
        Self::new(n, m, values)
    }

    /// Sampler drawing `(x, z)` pairs from the table.
    pub fn sampler(&self) -> TableSampler {
        let index = WeightedIndex::new(&self.probs).expect("validated table has positive mass");
        TableSampler { index, m: self.m }
    }
}

/// Draws `(x, z)` from a [`JointTable`].
#[derive(Clone, Debug)]
pub struct TableSampler {
    index: WeightedIndex<f64>,
    m: usize,
}

impl TableSampler {
    pub fn sample(&self, rng: &mut Stream) -> (usize, usize) {
        let i = self.index.sample(rng);
        (i >> self.m, i & ((1 << self.m) - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitlin::stream;
    use crate::scalar::Exact;
    use proptest::prelude::*;

    /// Z uniform on {0,1}; X|z=0 uniform on {0,1}, X|z=1 the point 0. n = 1, m = 1.
    fn mixed_table() -> JointTable<f64> {
        // index x*2 + z
        JointTable::new(1, 1, vec![0.25, 0.5, 0.25, 0.0]).unwrap()
    }

    fn random_table(seed: u64, n: usize, m: usize) -> JointTable<f64> {
        use rand::Rng;
        let mut rng = stream(seed, 0);
        let w: Vec<f64> = (0..1usize << (n + m)).map(|_| rng.gen::<f64>().powi(3)).collect();
        JointTable::from_weights(n, m, w).unwrap()
    }

    #[test]
    fn min_entropy_examples() {
        assert_eq!(min_entropy(&[0.125; 8]).unwrap(), 3.0);
        assert_eq!(min_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(min_entropy(&[0.5, 0.25, 0.25]).unwrap(), 1.0);
        assert!(min_entropy::<f64>(&[]).is_err());
        assert!(min_entropy(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn avg_min_entropy_examples() {
        let t = mixed_table();
        assert!((avg_min_entropy(&t) - (-(0.75f64).log2())).abs() < 1e-12);
        assert!((unbounded_guess_prob(&t) - 0.75).abs() < 1e-15);
        let px = [0.5, 0.25, 0.125, 0.125];
        let pz = [0.3, 0.7];
        let prod = JointTable::product(&px, &pz).unwrap();
        assert!((avg_min_entropy(&prod) - min_entropy(&px).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn uniform_guess_prob_without_side_information() {
        let t = JointTable::new(3, 0, vec![0.125; 8]).unwrap();
        assert_eq!(unbounded_guess_prob(&t), 0.125);
    }

    #[test]
    fn stat_distance_examples() {
        let a = JointTable::new(1, 0, vec![0.5, 0.5]).unwrap();
        let b = JointTable::new(1, 0, vec![0.75, 0.25]).unwrap();
        assert_eq!(stat_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(stat_distance(&a, &b).unwrap(), 0.25);
        let c = JointTable::new(1, 0, vec![1.0, 0.0]).unwrap();
        let d = JointTable::new(1, 0, vec![0.0, 1.0]).unwrap();
        assert_eq!(stat_distance(&c, &d).unwrap(), 1.0);
        let e = JointTable::new(1, 1, vec![0.25; 4]).unwrap();
        assert!(stat_distance(&a, &e).is_err());
    }

    #[test]
    fn construction_rejects_bad_tables() {
        assert!(JointTable::new(1, 0, vec![0.5, 0.4]).is_err());
        assert!(JointTable::new(1, 0, vec![1.5, -0.5]).is_err());
        assert!(JointTable::new(1, 0, vec![1.0]).is_err());
        assert!(JointTable::<f64>::new(20, 5, vec![]).is_err());
        // Within tolerance is accepted as-is (no silent renormalization).
        let t = JointTable::new(1, 0, vec![0.5, 0.5 + 1e-12]).unwrap();
        assert_eq!(t.probs()[1], 0.5 + 1e-12);
    }

    #[test]
    fn exact_tables_meter_exactly() {
        let t: JointTable<Exact> = mixed_table().convert();
        assert_eq!(unbounded_guess_prob(&t), Exact::new(3.into(), 4.into()));
        assert_eq!(t.conditional().guess_prob(), Exact::new(3.into(), 4.into()));
    }

    #[test]
    fn planted_source_examples() {
        let mut rng = stream(17, 0);
        let full = planted_source(4, 4, 2, &mut rng).unwrap();
        for z in 0..4 {
            assert_eq!(full.support(z).len(), 16);
        }
        let det = planted_source(5, 0, 2, &mut rng).unwrap();
        assert_eq!(unbounded_guess_prob(det.table()), 1.0);
        let src = planted_source(10, 6, 3, &mut rng).unwrap();
        assert!((avg_min_entropy(src.table()) - 6.0).abs() < 1e-12);
        let cond = src.table().conditional();
        for z in 0..8 {
            assert!((min_entropy(cond.row(z)).unwrap() - 6.0).abs() < 1e-12);
        }
        assert!(planted_source(4, 5, 1, &mut rng).is_err());
        let (x, z) = src.sample(&mut rng);
        assert!(src.support(z as usize).contains(&x.bits()));
        assert!(src.eq_oracle(x).accepts(&x));
    }

    #[test]
    fn table_file_round_trip() {
        let t = random_table(4, 3, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.store(&path).unwrap();
        let back = JointTable::load(&path).unwrap();
        for (a, b) in t.probs().iter().zip(back.probs()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn sampler_frequencies_match_table() {
        let t = random_table(5, 2, 1);
        let sampler = t.sampler();
        let mut rng = stream(8, 1);
        let trials = 200_000;
        let mut counts = vec![0u32; t.probs().len()];
        for _ in 0..trials {
            let (x, z) = sampler.sample(&mut rng);
            counts[(x << 1) | z] += 1;
        }
        for (c, p) in counts.iter().zip(t.probs()) {
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((*c as f64 / trials as f64 - p).abs() <= 4.0 * sigma + 1e-12);
        }
    }

    #[test]
    fn conditional_round_trips_to_joint() {
        let t = random_table(8, 3, 2);
        let back = t.conditional().to_joint();
        assert!(stat_distance(&t, &back).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn guess_prob_matches_entropy(seed in any::<u64>(), n in 1usize..5, m in 0usize..4) {
            let t = random_table(seed, n, m);
            let g = unbounded_guess_prob(&t);
            prop_assert!((-g.log2() - avg_min_entropy(&t)).abs() < 1e-12);
            prop_assert!(avg_min_entropy(&t) <= min_entropy(&t.x_marginal()).unwrap() + 1e-12);
        }

        #[test]
        fn stat_distance_is_a_metric(seed in any::<u64>(), n in 1usize..4, m in 0usize..3) {
            let a = random_table(seed, n, m);
            let b = random_table(seed ^ 1, n, m);
            let c = random_table(seed ^ 2, n, m);
            let ab = stat_distance(&a, &b).unwrap();
            prop_assert!((ab - stat_distance(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(ab <= stat_distance(&a, &c).unwrap() + stat_distance(&c, &b).unwrap() + 1e-12);
        }
    }
}
