//! List decoding of the binary Hadamard code under errors and erasures.
//!
//! The decoder is the pairwise-independent Goldreich-Levin construction. Seeds
//! `s^1..s^l` span query points `r^J = ⊕_{j∈J} s^j`; for every guess `σ ∈ {0,1}^l`
//! of the inner products `s^j·x`, bit `i` of the candidate is the majority of
//! `b^J ⊕ P(r^J ⊕ e_i)` over nonempty `J` with a non-erased answer. The votes for
//! all `σ` at once form a Walsh-Hadamard transform, so decoding costs
//! `O(n·l·2^l)` additions after `n·(2^l - 1)` oracle queries.

use rand::Rng;

use crate::bitlin::{mask, BitVec, Stream, MAX_BITS};
use crate::distmodel::Membership;
use crate::error::{domain, usage, Result};

/// Largest list exponent accepted by [`ld_decode`].
pub const MAX_LIST_BITS: usize = 26;

/// A possibly randomized, possibly erasing oracle for `r ↦ r·x`.
pub trait ErasureOracle {
    /// `Some(bit)` or `None` for an erasure.
    fn query(&mut self, r: BitVec, rng: &mut Stream) -> Option<bool>;
}

impl<O: ErasureOracle + ?Sized> ErasureOracle for &mut O {
    fn query(&mut self, r: BitVec, rng: &mut Stream) -> Option<bool> {
        (**self).query(r, rng)
    }
}

/// Answers `r·x` with probability `c`, its complement with probability `e`,
/// and erases otherwise, independently per query.
#[derive(Clone, Copy, Debug)]
pub struct NoisyOracle {
    x: BitVec,
    correct: f64,
    wrong: f64,
}

impl NoisyOracle {
    pub fn new(x: BitVec, e: f64, c: f64) -> Result<Self> {
        if !(e >= 0.0 && c >= 0.0 && e + c <= 1.0 + 1e-12) {
            return usage(format!("need e, c >= 0 and e + c <= 1, got e = {e}, c = {c}"));
        }
        Ok(Self { x, correct: c, wrong: e })
    }

    pub fn noiseless(x: BitVec) -> Self {
        Self { x, correct: 1.0, wrong: 0.0 }
    }
}

impl ErasureOracle for NoisyOracle {
    fn query(&mut self, r: BitVec, rng: &mut Stream) -> Option<bool> {
        let truth = (r.bits() & self.x.bits()).count_ones() & 1 == 1;
        if self.correct >= 1.0 {
            return Some(truth);
        }
        let u: f64 = rng.gen();
        if u < self.correct {
            Some(truth)
        } else if u < self.correct + self.wrong {
            Some(!truth)
        } else {
            None
        }
    }
}

/// Smallest `l` with `l >= log2(20 n (e+c)/(c-e)^2 + 1)`.
pub fn list_size_param(n: usize, e: f64, c: f64) -> Result<usize> {
    if !(e >= 0.0 && e + c <= 1.0 + 1e-12) {
        return usage(format!("need e >= 0 and e + c <= 1, got e = {e}, c = {c}"));
    }
    if c.is_nan() || c <= e {
        return domain(format!("no decoding guarantee when c = {c} <= e = {e}"));
    }
    list_size_for_ratio(n, (e + c) / ((c - e) * (c - e)))
}

/// As [`list_size_param`] with the ratio `(e+c)/(c-e)^2` given directly.
pub fn list_size_for_ratio(n: usize, ratio: f64) -> Result<usize> {
    if n == 0 || n > MAX_BITS {
        return usage(format!("code length {n} unsupported"));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return domain(format!("ratio {ratio} must be positive and finite"));
    }
    Ok((20.0 * n as f64 * ratio + 1.0).log2().ceil().max(1.0) as usize)
}

/// Candidates from one decoding run, indexed by the guess `σ`.
#[derive(Clone, Debug)]
pub struct DecodeList {
    n: usize,
    seeds: Vec<BitVec>,
    candidates: Vec<u64>,
    queries: u64,
    butterflies: u64,
}

impl DecodeList {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Candidate for the guess `σ`, bit `j` of `sigma` being `σ_{j+1}`.
    pub fn candidate(&self, sigma: usize) -> BitVec {
        BitVec::truncated(self.candidates[sigma], self.n)
    }

    pub fn iter(&self) -> impl Iterator<Item = BitVec> + '_ {
        self.candidates.iter().map(|&c| BitVec::truncated(c, self.n))
    }

    pub fn contains(&self, x: &BitVec) -> bool {
        x.len() == self.n && self.candidates.contains(&x.bits())
    }

    /// The seeds `s^1..s^l`.
    pub fn seeds(&self) -> &[BitVec] {
        &self.seeds
    }

    /// Oracle queries issued.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Add-subtract pairs evaluated while tallying votes.
    pub fn vote_operations(&self) -> u64 {
        self.butterflies
    }
}

/// `r^J` for every `J ⊆ [l]`, `J` read as a bit mask.
pub(crate) fn subset_sums(seeds: &[u64]) -> Vec<u64> {
    let mut sums = vec![0u64; 1 << seeds.len()];
    for j in 1..sums.len() {
        let low = j.trailing_zeros() as usize;
        sums[j] = sums[j & (j - 1)] ^ seeds[low];
    }
    sums
}

const WHT_BLOCK_BITS: usize = 12;

/// In-place unnormalized Walsh-Hadamard transform; returns butterflies done.
fn wht(a: &mut [i32]) -> u64 {
    let len = a.len();
    let block = len.min(1 << WHT_BLOCK_BITS);
    for chunk in a.chunks_mut(block) {
        let mut h = 1;
        while h < block {
            for base in (0..block).step_by(2 * h) {
                let (lo, hi) = chunk[base..base + 2 * h].split_at_mut(h);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (p, q) = (*u, *v);
                    *u = p + q;
                    *v = p - q;
                }
            }
            h *= 2;
        }
    }
    let mut h = block;
    while h < len {
        for base in (0..len).step_by(2 * h) {
            let (lo, hi) = a[base..base + 2 * h].split_at_mut(h);
            for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                let (p, q) = (*u, *v);
                *u = p + q;
                *v = p - q;
            }
        }
        h *= 2;
    }
    (len / 2 * len.trailing_zeros() as usize) as u64
}

/// Decodes with list exponent `l`, returning `2^l` candidates.
pub fn ld_decode<O: ErasureOracle>(oracle: &mut O, n: usize, l: usize, rng: &mut Stream) -> Result<DecodeList> {
    if n == 0 || n > MAX_BITS {
        return usage(format!("code length {n} unsupported"));
    }
    if l == 0 || l > MAX_LIST_BITS {
        return usage(format!("list exponent {l} outside 1..={MAX_LIST_BITS}"));
    }
    let seeds: Vec<u64> = (0..l).map(|_| rng.gen::<u64>() & mask(n)).collect();
    let points = subset_sums(&seeds);
    let size = points.len();

    // votes[i * size + J] = +1 (answer 0), -1 (answer 1), 0 (erased or J empty).
    let mut votes = vec![0i8; n * size];
    let mut queries = 0u64;
    for (j, &r) in points.iter().enumerate().skip(1) {
        for i in 0..n {
            let q = BitVec::truncated(r ^ (1u64 << i), n);
            queries += 1;
            votes[i * size + j] = match oracle.query(q, rng) {
                Some(false) => 1,
                Some(true) => -1,
                None => 0,
            };
        }
    }

    let mut candidates = vec![0u64; size];
    let mut tally = vec![0i32; size];
    let mut butterflies = 0;
    for i in 0..n {
        for (t, v) in tally.iter_mut().zip(&votes[i * size..(i + 1) * size]) {
            *t = *v as i32;
        }
        butterflies += wht(&mut tally);
        for (c, t) in candidates.iter_mut().zip(&tally) {
            if *t < 0 {
                *c |= 1u64 << i;
            }
        }
    }
    Ok(DecodeList {
        n,
        seeds: seeds.into_iter().map(|s| BitVec::truncated(s, n)).collect(),
        candidates,
        queries,
        butterflies,
    })
}

/// Outcome of [`recover_with_eq`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recovery {
    pub value: Option<BitVec>,
    /// Decoding runs performed.
    pub attempts: usize,
    pub queries: u64,
}

/// Runs [`ld_decode`] up to `retries` times and returns the first candidate `eq` accepts.
pub fn recover_with_eq<O: ErasureOracle, M: Membership + ?Sized>(
    oracle: &mut O,
    eq: &M,
    n: usize,
    l: usize,
    retries: usize,
    rng: &mut Stream,
) -> Result<Recovery> {
    if retries == 0 {
        return usage("at least one decoding attempt is required");
    }
    let mut queries = 0;
    for attempt in 1..=retries {
        let list = ld_decode(oracle, n, l, rng)?;
        queries += list.queries();
        let found = list.iter().find(|c| eq.accepts(c));
        if found.is_some() {
            return Ok(Recovery { value: found, attempts: attempt, queries });
        }
    }
    Ok(Recovery { value: None, attempts: retries, queries })
}
