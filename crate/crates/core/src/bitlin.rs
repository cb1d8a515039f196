//! GF(2) vectors and matrices, seeded streams, and the universal-hash extractor.
//!
//! Bit `i` of a [`BitVec`] is bit `i` of its integer encoding (bit 0 is the least
//! significant). Every table in the crate is indexed with this convention.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{usage, Result};

/// Longest vector the word-packed representation holds.
pub const MAX_BITS: usize = 64;

/// Random stream used by every randomized operation.
///
/// ChaCha with 8 rounds: counter-based, so `(master seed, stream id)` pairs give
/// independent, reproducible streams without coordination between workers.
pub type Stream = ChaCha8Rng;

/// Stream `index` under `master`. Distinct indices never share keystream.
pub fn stream(master: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// A fresh child seed drawn from `rng`, for handing to sub-experiments.
pub fn child_seed(rng: &mut Stream) -> u64 {
    rng.gen()
}

#[inline]
pub(crate) fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// Element of `{0,1}^n`, `n <= 64`, packed into one word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitVec {
    bits: u64,
    len: u8,
}

impl BitVec {
    pub fn new(bits: u64, len: usize) -> Result<Self> {
        if len > MAX_BITS {
            return usage(format!("bit vector length {len} exceeds {MAX_BITS}"));
        }
        if bits & !mask(len) != 0 {
            return usage(format!("value {bits:#x} does not fit in {len} bits"));
        }
        Ok(Self { bits, len: len as u8 })
    }

    /// Keeps the low `len` bits of `bits`.
    pub fn truncated(bits: u64, len: usize) -> Self {
        debug_assert!(len <= MAX_BITS);
        Self { bits: bits & mask(len), len: len as u8 }
    }

    pub fn zeros(len: usize) -> Self {
        Self::truncated(0, len)
    }

    /// The unit vector `e_i`.
    pub fn unit(len: usize, i: usize) -> Result<Self> {
        if i >= len {
            return usage(format!("unit index {i} out of range for length {len}"));
        }
        Self::new(1u64 << i, len)
    }

    /// Parses a binary literal, most significant bit first: `"110"` has bit 0 clear.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let len = s.len();
        let mut bits = 0u64;
        for c in s.chars() {
            bits <<= 1;
            match c {
                '0' => {}
                '1' => bits |= 1,
                _ => return usage(format!("invalid bit character {c:?}")),
            }
        }
        Self::new(bits, len)
    }

    pub fn random(len: usize, rng: &mut Stream) -> Self {
        Self::truncated(rng.gen(), len)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        (self.bits >> i) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len());
        if value {
            self.bits |= 1 << i;
        } else {
            self.bits &= !(1 << i);
        }
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        if self.len != other.len {
            return usage(format!("xor of lengths {} and {}", self.len, other.len));
        }
        Ok(Self { bits: self.bits ^ other.bits, len: self.len })
    }

    /// The first `len` bits.
    pub fn prefix(&self, len: usize) -> Self {
        Self::truncated(self.bits, len.min(self.len()))
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.len()).rev() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn parity(word: u64) -> bool {
    word.count_ones() & 1 == 1
}

/// `a · b` over GF(2).
pub fn inner_product(a: &BitVec, b: &BitVec) -> Result<bool> {
    if a.len != b.len {
        return usage(format!("inner product of lengths {} and {}", a.len, b.len));
    }
    Ok(parity(a.bits & b.bits))
}

/// `k × n` matrix over GF(2); row `i` is a packed [`BitVec`] of length `n`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct BitMatrix {
    rows: Vec<u64>,
    cols: usize,
}

impl BitMatrix {
    pub fn from_rows(rows: &[BitVec], cols: usize) -> Result<Self> {
        if cols > MAX_BITS {
            return usage(format!("column count {cols} exceeds {MAX_BITS}"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return usage(format!("row of length {} in a matrix with {cols} columns", bad.len()));
        }
        Ok(Self { rows: rows.iter().map(|r| r.bits()).collect(), cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows: vec![0; rows], cols }
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: (0..n).map(|i| 1u64 << i).collect(), cols: n }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> BitVec {
        BitVec::truncated(self.rows[i], self.cols)
    }

    pub fn set_row(&mut self, i: usize, row: BitVec) {
        debug_assert_eq!(row.len(), self.cols);
        self.rows[i] = row.bits();
    }

    pub(crate) fn set_row_bits(&mut self, i: usize, bits: u64) {
        self.rows[i] = bits & mask(self.cols);
    }

    /// Overwrites rows `from..to` with uniform rows.
    pub(crate) fn randomize_rows(&mut self, from: usize, to: usize, rng: &mut Stream) {
        let m = mask(self.cols);
        for row in &mut self.rows[from..to] {
            *row = rng.gen::<u64>() & m;
        }
    }

    /// Rows `0..count` as a new matrix.
    pub fn top(&self, count: usize) -> Self {
        Self { rows: self.rows[..count.min(self.rows.len())].to_vec(), cols: self.cols }
    }

    /// `R x` without the dimension check.
    #[inline]
    pub(crate) fn mul_unchecked(&self, x: u64) -> u64 {
        self.rows
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &row)| acc | ((parity(row & x) as u64) << i))
    }
}

/// `R x`; output bit `i` is `row_i · x`.
pub fn mat_vec_mul(r: &BitMatrix, x: &BitVec) -> Result<BitVec> {
    if r.cols != x.len() {
        return usage(format!("matrix has {} columns, vector has length {}", r.cols, x.len()));
    }
    if r.rows() > MAX_BITS {
        return usage(format!("matrix with {} rows exceeds output capacity", r.rows()));
    }
    Ok(BitVec::truncated(r.mul_unchecked(x.bits()), r.rows()))
}

/// Uniform `k × n` matrix drawn from `rng`.
pub fn random_matrix(k: usize, n: usize, rng: &mut Stream) -> BitMatrix {
    let m = mask(n);
    BitMatrix { rows: (0..k).map(|_| rng.gen::<u64>() & m).collect(), cols: n }
}

/// Universal-hash extractor: the first `out_len` bits of `seed_matrix · x`.
pub fn leftover_hash_extract(x: &BitVec, seed_matrix: &BitMatrix, out_len: usize) -> Result<BitVec> {
    if out_len > seed_matrix.rows() {
        return usage(format!(
            "requested {out_len} output bits from a seed with {} rows",
            seed_matrix.rows()
        ));
    }
    let full = mat_vec_mul(seed_matrix, x)?;
    Ok(full.prefix(out_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bv(s: &str) -> BitVec {
        BitVec::from_bit_str(s).unwrap()
    }

    fn parity_of_and(a: u64, b: u64, n: usize) -> bool {
        (0..n).filter(|&i| (a >> i) & 1 == 1 && (b >> i) & 1 == 1).count() % 2 == 1
    }

    #[test]
    fn inner_product_examples() {
        assert!(!inner_product(&bv("000"), &bv("101")).unwrap());
        assert!(inner_product(&bv("10"), &bv("10")).unwrap());
        assert!(inner_product(&bv("110"), &bv("011")).unwrap());
        for a in 0..8u64 {
            for b in 0..8u64 {
                let got = inner_product(&BitVec::new(a, 3).unwrap(), &BitVec::new(b, 3).unwrap()).unwrap();
                assert_eq!(got, parity_of_and(a, b, 3));
            }
        }
    }

    #[test]
    fn inner_product_rejects_length_mismatch() {
        assert!(inner_product(&bv("10"), &bv("100")).is_err());
    }

    #[test]
    fn bit_string_uses_integer_order() {
        let v = bv("110");
        assert!(!v.get(0));
        assert!(v.get(1) && v.get(2));
        assert_eq!(v.to_string(), "110");
        assert!(BitVec::from_bit_str("102").is_err());
        assert!(BitVec::new(8, 3).is_err());
    }

    #[test]
    fn mat_vec_examples() {
        assert_eq!(mat_vec_mul(&BitMatrix::identity(3), &bv("101")).unwrap(), bv("101"));
        assert_eq!(mat_vec_mul(&BitMatrix::zeros(4, 3), &bv("111")).unwrap(), BitVec::zeros(4));
        let mut rng = stream(11, 0);
        let r = random_matrix(4, 6, &mut rng);
        let x = BitVec::random(6, &mut rng);
        let y = mat_vec_mul(&r, &x).unwrap();
        for i in 0..4 {
            assert_eq!(y.get(i), parity_of_and(r.row(i).bits(), x.bits(), 6));
        }
        assert!(mat_vec_mul(&r, &BitVec::zeros(5)).is_err());
    }

    #[test]
    fn random_matrix_contract() {
        assert_eq!(random_matrix(0, 5, &mut stream(1, 0)).rows(), 0);
        assert_eq!(random_matrix(3, 7, &mut stream(5, 2)), random_matrix(3, 7, &mut stream(5, 2)));
        assert_ne!(random_matrix(3, 7, &mut stream(5, 2)), random_matrix(3, 7, &mut stream(5, 3)));
        // 10^5 entries: 0.5 +- 0.01 is more than 6 sigma (sigma ~ 0.0016).
        let m = random_matrix(2500, 40, &mut stream(99, 0));
        let ones: u32 = (0..m.rows()).map(|i| m.row(i).count_ones()).sum();
        let frac = ones as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01, "ones fraction {frac}");
    }

    #[test]
    fn extract_examples() {
        let mut rng = stream(3, 0);
        let x = BitVec::random(8, &mut rng);
        let seed = random_matrix(4, 8, &mut rng);
        assert!(leftover_hash_extract(&x, &seed, 0).unwrap().is_empty());
        assert_eq!(leftover_hash_extract(&x, &BitMatrix::identity(8), 8).unwrap(), x);
        assert!(leftover_hash_extract(&x, &seed, 5).is_err());
        assert!(leftover_hash_extract(&BitVec::zeros(7), &seed, 2).is_err());
    }

    proptest! {
        #[test]
        fn inner_product_is_bilinear(a in any::<u64>(), a2 in any::<u64>(), b in any::<u64>(), n in 1usize..=64) {
            let (a, a2, b) = (BitVec::truncated(a, n), BitVec::truncated(a2, n), BitVec::truncated(b, n));
            let lhs = inner_product(&a.xor(&a2).unwrap(), &b).unwrap();
            prop_assert_eq!(lhs, inner_product(&a, &b).unwrap() ^ inner_product(&a2, &b).unwrap());
        }

        #[test]
        fn mat_vec_is_linear(seed in any::<u64>(), k in 0usize..=16, n in 1usize..=32) {
            let mut rng = stream(seed, 0);
            let r = random_matrix(k, n, &mut rng);
            let x = BitVec::random(n, &mut rng);
            let x2 = BitVec::random(n, &mut rng);
            let lhs = mat_vec_mul(&r, &x.xor(&x2).unwrap()).unwrap();
            let rhs = mat_vec_mul(&r, &x).unwrap().xor(&mat_vec_mul(&r, &x2).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
