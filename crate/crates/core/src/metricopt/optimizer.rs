use super::threshold::{Column, Level, BREAK_TOL};
use super::{Distinguisher, OutputRange, ThresholdProfile};
use crate::distmodel::{ConditionalTable, JointTable};
use crate::error::{domain, usage, Result};
use crate::scalar::{sum, Scalar};

/// Largest instance [`brute_force_opt`] accepts.
pub const BRUTE_FORCE_MAX_N: usize = 3;
pub const BRUTE_FORCE_MAX_M: usize = 2;

/// Maximizer of `E D(Y,Z)` under `H̃∞(Y|Z) >= k`, with its threshold certificate.
#[derive(Clone, Debug)]
pub struct OptimalDistribution<T = f64> {
    pub conditional: ConditionalTable<T>,
    pub profile: ThresholdProfile<T>,
    /// `E D(Y*, Z)`.
    pub objective: T,
    /// `2^{-k}`, the guessing probability of `Y*` given `Z`.
    pub guess_budget: T,
}

fn budget_for<T: Scalar>(k: f64) -> T {
    T::lit((-k).exp2())
}

/// Builds `Y*|Z` with `H̃∞(Y*|Z) = k` maximizing `E D(Y, Z)`, and its threshold profile.
///
/// The common level `λ'` is found by bisecting over the sorted breakpoints of the
/// per-`z` maps `t ↦ E max(D(U,z) - t, 0)`: the first breakpoint where the closed
/// superlevel sets reach entropy `k`. There `k⁻(λ') <= k <= k(λ')`, and mass `y_max(z)`
/// is interpolated between the strict and the closed superlevel sets by a common
/// factor, with the residual spread uniformly over each boundary `{x : D(x,z) = t(z)}`.
pub fn optimal_distribution<T: Scalar>(
    d: &Distinguisher<T>,
    t: &JointTable<T>,
    k: f64,
) -> Result<OptimalDistribution<T>> {
    d.check_shape(t.n(), t.m())?;
    let n = d.n();
    if !(k > 0.0 && k < n as f64) {
        return domain(format!("target entropy k = {k} must satisfy 0 < k < n = {n}"));
    }
    let size = 1usize << n;
    let marginal = t.z_marginal();
    let columns: Vec<Column<T>> = (0..marginal.len()).map(|z| Column::new(&d.column(z))).collect();
    let budget: T = budget_for(k);

    let mut levels: Vec<T> = columns
        .iter()
        .zip(&marginal)
        .filter(|(_, pz)| pz.positive())
        .flat_map(|(c, _)| c.breaks().iter().cloned())
        .collect();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("comparable levels"));
    let tol = T::slack(BREAK_TOL);
    levels.dedup_by(|b, a| (b.clone() - a.clone()).abs() <= tol);

    // guess_lo(λ') = E_z 1/#{D >= t}: non-increasing in λ'; reaches 2^{-n} <= budget at the last level.
    let guess_closed = |lambda: &T| -> T {
        sum(columns.iter().zip(&marginal).filter(|(_, pz)| pz.positive()).map(|(c, pz)| {
            pz.clone() / T::from_count(c.locate(lambda).at_or_above as u64)
        }))
    };
    let idx = levels.partition_point(|l| guess_closed(l) > budget);
    let lambda = levels[idx.min(levels.len() - 1)].clone();

    let positions: Vec<_> = columns.iter().map(|c| c.locate(&lambda)).collect();
    let cap_hi = |above: usize| if above == 0 { T::one() } else { T::one() / T::from_count(above as u64) };
    let (mut g_hi, mut g_lo) = (T::zero(), T::zero());
    for (pos, pz) in positions.iter().zip(&marginal) {
        if pz.positive() {
            g_hi = g_hi + pz.clone() * cap_hi(pos.above);
            g_lo = g_lo + pz.clone() / T::from_count(pos.at_or_above as u64);
        }
    }
    let spread = g_hi.clone() - g_lo.clone();
    let theta = if spread.positive() {
        T::min_of(T::one(), T::max_of(T::zero(), (g_hi - budget.clone()) / spread))
    } else {
        T::zero()
    };

    let mut rows = Vec::with_capacity(marginal.len());
    for (z, pos) in positions.iter().enumerate() {
        let hi = cap_hi(pos.above);
        let lo = T::one() / T::from_count(pos.at_or_above as u64);
        let y_max = hi.clone() + theta.clone() * (lo - hi);
        let boundary_count = pos.at_or_above - pos.above;
        let residual_each = if pos.above > 0 && boundary_count > 0 {
            (T::one() - y_max.clone() * T::from_count(pos.above as u64)) / T::from_count(boundary_count as u64)
        } else {
            T::zero()
        };
        // Only reachable at λ' = 0 (no strict superlevel set): fill boundary points up to y_max in index order.
        let mut remaining = T::one();
        let mut row = Vec::with_capacity(size);
        for x in 0..size {
            let p = match Column::classify(pos, d.value(x, z)) {
                Level::Above => y_max.clone(),
                Level::Boundary if pos.above > 0 => residual_each.clone(),
                Level::Boundary => {
                    let take = T::min_of(y_max.clone(), remaining.clone());
                    remaining = remaining - take.clone();
                    take
                }
                Level::Below => T::zero(),
            };
            row.push(p);
        }
        rows.push(row);
    }

    let conditional = ConditionalTable::new(n, marginal.clone(), rows)?;
    let objective = d.conditional_expectation(&conditional)?;
    let profile = ThresholdProfile { thresholds: positions.into_iter().map(|p| p.threshold).collect(), lambda_norm: lambda };
    Ok(OptimalDistribution { conditional, profile, objective, guess_budget: budget })
}

/// Largest violation of the optimality certificate, together with the entropy constraint:
/// (a) `E_U max(D - t(z), 0) = λ'` for every `z`; (b) `0 < P(x|z) < y_max(z)` only where
/// `D = t`; (c) `P(x|z) = 0` wherever `D < t`; (d) `P(x|z) = y_max(z)` wherever `D > t`;
/// and `E_z y_max(z) = 2^{-k}`.
pub fn kkt_violation<T: Scalar>(d: &Distinguisher<T>, opt: &OptimalDistribution<T>) -> f64 {
    let cond = &opt.conditional;
    let size = 1usize << d.n();
    let lam = opt.profile.lambda_norm.to_f64_lossy();
    let mut worst = 0.0f64;
    let mut guess = 0.0;
    for (z, pz) in cond.marginal().iter().enumerate() {
        let thr = opt.profile.thresholds[z].to_f64_lossy();
        let row = cond.row(z);
        let y_max = cond.row_max(z).to_f64_lossy();
        let mut level = 0.0;
        for x in 0..size {
            let dv = d.value(x, z).to_f64_lossy();
            let p = row[x].to_f64_lossy();
            level += (dv - thr).max(0.0);
            if dv > thr {
                worst = worst.max((p - y_max).abs());
            } else if dv < thr {
                worst = worst.max(p.abs());
            } else if p > 0.0 && p < y_max {
                worst = worst.max((dv - thr).abs());
            }
        }
        worst = worst.max((level / size as f64 - lam).abs());
        if pz.positive() {
            guess += pz.to_f64_lossy() * y_max;
        }
    }
    worst.max((guess - opt.guess_budget.to_f64_lossy()).abs())
}

/// `D'(x,z) = max(D(x,z) - t(z), 0)`, range `[0, 2]`.
pub fn modified_distinguisher<T: Scalar>(d: &Distinguisher<T>, profile: &ThresholdProfile<T>) -> Result<Distinguisher<T>> {
    let zs = 1usize << d.m();
    if profile.thresholds.len() != zs {
        return usage(format!("profile covers {} values of z, expected {zs}", profile.thresholds.len()));
    }
    let two = T::from_count(2);
    let mut values = Vec::with_capacity(d.values().len());
    for x in 0..1usize << d.n() {
        for z in 0..zs {
            let shifted = T::max_of(T::zero(), d.value(x, z).clone() - profile.thresholds[z].clone());
            values.push(T::min_of(shifted, two.clone()));
        }
    }
    Distinguisher::with_range(d.n(), d.m(), values, OutputRange::Shifted)
}

/// `E D(X,Z) - E D(Y*,Z)`; may be negative.
pub fn advantage<T: Scalar>(d: &Distinguisher<T>, t: &JointTable<T>, k: f64) -> Result<T> {
    let opt = optimal_distribution(d, t, k)?;
    Ok(d.expectation(t)? - opt.objective)
}

/// Value of the water-filled conditional with cap `cap`: mass `cap` on the largest values first.
fn water_fill<T: Scalar>(sorted_desc: &[T], cap: &T) -> T {
    let mut remaining = T::one();
    let mut acc = T::zero();
    for v in sorted_desc {
        if !remaining.positive() {
            break;
        }
        let take = T::min_of(cap.clone(), remaining.clone());
        acc = acc + take.clone() * v.clone();
        remaining = remaining - take;
    }
    acc
}

/// Optimum of `max E D(Y,Z)` s.t. `H̃∞(Y|Z) >= k`, by enumeration. Small instances only.
///
/// The problem is `max Σ_z P(z) f_z(a_z)` over caps `a_z = max_x P(x|z)` with
/// `Σ_z P(z) a_z <= 2^{-k}`, where `f_z` (water-filling) is concave and piecewise linear
/// with kinks at `a = 1/j`. Some optimum has every cap but one on a kink, so every such
/// allocation is enumerated and the remaining budget goes to the free coordinate.
pub fn brute_force_opt<T: Scalar>(d: &Distinguisher<T>, t: &JointTable<T>, k: f64) -> Result<T> {
    d.check_shape(t.n(), t.m())?;
    if d.n() > BRUTE_FORCE_MAX_N || d.m() > BRUTE_FORCE_MAX_M {
        return usage(format!(
            "brute force limited to n <= {BRUTE_FORCE_MAX_N}, m <= {BRUTE_FORCE_MAX_M}; got ({}, {})",
            d.n(),
            d.m()
        ));
    }
    if !(k >= 0.0 && k <= d.n() as f64) {
        return domain(format!("target entropy k = {k} outside [0, {}]", d.n()));
    }
    let size = 1usize << d.n();
    let budget: T = budget_for(k);
    let floor = T::one() / T::from_count(size as u64);
    let marginal = t.z_marginal();
    let live: Vec<usize> = (0..marginal.len()).filter(|&z| marginal[z].positive()).collect();
    let sorted: Vec<Vec<T>> = live
        .iter()
        .map(|&z| {
            let mut col = d.column(z);
            col.sort_by(|a, b| b.partial_cmp(a).expect("comparable"));
            col
        })
        .collect();
    let kinks: Vec<T> = (1..=size).map(|j| T::one() / T::from_count(j as u64)).collect();
    let tol = T::slack(1e-12);

    let mut best: Option<T> = None;
    for free in 0..live.len() {
        let others: Vec<usize> = (0..live.len()).filter(|&i| i != free).collect();
        let combos = size.pow(others.len() as u32);
        for code in 0..combos {
            let mut c = code;
            let mut spent = T::zero();
            let mut value = T::zero();
            for &i in &others {
                let cap = &kinks[c % size];
                c /= size;
                let pz = &marginal[live[i]];
                spent = spent + pz.clone() * cap.clone();
                value = value + pz.clone() * water_fill(&sorted[i], cap);
            }
            let pf = &marginal[live[free]];
            let cap = (budget.clone() - spent) / pf.clone();
            if cap < floor.clone() - tol.clone() {
                continue;
            }
            let cap = T::min_of(T::max_of(cap, floor.clone()), T::one());
            value = value + pf.clone() * water_fill(&sorted[free], &cap);
            if best.as_ref().is_none_or(|b| value > *b) {
                best = Some(value);
            }
        }
    }
    best.ok_or_else(|| crate::error::Error::Domain("no feasible allocation".into()))
}
