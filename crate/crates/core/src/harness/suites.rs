use rand::Rng;

use super::{instance_seed, Arithmetic, ExperimentConfig, ReportRow};
use crate::bitlin::{stream, BitVec, Stream};
use crate::condenser::{condenser_experiment, CondenserConfig};
use crate::distmodel::JointTable;
use crate::error::{usage, Result};
use crate::hadamard::{ld_decode, list_size_param, NoisyOracle};
use crate::metricopt::{
    brute_force_opt, exact_threshold, find_threshold_failure_bound, find_threshold_sampled, kkt_violation,
    modified_distinguisher, optimal_distribution, Distinguisher, OutputRange,
};
use crate::predictor::{
    exact_success_prob, monte_carlo_success, planted_attack_instance, predictor_attack, AttackReport, PredictorParams,
};
use crate::scalar::Exact;

pub(super) const CONDENSER_N: usize = 10;
pub(super) const CONDENSER_K: usize = 5;

/// Monte-Carlo agreement tolerance, in binomial standard deviations.
pub const MC_SIGMAS: f64 = 3.0;
/// Decoder contract: the true word is listed with probability at least 0.8.
pub const DECODER_TARGET: f64 = 0.8;
pub const DECODER_SLACK: f64 = 0.05;
pub const OBJECTIVE_TOL: f64 = 1e-6;
pub const CERTIFICATE_TOL: f64 = 1e-9;
pub const SHIFTED_TOL: f64 = 1e-9;
pub const ANALYTIC_SLACK: f64 = 1e-10;
/// Slack on the exact level of a sampled threshold.
pub const LEVEL_TOL: f64 = 1e-12;

struct RowBase<'a> {
    id: &'a str,
    seed: u64,
    n: Option<usize>,
    m: Option<usize>,
    k: Option<f64>,
    epsilon: Option<f64>,
    ell: Option<u64>,
}

impl RowBase<'_> {
    fn row(&self, metric: &str, measured: f64, bound: f64, pass: bool) -> ReportRow {
        ReportRow {
            experiment_id: self.id.to_string(),
            seed: self.seed,
            n: self.n,
            m: self.m,
            k: self.k,
            epsilon: self.epsilon,
            ell_or_l: self.ell,
            metric: metric.to_string(),
            measured,
            bound,
            pass,
        }
    }
}

fn base(id: &str, seed: u64) -> RowBase<'_> {
    RowBase { id, seed, n: None, m: None, k: None, epsilon: None, ell: None }
}

fn random_table(n: usize, m: usize, rng: &mut Stream) -> Result<JointTable<f64>> {
    let mut w: Vec<f64> = (0..1usize << (n + m)).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>().powi(2) }).collect();
    for z in 0..1usize << m {
        if (0..1usize << n).all(|x| w[(x << m) | z] == 0.0) {
            w[(rng.gen_range(0..1usize << n) << m) | z] = 1.0;
        }
    }
    JointTable::from_weights(n, m, w)
}

/// Uniform values, or values on a coarse grid (to produce ties) for half the instances.
fn random_distinguisher(n: usize, m: usize, rng: &mut Stream) -> Result<Distinguisher<f64>> {
    let coarse = rng.gen_bool(0.5);
    let values =
        (0..1usize << (n + m)).map(|_| if coarse { rng.gen_range(0..=8) as f64 / 8.0 } else { rng.gen::<f64>() }).collect();
    Distinguisher::new(n, m, values)
}

fn random_k(n: usize, rng: &mut Stream) -> f64 {
    rng.gen_range(0.1..(n as f64 - 0.1))
}

fn attack_row(b: &RowBase, r: &AttackReport) -> ReportRow {
    let b = RowBase { epsilon: Some(r.epsilon), ell: Some(r.ell), ..*b };
    b.row("success_exact", r.success_exact, r.bound, r.pass)
}

pub(super) fn predictor_bound(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let id = cfg.experiment_id()?;
    let master = cfg.seed.unwrap_or_default();
    let n = cfg.n.unwrap_or(6);
    let m = cfg.m.unwrap_or(2);
    let instances = cfg.instances.unwrap_or(20);
    let mut rows = Vec::new();
    for i in 0..instances {
        let seed = instance_seed(master, i as u64);
        let mut rng = stream(seed, 0);
        let k = cfg.k.unwrap_or((n as f64 - (1 + i % 4) as f64).max(1.0));
        let (d, t) = planted_attack_instance(n, m, k, &mut rng)?;
        let report = match cfg.arithmetic.unwrap_or_default() {
            Arithmetic::Exact => predictor_attack::<Exact>(&t.convert(), &d.convert(), k)?,
            Arithmetic::Float => predictor_attack(&t, &d, k)?,
        };
        rows.push(attack_row(&RowBase { n: Some(n), m: Some(m), k: Some(k), ..base(&id, seed) }, &report));
    }

    let trials = cfg.mc_trials.unwrap_or(0);
    if trials > 0 {
        let (n_max, m_max) = (cfg.n.unwrap_or(8).max(1), cfg.m.unwrap_or(4));
        for i in 0..cfg.mc_instances.unwrap_or(20) {
            let seed = instance_seed(master, (instances + i) as u64);
            let mut rng = stream(seed, 0);
            let (n, m) = (rng.gen_range(1..=n_max), rng.gen_range(0..=m_max));
            let ell = rng.gen_range(1..=64u64);
            let t = random_table(n, m, &mut rng)?;
            let values = (0..1usize << (n + m)).map(|_| 2.0 * rng.gen::<f64>()).collect();
            let dp = Distinguisher::with_range(n, m, values, OutputRange::Shifted)?;
            let exact = exact_success_prob(&t, &dp, ell)?;
            let freq = monte_carlo_success(&t, &dp, PredictorParams::new(ell)?, trials, &mut rng)?;
            let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
            let b = RowBase { n: Some(n), m: Some(m), ell: Some(ell), ..base(&id, seed) };
            rows.push(b.row("mc_success", freq, exact, (freq - exact).abs() <= MC_SIGMAS * sigma));
        }
    }
    Ok(rows)
}

pub(super) fn optimizer_oracle(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let id = cfg.experiment_id()?;
    let master = cfg.seed.unwrap_or_default();
    let mut rows = Vec::new();
    let mut index = 0u64;
    let mut next = || {
        index += 1;
        instance_seed(master, index - 1)
    };

    for _ in 0..cfg.instances.unwrap_or(50) {
        let seed = next();
        let mut rng = stream(seed, 0);
        let n = rng.gen_range(1..=crate::metricopt::BRUTE_FORCE_MAX_N);
        let m = rng.gen_range(0..=crate::metricopt::BRUTE_FORCE_MAX_M);
        let k = random_k(n, &mut rng);
        let (t, d) = (random_table(n, m, &mut rng)?, random_distinguisher(n, m, &mut rng)?);
        let opt = optimal_distribution(&d, &t, k)?;
        let brute = brute_force_opt(&d, &t, k)?;
        let b = RowBase { n: Some(n), m: Some(m), k: Some(k), ..base(&id, seed) };
        let gap = (opt.objective - brute).abs();
        rows.push(b.row("objective_gap", gap, OBJECTIVE_TOL, gap <= OBJECTIVE_TOL));
        let kkt = kkt_violation(&d, &opt);
        rows.push(b.row("kkt_violation", kkt, CERTIFICATE_TOL, kkt <= CERTIFICATE_TOL));
    }

    // Certificate-only instances sweep every shape 4 <= n <= n_max, m <= m_max in turn.
    let (n_max, m_max) = (cfg.n.unwrap_or(10).max(4), cfg.m.unwrap_or(4));
    let shapes: Vec<(usize, usize)> = (4..=n_max).flat_map(|n| (0..=m_max).map(move |m| (n, m))).collect();
    for i in 0..cfg.large_instances.unwrap_or(shapes.len()) {
        let seed = next();
        let mut rng = stream(seed, 0);
        let (n, m) = shapes[i % shapes.len()];
        let k = random_k(n, &mut rng);
        let (t, d) = (random_table(n, m, &mut rng)?, random_distinguisher(n, m, &mut rng)?);
        let kkt = kkt_violation(&d, &optimal_distribution(&d, &t, k)?);
        let b = RowBase { n: Some(n), m: Some(m), k: Some(k), ..base(&id, seed) };
        rows.push(b.row("kkt_violation", kkt, CERTIFICATE_TOL, kkt <= CERTIFICATE_TOL));
    }

    for _ in 0..cfg.shifted_instances.unwrap_or(100) {
        let seed = next();
        let mut rng = stream(seed, 0);
        let (n, m) = (rng.gen_range(2..=6), rng.gen_range(0..=3));
        let k = random_k(n, &mut rng);
        let (t, d) = (random_table(n, m, &mut rng)?, random_distinguisher(n, m, &mut rng)?);
        rows.extend(shifted_rows(&RowBase { n: Some(n), m: Some(m), k: Some(k), ..base(&id, seed) }, &t, &d, k)?);
    }
    Ok(rows)
}

/// The properties of `D' = max(D - t(z), 0)` used to bound the predictor.
fn shifted_rows(b: &RowBase, t: &JointTable<f64>, d: &Distinguisher<f64>, k: f64) -> Result<Vec<ReportRow>> {
    let n = d.n();
    let opt = optimal_distribution(d, t, k)?;
    let dp = modified_distinguisher(d, &opt.profile)?;
    let cond = t.conditional();
    let ystar = &opt.conditional;
    let lambda = opt.profile.lambda_norm;

    let shift_gain = (dp.expectation(t)? - dp.conditional_expectation(ystar)?)
        - (d.expectation(t)? - d.conditional_expectation(ystar)?);
    let mut level_spread = 0.0f64;
    let mut identity_gap = 0.0f64;
    for z in (0..cond.marginal().len()).filter(|&z| cond.marginal()[z] > 0.0) {
        let mean = dp.uniform_mean(z);
        level_spread = level_spread.max((mean - lambda).abs());
        let lhs = dp.row_expectation(ystar.row(z), z);
        identity_gap = identity_gap.max((lhs - mean * (n as f64).exp2() * ystar.row_max(z)).abs());
    }
    let star_gap = (dp.conditional_expectation(ystar)? - (n as f64 - k).exp2() * lambda).abs();
    Ok(vec![
        b.row("shifted_gain", shift_gain, 0.0, shift_gain >= -SHIFTED_TOL),
        b.row("shifted_uniform_level", level_spread, SHIFTED_TOL, level_spread <= SHIFTED_TOL),
        b.row("shifted_conditional_identity", identity_gap, SHIFTED_TOL, identity_gap <= SHIFTED_TOL),
        b.row("shifted_star_mass", star_gap, SHIFTED_TOL, star_gap <= SHIFTED_TOL),
    ])
}

pub(super) fn threshold(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let id = cfg.experiment_id()?;
    let master = cfg.seed.unwrap_or_default();
    let n = cfg.n.unwrap_or(8);
    let delta = cfg.delta.unwrap_or(0.05);
    let samples = cfg.samples.unwrap_or(10_000);
    let runs = cfg.trials.unwrap_or(1000);
    let mut inside = 0u64;
    let mut order_violations = 0u64;
    for i in 0..runs {
        let mut rng = stream(instance_seed(master, i), 0);
        let d = random_distinguisher(n, 0, &mut rng)?;
        let lambda = rng.gen_range(0.05..0.95);
        let column = d.column(0);
        let search = find_threshold_sampled(|x| column[x as usize], n, lambda, delta, samples, &mut rng)?;
        let level = column.iter().map(|v| (v - search.threshold).max(0.0)).sum::<f64>() / column.len() as f64;
        if level >= lambda - LEVEL_TOL && level <= lambda + delta + LEVEL_TOL {
            inside += 1;
            if search.threshold > exact_threshold(&d, 0, &lambda)? + LEVEL_TOL {
                order_violations += 1;
            }
        }
    }
    let b = RowBase { n: Some(n), m: Some(0), epsilon: Some(delta), ..base(&id, master) };
    let rate = inside as f64 / runs as f64;
    let target = 1.0 - find_threshold_failure_bound(delta, samples);
    Ok(vec![
        b.row("window_rate", rate, target, rate >= target),
        b.row("threshold_order_violations", order_violations as f64, 0.0, order_violations == 0),
    ])
}

pub(super) fn decoder(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let id = cfg.experiment_id()?;
    let master = cfg.seed.unwrap_or_default();
    let n = cfg.n.unwrap_or(16);
    let trials = cfg.trials.unwrap_or(200);
    let cases: Vec<(f64, f64, f64)> = match &cfg.margins {
        Some(margins) => {
            let rate = cfg.rate.unwrap_or(1.0);
            margins.iter().map(|&mu| ((rate - mu) / 2.0, (rate + mu) / 2.0, mu)).collect()
        }
        None => {
            let (e, c) = (cfg.e.unwrap_or(0.0), cfg.c.unwrap_or(1.0));
            vec![(e, c, c - e)]
        }
    };
    let mut rows = Vec::new();
    for (j, &(e, c, margin)) in cases.iter().enumerate() {
        let seed = instance_seed(master, j as u64);
        let l = match cfg.l {
            Some(l) => l,
            None => list_size_param(n, e, c)?,
        };
        let mut hits = 0u64;
        for t in 0..trials {
            let mut rng = stream(seed, t);
            let x = BitVec::random(n, &mut rng);
            let mut oracle = NoisyOracle::new(x, e, c)?;
            hits += ld_decode(&mut oracle, n, l, &mut rng)?.contains(&x) as u64;
        }
        let rate = hits as f64 / trials as f64;
        let b = RowBase { n: Some(n), epsilon: Some(margin), ell: Some(l as u64), ..base(&id, seed) };
        rows.push(b.row("recovery_rate", rate, DECODER_TARGET, rate >= DECODER_TARGET - DECODER_SLACK));
    }
    Ok(rows)
}

pub(super) fn condenser(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let id = cfg.experiment_id()?;
    let master = cfg.seed.unwrap_or_default();
    let n = cfg.n.unwrap_or(CONDENSER_N);
    let k = cfg.k.map(|k| k as usize).unwrap_or(CONDENSER_K);
    let mut cc = CondenserConfig::new(n, k, cfg.trials.unwrap_or(2000), master);
    if let Some(m) = cfg.m {
        cc.m = m;
    }
    if let Some(gap) = cfg.gap {
        cc.gap = gap;
    }
    cc.adversary_advantage = cfg.advantage;
    cc.invocation_ceiling = cfg.invocation_ceiling;
    let r = condenser_experiment(&cc)?;
    let b = RowBase {
        n: Some(n),
        m: Some(r.m),
        k: Some(k as f64),
        epsilon: Some(r.adversary_advantage),
        ell: Some(r.list_exponent as u64),
        ..base(&id, master)
    };
    Ok(vec![
        b.row("recovery_rate", r.rate, r.target, r.rate > r.target),
        b.row("recovery_rate_lower95", r.rate_lower_95, r.target, r.rate_lower_95 > r.target),
        b.row("max_invocations", r.max_invocations as f64, r.invocation_ceiling as f64, r.within_ceiling),
    ])
}

/// Counts of grid points violating the analytic properties of `g` and `h`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AnalyticViolations {
    pub decreasing: u64,
    pub convexity: u64,
    pub lipschitz: u64,
    pub h_endpoint: u64,
}

fn log_grid() -> Vec<f64> {
    (0..=60).map(|i| 10f64.powf(-6.0 + i as f64 * 0.1)).collect()
}

fn count_g_violations(grid: &[f64], ell: u64, v: &mut AnalyticViolations) -> Result<()> {
    use crate::predictor::g_eval;
    let vals = grid.iter().map(|d| g_eval(d, ell)).collect::<Result<Vec<f64>>>()?;
    v.decreasing += vals.windows(2).filter(|w| w[1] >= w[0]).count() as u64;
    for i in 1..grid.len() - 1 {
        let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        let chord = (h1 * vals[i - 1] + h0 * vals[i + 1]) / (h0 + h1);
        if chord - vals[i] < -ANALYTIC_SLACK {
            v.convexity += 1;
        }
    }
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            if vals[j] <= vals[i] * (1.0 - ell as f64 / 2.0 * (grid[j] - grid[i])) - ANALYTIC_SLACK {
                v.lipschitz += 1;
            }
        }
    }
    Ok(())
}

pub fn analytic_violations() -> Result<AnalyticViolations> {
    use crate::predictor::{g_eval, h_eval};
    let mut v = AnalyticViolations::default();
    let log = log_grid();
    let even: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    for ell in (2..=64).step_by(2) {
        count_g_violations(&log, ell, &mut v)?;
        count_g_violations(&even, ell, &mut v)?;
        if (g_eval(&1e-12f64, ell)? - g_eval(&0.0f64, ell)?).abs() > 1e-6 {
            v.decreasing += 1;
        }
    }
    for ai in 1..=100 {
        let a = ai as f64 / 100.0;
        let least = (1.0 + 1.0 / a).ceil() as u64;
        for ell in [least, least + 1, 2 * least, 10 * least] {
            if (h_eval(1.0, a, ell)? - (1.0 + a)).abs() > ANALYTIC_SLACK {
                v.h_endpoint += 1;
            }
            for si in 1..=1000 {
                if h_eval(si as f64 / 1000.0, a, ell)? < 1.0 + a - ANALYTIC_SLACK {
                    v.h_endpoint += 1;
                }
            }
        }
    }
    Ok(v)
}

pub(super) fn g_properties(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let id = cfg.experiment_id()?;
    if cfg.margins.is_some() {
        return usage("g-properties takes no margin grid");
    }
    let v = analytic_violations()?;
    let b = base(&id, cfg.seed.unwrap_or_default());
    Ok([
        ("g_decreasing_violations", v.decreasing),
        ("g_convexity_violations", v.convexity),
        ("g_lipschitz_violations", v.lipschitz),
        ("h_endpoint_violations", v.h_endpoint),
    ]
    .into_iter()
    .map(|(metric, count)| b.row(metric, count as f64, 0.0, count == 0))
    .collect())
}
