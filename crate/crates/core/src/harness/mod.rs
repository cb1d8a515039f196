//! Experiment configuration, seeded suite orchestration and report emission.
//!
//! Every suite derives per-instance child seeds from the master seed as
//! `child_seed(stream(master, i))`, so a single row can be replayed from its `seed`
//! column alone and reruns produce byte-identical CSV.

mod report;
mod suites;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bitlin::{child_seed, stream};
use crate::condenser::{MAX_CONDENSER_K, MAX_CONDENSER_N};
use crate::distmodel::MAX_TABLE_BITS;
use crate::error::{usage, Error, Result};

pub use report::{emit_report, read_csv, write_csv, ReportFormat, CSV_COLUMNS};
pub use suites::{
    analytic_violations, AnalyticViolations, ANALYTIC_SLACK, CERTIFICATE_TOL, SHIFTED_TOL, DECODER_SLACK, DECODER_TARGET,
    LEVEL_TOL, MC_SIGMAS, OBJECTIVE_TOL,
};

/// Validation suites the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    PredictorBound,
    Condenser,
    Decoder,
    Threshold,
    OptimizerOracle,
    GProperties,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::PredictorBound => "predictor-bound",
            Suite::Condenser => "condenser",
            Suite::Decoder => "decoder",
            Suite::Threshold => "threshold",
            Suite::OptimizerOracle => "optimizer-oracle",
            Suite::GProperties => "g-properties",
        }
    }

    pub fn randomized(self) -> bool {
        self != Suite::GProperties
    }
}

/// Arithmetic used by the predictor-bound suite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arithmetic {
    #[default]
    Exact,
    Float,
}

/// One experiment, as read from a TOML file. Unset fields take suite defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Suite>,
    pub id: Option<String>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<f64>,
    /// Monte-Carlo trials, decoding trials, condenser trials or threshold runs.
    pub trials: Option<u64>,
    /// Random instances per suite.
    pub instances: Option<usize>,
    /// Larger instances checked only against the optimality certificate.
    pub large_instances: Option<usize>,
    /// Instances on which the properties of the shifted distinguisher `D'` are checked.
    pub shifted_instances: Option<usize>,
    pub arithmetic: Option<Arithmetic>,
    /// Monte-Carlo trials per instance for the predictor law; 0 skips it.
    pub mc_trials: Option<u64>,
    pub mc_instances: Option<usize>,
    pub delta: Option<f64>,
    pub samples: Option<u64>,
    pub e: Option<f64>,
    pub c: Option<f64>,
    /// Decoder margin grid `c - e` at fixed answer rate `c + e`.
    pub margins: Option<Vec<f64>>,
    pub rate: Option<f64>,
    /// Fixed list exponent for the decoder instead of `list_size_param`.
    pub l: Option<usize>,
    pub gap: Option<u32>,
    pub advantage: Option<f64>,
    pub invocation_ceiling: Option<u64>,
    pub output: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: Suite, seed: u64) -> Self {
        Self { kind: Some(kind), seed: Some(seed), ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("experiment config: {e}")))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overridden_by(mut self, other: &ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            kind, id, seed, n, m, k, trials, instances, large_instances, shifted_instances, arithmetic, mc_trials,
            mc_instances, delta, samples, e, c, margins, rate, l, gap, advantage, invocation_ceiling, output, plot
        );
        self
    }

    pub fn suite(&self) -> Result<Suite> {
        self.kind.ok_or_else(|| Error::Usage("experiment kind is not set".into()))
    }

    pub fn experiment_id(&self) -> Result<String> {
        Ok(self.id.clone().unwrap_or_else(|| self.kind.map(Suite::name).unwrap_or("experiment").to_string()))
    }

    /// Checks desk-scale caps and required fields.
    pub fn validate(&self) -> Result<()> {
        let suite = self.suite()?;
        if suite.randomized() && self.seed.is_none() {
            return usage(format!("suite {} is randomized: a master seed is required", suite.name()));
        }
        if let (Some(n), Some(m)) = (self.n, self.m) {
            if n + m > MAX_TABLE_BITS {
                return usage(format!("n + m = {} exceeds the cap {MAX_TABLE_BITS}", n + m));
            }
        }
        if self.trials == Some(0) {
            return usage("trials must be at least 1");
        }
        if suite == Suite::Condenser {
            let n = self.n.unwrap_or(suites::CONDENSER_N);
            let k = self.k.unwrap_or(suites::CONDENSER_K as f64);
            if k.fract() != 0.0 || k < 1.0 || k > MAX_CONDENSER_K as f64 || k > n as f64 || n > MAX_CONDENSER_N {
                return usage(format!(
                    "condenser runs need integer 1 <= k <= min(n, {MAX_CONDENSER_K}) and n <= {MAX_CONDENSER_N}; got n = {n}, k = {k}"
                ));
            }
        }
        Ok(())
    }
}

/// One line of a report. Columns not meaningful for a metric are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub seed: u64,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<f64>,
    pub epsilon: Option<f64>,
    pub ell_or_l: Option<u64>,
    pub metric: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Seed of instance `index` under `master`.
pub fn instance_seed(master: u64, index: u64) -> u64 {
    child_seed(&mut stream(master, index))
}

/// Runs the configured suite; rows are ordered by instance index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let rows = match cfg.suite()? {
        Suite::PredictorBound => suites::predictor_bound(cfg),
        Suite::Condenser => suites::condenser(cfg),
        Suite::Decoder => suites::decoder(cfg),
        Suite::Threshold => suites::threshold(cfg),
        Suite::OptimizerOracle => suites::optimizer_oracle(cfg),
        Suite::GProperties => suites::g_properties(cfg),
    }?;
    if rows.is_empty() {
        return usage("the configuration produced no rows");
    }
    Ok(rows)
}

/// Runs the experiment and writes the CSV, the metadata sidecar and the optional plot.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let rows = run_experiment(cfg)?;
    if let Some(path) = &cfg.output {
        emit_report(&rows, path, ReportFormat::Csv)?;
        report::write_sidecar(path, cfg)?;
    }
    if let Some(path) = &cfg.plot {
        emit_report(&rows, path, ReportFormat::Plot)?;
    }
    Ok(rows)
}

pub fn all_pass(rows: &[ReportRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_and_overrides() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"decoder\"\nseed = 9\nn = 16\ne = 0.0\nc = 0.1\ntrials = 5\noutput = \"out.csv\"\n",
        )
        .unwrap();
        assert_eq!(cfg.kind, Some(Suite::Decoder));
        assert_eq!(cfg.experiment_id().unwrap(), "decoder");
        let over = ExperimentConfig { seed: Some(10), trials: Some(7), ..Default::default() };
        let merged = cfg.clone().overridden_by(&over);
        assert_eq!((merged.seed, merged.trials, merged.n), (Some(10), Some(7), Some(16)));
        assert_eq!(ExperimentConfig::from_toml(&merged.to_toml().unwrap()).unwrap(), merged);
        assert!(ExperimentConfig::from_toml("kind = \"decoder\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"nope\"\n").is_err());
    }

    #[test]
    fn validation_refuses_bad_configs() {
        let mut cfg = ExperimentConfig { kind: Some(Suite::Threshold), ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.seed = Some(1);
        assert!(cfg.validate().is_ok());
        cfg.trials = Some(0);
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig { kind: Some(Suite::GProperties), ..Default::default() }.validate().is_ok());
        let big = ExperimentConfig { n: Some(20), m: Some(5), ..ExperimentConfig::new(Suite::OptimizerOracle, 1) };
        assert!(big.validate().is_err());
        let mut cond = ExperimentConfig::new(Suite::Condenser, 1);
        cond.k = Some(9.0);
        cond.n = Some(12);
        assert!(cond.validate().is_err());
        cond.k = Some(2.5);
        assert!(cond.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_err());
    }

    #[test]
    fn instance_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..100).map(|i| instance_seed(3, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_eq!(seeds[7], instance_seed(3, 7));
        assert_ne!(instance_seed(3, 0), instance_seed(4, 0));
    }
}
