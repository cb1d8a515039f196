use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use entlab::distmodel::JointTable;
use entlab::harness::{
    all_pass, emit_report, run_and_emit, write_csv, Arithmetic, ExperimentConfig, ReportFormat, ReportRow, Suite,
    CERTIFICATE_TOL,
};
use entlab::metricopt::{kkt_violation, optimal_distribution, Distinguisher};
use entlab::predictor::predictor_attack;
use entlab::{Error, Exact, Result};

#[derive(Parser)]
#[command(name = "entlab", version, about = "Seeded experiments on computational entropy reductions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Master seed; required by every randomized suite.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment id written to every row.
    #[arg(long)]
    id: Option<String>,
    /// CSV report path; the report goes to stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// SVG plot path.
    #[arg(long)]
    plot: Option<PathBuf>,
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.seed = self.seed.or(cfg.seed);
        cfg.id = self.id.clone().or(cfg.id.take());
        cfg.output = self.output.clone().or(cfg.output.take());
        cfg.plot = self.plot.clone().or(cfg.plot.take());
    }
}

#[derive(Subcommand)]
enum Command {
    /// Predictor bound on planted instances, or one attack on a table and distinguisher file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["dist", "k"])]
        table: Option<PathBuf>,
        #[arg(long, requires = "table")]
        dist: Option<PathBuf>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        /// Monte-Carlo trials per instance for the success law.
        #[arg(long)]
        mc_trials: Option<u64>,
        #[arg(long)]
        mc_instances: Option<usize>,
        /// Evaluate in floating point instead of exact rationals.
        #[arg(long)]
        float: bool,
    },
    /// Reduction from a key adversary back to a predictor on a planted source.
    Condense {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        gap: Option<u32>,
        #[arg(long)]
        advantage: Option<f64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        invocation_ceiling: Option<u64>,
    },
    /// Hadamard list decoding under errors and erasures.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        e: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        /// Margins c - e to sweep at the answer rate given by --rate.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["e", "c"])]
        margins: Option<Vec<f64>>,
        #[arg(long, requires = "margins")]
        rate: Option<f64>,
        /// Fixed list exponent.
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Sampled threshold search on random single-z distinguishers.
    Threshold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        runs: Option<u64>,
    },
    /// Entropy-constrained maximizer against brute force, or on a table and distinguisher file.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["dist", "k"])]
        table: Option<PathBuf>,
        #[arg(long, requires = "table")]
        dist: Option<PathBuf>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        large_instances: Option<usize>,
        #[arg(long)]
        shifted_instances: Option<usize>,
        /// Largest n and m of the certificate-only instances.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Analytic properties of g and h on fixed grids.
    Gprops {
        #[command(flatten)]
        common: Common,
    },
    /// Experiments described by configuration files.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Runs the experiment in a TOML file; flags override file values.
    Run {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
    },
}

fn suite_config(kind: Suite, common: &Common, fill: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { kind: Some(kind), ..Default::default() };
    fill(&mut cfg);
    common.apply(&mut cfg);
    cfg
}

fn finish(rows: &[ReportRow], output: Option<&PathBuf>, plot: Option<&PathBuf>) -> Result<()> {
    match output {
        Some(path) => emit_report(rows, path, ReportFormat::Csv)?,
        None => write_csv(rows, std::io::stdout().lock())?,
    }
    if let Some(path) = plot {
        emit_report(rows, path, ReportFormat::Plot)?;
    }
    Ok(())
}

fn run_config(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let rows = run_and_emit(cfg)?;
    if cfg.output.is_none() {
        write_csv(&rows, std::io::stdout().lock())?;
    }
    Ok(rows)
}

fn file_row(common: &Common, d: &Distinguisher<f64>, k: f64, metric: &str, measured: f64, bound: f64, pass: bool) -> ReportRow {
    ReportRow {
        experiment_id: common.id.clone().unwrap_or_else(|| "file".into()),
        seed: common.seed.unwrap_or_default(),
        n: Some(d.n()),
        m: Some(d.m()),
        k: Some(k),
        epsilon: None,
        ell_or_l: None,
        metric: metric.into(),
        measured,
        bound,
        pass,
    }
}

fn predict_file(common: &Common, table: &PathBuf, dist: &PathBuf, k: f64, float: bool) -> Result<Vec<ReportRow>> {
    let (t, d) = (JointTable::load(table)?, Distinguisher::load(dist)?);
    let r = if float { predictor_attack(&t, &d, k)? } else { predictor_attack::<Exact>(&t.convert(), &d.convert(), k)? };
    let mut row = file_row(common, &d, k, "success_exact", r.success_exact, r.bound, r.pass);
    row.epsilon = Some(r.epsilon);
    row.ell_or_l = Some(r.ell);
    Ok(vec![row])
}

fn optimize_file(common: &Common, table: &PathBuf, dist: &PathBuf, k: f64) -> Result<Vec<ReportRow>> {
    let (t, d) = (JointTable::load(table)?, Distinguisher::load(dist)?);
    let opt = optimal_distribution(&d, &t, k)?;
    let kkt = kkt_violation(&d, &opt);
    let mut rows = vec![
        file_row(common, &d, k, "objective", opt.objective, opt.objective, true),
        file_row(common, &d, k, "lambda_norm", opt.profile.lambda_norm, opt.profile.lambda_norm, true),
        file_row(common, &d, k, "kkt_violation", kkt, CERTIFICATE_TOL, kkt <= CERTIFICATE_TOL),
    ];
    for (z, th) in opt.profile.thresholds.iter().enumerate() {
        rows.push(file_row(common, &d, k, &format!("threshold_z{z}"), *th, *th, true));
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<Vec<ReportRow>> {
    match cli.command {
        Command::Predict { common, table: Some(table), dist: Some(dist), k: Some(k), float, .. } => {
            let rows = predict_file(&common, &table, &dist, k, float)?;
            finish(&rows, common.output.as_ref(), common.plot.as_ref())?;
            Ok(rows)
        }
        Command::Predict { common, k, n, m, instances, mc_trials, mc_instances, float, .. } => {
            run_config(&suite_config(Suite::PredictorBound, &common, |c| {
                (c.k, c.n, c.m, c.instances, c.mc_trials, c.mc_instances) = (k, n, m, instances, mc_trials, mc_instances);
                c.arithmetic = Some(if float { Arithmetic::Float } else { Arithmetic::Exact });
            }))
        }
        Command::Condense { common, n, k, m, gap, advantage, trials, invocation_ceiling } => {
            run_config(&suite_config(Suite::Condenser, &common, |c| {
                (c.n, c.k, c.m, c.gap, c.advantage, c.trials) = (n, k.map(|k| k as f64), m, gap, advantage, trials);
                c.invocation_ceiling = invocation_ceiling;
            }))
        }
        Command::Decode { common, n, e, c: cc, margins, rate, l, trials } => {
            run_config(&suite_config(Suite::Decoder, &common, |c| {
                (c.n, c.e, c.c, c.margins, c.rate, c.l, c.trials) = (n, e, cc, margins, rate, l, trials);
            }))
        }
        Command::Threshold { common, n, delta, samples, runs } => {
            run_config(&suite_config(Suite::Threshold, &common, |c| {
                (c.n, c.delta, c.samples, c.trials) = (n, delta, samples, runs);
            }))
        }
        Command::Optimize { common, table: Some(table), dist: Some(dist), k: Some(k), .. } => {
            let rows = optimize_file(&common, &table, &dist, k)?;
            finish(&rows, common.output.as_ref(), common.plot.as_ref())?;
            Ok(rows)
        }
        Command::Optimize { common, instances, large_instances, shifted_instances, n, m, .. } => {
            run_config(&suite_config(Suite::OptimizerOracle, &common, |c| {
                (c.instances, c.large_instances, c.shifted_instances, c.n, c.m) =
                    (instances, large_instances, shifted_instances, n, m);
            }))
        }
        Command::Gprops { common } => run_config(&suite_config(Suite::GProperties, &common, |_| {})),
        Command::Experiment { action: ExperimentAction::Run { file, common, trials } } => {
            let mut cfg = ExperimentConfig::load(&file)?;
            common.apply(&mut cfg);
            cfg.trials = trials.or(cfg.trials);
            run_config(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(rows) => {
            let failed = rows.iter().filter(|r| !r.pass).count();
            eprintln!("{} rows, {failed} failed", rows.len());
            if all_pass(&rows) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("entlab: {e}");
            match e {
                Error::Usage(_) | Error::Domain(_) | Error::Format(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
