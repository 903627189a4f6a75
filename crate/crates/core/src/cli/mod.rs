//! Batch command-line front end and the on-disk formats.
//!
//! ```text
//! sbi simulate --config run.toml --n 10000 --workers 4 --out sims/
//! sbi train    --config run.toml --batch sims/ --out model/
//! sbi sample   --config run.toml --checkpoint model/model.ckpt --x-obs 0.5,-0.2 --n 1000 --out post/
//! sbi diagnose sbc --config run.toml --checkpoint model/model.ckpt --out sbc/
//! sbi corner   --samples post/samples.csv --bins 30 --out corner/
//! ```
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

mod config;
mod corner;
mod files;

pub use config::{DiagnosticsConfig, MethodConfig, RunConfig, SimulatorConfig, TarpReferenceKind, SIMULATORS};
pub use corner::{corner_data, ConditionalSpec, CornerData, Histogram1d, Histogram2d};
pub use files::{
    fmt_f64, import_batch_csv, read_batch, read_checkpoint, read_numeric_csv, read_samples, write_batch,
    write_checkpoint, write_samples, BatchHeader, Checkpoint, CheckpointHeader, BATCH_CSV, BATCH_JSON, CHECKPOINT,
    MANIFEST_JSON, REPORT_JSON, SAMPLES_CSV,
};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::RngCore;
use serde_json::json;

use crate::diagnostics::{
    c2st, expected_coverage_rank, run_sbc, run_tarp, CoverageCurve, DiagnosticReport, TarpReference,
};
use crate::distributions::Distribution;
use crate::error::{Result, SbiError};
use crate::inference::{build_posterior, run_sequential, train_amortized, Posterior, RunManifest};
use crate::rng::{labeled_seed, rng_from_seed, Rng};
use crate::simgym::{simulate_for_sbi, simulate_parameters};

#[derive(Debug, Parser)]
#[command(name = "sbi", version, about = "Simulation-based inference from the command line")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw parameters from the prior and run the configured simulator.
    Simulate(SimulateArgs),
    /// Convert an external CSV of simulations into a batch.
    Import(ImportArgs),
    /// Train an estimator on a batch (or run sequential rounds).
    Train(TrainArgs),
    /// Sample the posterior of a checkpoint at an observation.
    Sample(SampleArgs),
    /// Calibration and two-sample diagnostics.
    Diagnose {
        #[command(subcommand)]
        kind: DiagnoseKind,
    },
    /// Histogram data for corner plots.
    Corner(CornerArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Defaults to `method.workers`.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub theta_dim: usize,
    #[arg(long)]
    pub x_dim: usize,
    /// Recorded in batch.json.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory holding batch.csv and batch.json. Required for one round.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// Observation for sequential rounds: comma-separated values, `;` between rows.
    #[arg(long, allow_hyphen_values = true)]
    pub x_obs: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated values, `;` between i.i.d. rows.
    #[arg(long, allow_hyphen_values = true)]
    pub x_obs: String,
    #[arg(long)]
    pub n: usize,
    /// Supplies the seed and the `[sampler]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseKind {
    /// Simulation-based calibration.
    Sbc(CalibrationArgs),
    /// Expected coverage with random reference points.
    Tarp(CalibrationArgs),
    /// Expected coverage from posterior density ranks.
    Coverage(CalibrationArgs),
    /// Classifier two-sample test between two sample files.
    C2st(C2stArgs),
}

#[derive(Debug, Args)]
pub struct CalibrationArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use the exact posterior of the linear-gaussian simulator.
    #[arg(long)]
    pub oracle: bool,
    /// Multiplies the oracle covariance (values other than 1 miscalibrate it).
    #[arg(long, default_value_t = 1.0)]
    pub oracle_cov_scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct C2stArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    pub reference: Option<PathBuf>,
    /// Compare against exact posterior draws at `--x-obs` (needs `--config`).
    #[arg(long, requires_all = ["config", "x_obs"])]
    pub oracle: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub x_obs: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CornerArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Conditioned dimension; repeat for several.
    #[arg(long)]
    pub condition_dim: Vec<usize>,
    /// Value of the matching `--condition-dim`.
    #[arg(long, allow_negative_numbers = true)]
    pub condition_value: Vec<f64>,
    #[arg(long, requires = "condition_dim")]
    pub band: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, argv.get(1..).unwrap_or_default()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs one command; `argv` (without the program name) goes into the manifest.
pub fn execute(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a, argv),
        Command::Import(a) => cmd_import(&a, argv),
        Command::Train(a) => cmd_train(&a, argv),
        Command::Sample(a) => cmd_sample(&a, argv),
        Command::Diagnose { kind } => cmd_diagnose(&kind, argv),
        Command::Corner(a) => cmd_corner(&a, argv),
        Command::Replay(a) => cmd_replay(&a),
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn manifest(command: &str, seed: u64, argv: &[String], run: Option<&RunConfig>) -> Result<RunManifest> {
    Ok(RunManifest {
        command: command.into(),
        seed,
        rounds: run.map_or(0, |c| c.method.rounds),
        config: json!({ "argv": argv, "run": run.map(serde_json::to_value).transpose()? }),
        ..RunManifest::default()
    })
}

fn write_manifest(out: &Path, m: &RunManifest) -> Result<()> {
    fs::write(out.join(MANIFEST_JSON), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// `"1,2;3,4"` → 2 × 2.
pub fn parse_observation(s: &str) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| SbiError::Config(format!("--x-obs: bad number '{v}'"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return Err(SbiError::Config("--x-obs rows differ in length".into()));
    }
    Ok(Array2::from_shape_vec((rows.len(), w), rows.into_iter().flatten().collect()).expect("rows checked"))
}

fn cmd_simulate(a: &SimulateArgs, argv: &[String]) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let prior = cfg.prior()?;
    let sim = cfg.simulator()?;
    let workers = a.workers.unwrap_or(cfg.method.workers);
    let sim_seed = labeled_seed(cfg.seed, "sim");
    let mut batch = simulate_for_sbi(&prior, sim.as_ref(), a.n, workers, &mut rng_from_seed(sim_seed))?;
    batch.provenance = format!("simulate:{}", cfg.simulator.name);
    prepare_out(&a.out)?;
    write_batch(&a.out, &batch)?;
    println!("simulated {} rows: {} valid, {} invalid", batch.len(), batch.n_valid(), batch.len() - batch.n_valid());
    let mut m = manifest("simulate", cfg.seed, argv, Some(&cfg))?;
    m.seeds = vec![("sim".into(), sim_seed), ("batch".into(), batch.seed)];
    m.batches = vec![BATCH_CSV.into(), BATCH_JSON.into()];
    m.outputs = m.batches.clone();
    write_manifest(&a.out, &m)
}

fn cmd_import(a: &ImportArgs, argv: &[String]) -> Result<()> {
    let batch = import_batch_csv(&a.csv, a.theta_dim, a.x_dim, a.seed, &format!("import:{}", path_str(&a.csv)))?;
    prepare_out(&a.out)?;
    write_batch(&a.out, &batch)?;
    println!("imported {} rows: {} valid, {} invalid", batch.len(), batch.n_valid(), batch.len() - batch.n_valid());
    let mut m = manifest("import", a.seed, argv, None)?;
    m.batches = vec![BATCH_CSV.into(), BATCH_JSON.into()];
    m.outputs = m.batches.clone();
    write_manifest(&a.out, &m)
}

fn cmd_train(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let train_seed = labeled_seed(cfg.seed, "train");
    let method = cfg.method(train_seed)?;
    let mut m = manifest("train", cfg.seed, argv, Some(&cfg))?;
    m.method = Some(cfg.method.kind);
    m.seeds.push(("train".into(), train_seed));
    prepare_out(&a.out)?;

    let (estimator, report, summary) = if cfg.method.rounds == 1 {
        let dir = a
            .batch
            .as_ref()
            .ok_or_else(|| SbiError::Config("train: --batch is required when method.rounds = 1".into()))?;
        let batch = read_batch(dir)?;
        let t = train_amortized(&method, &batch)?;
        m.batches.push(path_str(&dir.join(BATCH_CSV)));
        let summary = format!("{} rows used, {} invalid dropped", batch.len() - t.dropped, t.dropped);
        (t.estimator, t.report, summary)
    } else {
        let x = a.x_obs.as_deref().ok_or_else(|| SbiError::Config("train: sequential rounds need --x-obs".into()))?;
        let x_o = parse_observation(x)?;
        let sim = cfg.simulator()?;
        let sim_seed = labeled_seed(cfg.seed, "sim");
        let r = run_sequential(
            &method,
            sim.as_ref(),
            &x_o,
            cfg.method.rounds,
            cfg.method.sims_per_round,
            cfg.method.workers,
            &cfg.sampler,
            &mut rng_from_seed(sim_seed),
        )?;
        m.seeds.push(("sim".into(), sim_seed));
        for (i, s) in r.round_seeds.iter().enumerate() {
            m.seeds.push((format!("round{}", i + 1), *s));
        }
        let all = r.batches.iter().skip(1).try_fold(r.batches[0].clone(), |acc, b| acc.append(b))?;
        write_batch(&a.out, &all)?;
        m.batches = vec![BATCH_CSV.into(), BATCH_JSON.into()];
        m.outputs.extend(m.batches.clone());
        let summary = format!("{} rounds, {} rows used in the final fit", cfg.method.rounds, r.n_train);
        (r.estimator, r.reports.last().cloned().unwrap_or_default(), summary)
    };
    let ck = Checkpoint { method: cfg.method.kind, prior: method.prior.clone(), estimator, report };
    write_checkpoint(&a.out.join(CHECKPOINT), &ck)?;
    println!(
        "trained {} ({}): {summary}; best validation loss {:.6} at epoch {}",
        cfg.method.kind.name(),
        ck.estimator.header().kind,
        ck.report.best_val_loss,
        ck.report.best_epoch
    );
    m.checkpoints.push(CHECKPOINT.into());
    m.outputs.push(CHECKPOINT.into());
    write_manifest(&a.out, &m)
}

fn check_method(cfg: &RunConfig, ck: &Checkpoint) -> Result<()> {
    if cfg.method.kind != ck.method {
        return Err(SbiError::Config(format!(
            "checkpoint was trained with {} but the config asks for {}",
            ck.method.name(),
            cfg.method.kind.name()
        )));
    }
    Ok(())
}

fn cmd_sample(a: &SampleArgs, argv: &[String]) -> Result<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let seed = a
        .seed
        .or(cfg.as_ref().map(|c| c.seed))
        .ok_or_else(|| SbiError::Config("sample: pass --seed or --config".into()))?;
    let ck = read_checkpoint(&a.checkpoint)?;
    if let Some(c) = &cfg {
        check_method(c, &ck)?;
    }
    let sampler = cfg.as_ref().map(|c| c.sampler.clone()).unwrap_or_default();
    let x_o = parse_observation(&a.x_obs)?;
    let post = build_posterior(ck.method, ck.estimator, ck.prior, x_o, sampler)?;
    let sample_seed = labeled_seed(seed, "sample");
    let s = post.sample(a.n, &mut rng_from_seed(sample_seed))?;
    prepare_out(&a.out)?;
    write_samples(&a.out.join(SAMPLES_CSV), &s.samples)?;
    let report = json!({
        "method": ck.method.name(),
        "strategy": s.strategy,
        "n": s.samples.nrows(),
        "acceptance_rate": s.acceptance_rate,
        "ess": s.ess,
        "mcmc": s.mcmc,
    });
    fs::write(a.out.join(REPORT_JSON), serde_json::to_string_pretty(&report)?)?;
    println!("wrote {} samples ({:?})", s.samples.nrows(), s.strategy);
    let mut m = manifest("sample", seed, argv, cfg.as_ref())?;
    m.method = Some(ck.method);
    m.seeds.push(("sample".into(), sample_seed));
    m.checkpoints.push(path_str(&a.checkpoint));
    m.outputs = vec![SAMPLES_CSV.into(), REPORT_JSON.into()];
    write_manifest(&a.out, &m)
}

/// Posterior of one diagnostic case.
enum CasePosterior {
    Exact(Distribution),
    Trained(Box<Posterior>),
}

impl CasePosterior {
    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        match self {
            CasePosterior::Exact(d) => d.sample(n, rng),
            CasePosterior::Trained(p) => Ok(p.sample(n, rng)?.samples),
        }
    }

    /// Any monotone transform of the density works for ranking.
    fn log_density(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        match self {
            CasePosterior::Exact(d) => d.log_prob_batch(theta),
            CasePosterior::Trained(p) => p.log_target(theta),
        }
    }
}

struct PosteriorSource {
    cfg: RunConfig,
    checkpoint: Option<Checkpoint>,
    oracle_scale: f64,
}

impl PosteriorSource {
    fn new(a: &CalibrationArgs) -> Result<Self> {
        let cfg = RunConfig::load(&a.config)?;
        let checkpoint = match &a.checkpoint {
            Some(p) => {
                let ck = read_checkpoint(p)?;
                check_method(&cfg, &ck)?;
                if ck.prior != cfg.prior()? {
                    return Err(SbiError::Config("checkpoint prior differs from the config prior".into()));
                }
                Some(ck)
            }
            None => {
                if !(a.oracle_cov_scale > 0.0) {
                    return Err(SbiError::Config("--oracle-cov-scale must be positive".into()));
                }
                None
            }
        };
        Ok(Self { cfg, checkpoint, oracle_scale: a.oracle_cov_scale })
    }

    fn at(&self, x: &[f64]) -> Result<CasePosterior> {
        match &self.checkpoint {
            None => Ok(CasePosterior::Exact(self.cfg.oracle_posterior(x)?.with_scaled_covariance(self.oracle_scale)?)),
            Some(ck) => {
                let x_o = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
                let p =
                    build_posterior(ck.method, ck.estimator.clone(), ck.prior.clone(), x_o, self.cfg.sampler.clone())?;
                Ok(CasePosterior::Trained(Box::new(p)))
            }
        }
    }
}

fn cmd_diagnose(kind: &DiagnoseKind, argv: &[String]) -> Result<()> {
    match kind {
        DiagnoseKind::C2st(a) => cmd_c2st(a, argv),
        DiagnoseKind::Sbc(a) | DiagnoseKind::Tarp(a) | DiagnoseKind::Coverage(a) => {
            let src = PosteriorSource::new(a)?;
            let cfg = &src.cfg;
            let dc = &cfg.diagnostics;
            let diag_seed = labeled_seed(cfg.seed, "diag");
            let mut rng = rng_from_seed(diag_seed);
            let prior = cfg.prior()?;
            let sim = cfg.simulator()?;
            prepare_out(&a.out)?;
            let mut outputs = vec![REPORT_JSON.to_string()];
            let (name, report) = match kind {
                DiagnoseKind::Sbc(_) => {
                    let mut post_fn = |x: &[f64], l: usize, rng: &mut Rng| src.at(x)?.sample(l, rng);
                    let r = run_sbc(&prior, sim.as_ref(), &mut post_fn, dc.trials, dc.posterior_draws, &mut rng)?;
                    fs::write(a.out.join("ranks.csv"), r.to_csv())?;
                    outputs.push("ranks.csv".into());
                    ("sbc", r.report(dc.sbc_alpha))
                }
                _ => {
                    let theta = prior.sample(dc.cases, &mut rng)?;
                    let batch = simulate_parameters(sim.as_ref(), theta, cfg.method.workers, rng.next_u64())?;
                    let (batch, _) = batch.filter_valid()?;
                    let posts: Vec<CasePosterior> =
                        batch.x.rows().into_iter().map(|x| src.at(&x.to_vec())).collect::<Result<_>>()?;
                    let samples: Vec<Array2<f64>> =
                        posts.iter().map(|p| p.sample(dc.posterior_samples, &mut rng)).collect::<Result<_>>()?;
                    let (name, curve): (&str, CoverageCurve) = if matches!(kind, DiagnoseKind::Tarp(_)) {
                        let reference = match dc.tarp_reference {
                            TarpReferenceKind::SampleBox => TarpReference::SampleBox,
                            TarpReferenceKind::Prior => TarpReference::Distribution(prior.clone()),
                        };
                        ("tarp", run_tarp(&batch.theta, &samples, &reference, &mut rng)?)
                    } else {
                        let mut lq = |i: usize, t: &Array2<f64>| posts[i].log_density(t);
                        ("coverage", expected_coverage_rank(&batch.theta, &samples, &mut lq)?)
                    };
                    fs::write(a.out.join("coverage.csv"), curve.to_csv())?;
                    outputs.push("coverage.csv".into());
                    (name, curve.report(name, dc.coverage_tolerance))
                }
            };
            write_report(&a.out, &report)?;
            let mut m = manifest(&format!("diagnose {name}"), cfg.seed, argv, Some(cfg))?;
            m.method = src.checkpoint.as_ref().map(|c| c.method);
            m.seeds.push(("diag".into(), diag_seed));
            m.checkpoints = a.checkpoint.iter().map(|p| path_str(p)).collect();
            m.outputs = outputs;
            write_manifest(&a.out, &m)
        }
    }
}

fn write_report(out: &Path, report: &DiagnosticReport) -> Result<()> {
    fs::write(out.join(REPORT_JSON), serde_json::to_string_pretty(report)?)?;
    println!(
        "{}: {} (statistic {:.4}, threshold {})",
        report.method, report.verdict, report.statistic, report.threshold
    );
    Ok(())
}

fn cmd_c2st(a: &C2stArgs, argv: &[String]) -> Result<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let seed = a
        .seed
        .or(cfg.as_ref().map(|c| c.seed))
        .ok_or_else(|| SbiError::Config("c2st: pass --seed or --config".into()))?;
    let diag_seed = labeled_seed(seed, "diag");
    let mut rng = rng_from_seed(diag_seed);
    let p = read_samples(&a.samples)?;
    let q = match (&a.reference, &cfg) {
        (Some(r), _) => read_samples(r)?,
        (None, Some(c)) => {
            let x = parse_observation(a.x_obs.as_deref().unwrap_or_default())?;
            if x.nrows() != 1 {
                return Err(SbiError::Config("the oracle takes a single observation row".into()));
            }
            c.oracle_posterior(&x.row(0).to_vec())?.sample(p.nrows(), &mut rng)?
        }
        (None, None) => return Err(SbiError::Config("c2st: pass --reference or --oracle".into())),
    };
    let dc = cfg.as_ref().map(|c| c.diagnostics.clone()).unwrap_or_default();
    let r = c2st(&p, &q, &dc.c2st, &mut rng)?;
    prepare_out(&a.out)?;
    write_report(&a.out, &r.report(dc.c2st_threshold))?;
    let mut m = manifest("diagnose c2st", seed, argv, cfg.as_ref())?;
    m.seeds.push(("diag".into(), diag_seed));
    m.outputs = vec![REPORT_JSON.into()];
    write_manifest(&a.out, &m)
}

fn cmd_corner(a: &CornerArgs, argv: &[String]) -> Result<()> {
    let samples = read_samples(&a.samples)?;
    let spec = if a.condition_dim.is_empty() {
        None
    } else {
        Some(ConditionalSpec {
            dims: a.condition_dim.clone(),
            values: a.condition_value.clone(),
            band: a.band.filter(|b| b.is_finite()),
        })
    };
    let c = corner_data(&samples, a.bins, spec.as_ref())?;
    prepare_out(&a.out)?;
    fs::write(a.out.join("corner.json"), serde_json::to_string(&c)?)?;
    println!("corner data: {} marginals, {} pairs from {} samples", c.marginals.len(), c.pairs.len(), c.n_used);
    let mut m = manifest("corner", 0, argv, None)?;
    m.outputs = vec!["corner.json".into()];
    write_manifest(&a.out, &m)
}

/// Strips `--flag value` and `--flag=value` from `argv`.
fn strip_flag(argv: &[String], flag: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == flag {
            skip = true;
        } else if !a.starts_with(&format!("{flag}=")) {
            out.push(a.clone());
        }
    }
    out
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(&a.manifest)?)?;
    let argv: Vec<String> = serde_json::from_value(m.config["argv"].clone())
        .map_err(|e| SbiError::Format(format!("manifest argv: {e}")))?;
    if argv.first().map(String::as_str) == Some("replay") {
        return Err(SbiError::Config("cannot replay a replay".into()));
    }
    let mut argv = strip_flag(&strip_flag(&argv, "--out"), "--config");
    prepare_out(&a.out)?;
    if !m.config["run"].is_null() {
        let path = a.out.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(&m.config["run"])?)?;
        argv.push("--config".into());
        argv.push(path_str(&path));
    }
    argv.push("--out".into());
    argv.push(path_str(&a.out));
    let cli = Cli::try_parse_from(std::iter::once("sbi".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| SbiError::Config(format!("manifest command does not parse: {e}")))?;
    execute(cli.command, &argv)
}
