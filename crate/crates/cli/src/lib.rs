//! Command-line experiment runner for temporal score rescaling.
//!
//! Subcommands reproduce the toy comparisons, the theory validators and the
//! `r_t` sweeps as CSV tables plus SVG figures under `<out>/<experiment>/`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tsr_core::{SamplerKind, ScheduleKind};

pub use config::Config;
pub use error::{CliError, CliResult};
pub use experiments::{Check, Experiment, Outcome};

use crate::config::PolicyName;
use crate::output::{ReadTable, Table};

#[derive(Debug, Parser)]
#[command(name = "tsr", version, about = "Temporal score rescaling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config, experiment manifest or sample sidecar JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output root; files go to `<out>/<experiment>/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Exit with status 3 when an acceptance threshold is missed.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_sampler)]
    pub sampler: Option<SamplerKind>,
    #[arg(long, value_parser = parse_schedule)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyName>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Guidance weight.
    #[arg(long)]
    pub w: Option<f64>,
    /// Guidance class.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Output CSV; the sidecar JSON is written next to it.
    #[arg(long, default_value = "batch.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// 1D six-mode comparison of CFG, CNS and TSR.
    Toy1d(ExperimentArgs),
    /// Checkerboard and swiss-roll coverage under CNS and TSR.
    Toy2d(ExperimentArgs),
    /// Score-error bounds on a separated two-mode mixture.
    Bounds(ExperimentArgs),
    /// Score gap of constant noise scaling.
    CnsGap(ExperimentArgs),
    /// r_t curves over k and sigma.
    Sweep(ExperimentArgs),
    /// Every experiment in turn.
    All(ExperimentArgs),
    /// Draw a batch from the configured mixture.
    Sample(SampleArgs),
    /// Rerun the experiment recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        check: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Regenerate figures from CSVs and collect all metrics into report.csv.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    s.parse().map_err(|e: tsr_core::Error| e.to_string())
}

fn parse_schedule(s: &str) -> Result<ScheduleKind, String> {
    s.parse().map_err(|e: tsr_core::Error| e.to_string())
}

fn load_config(common: &Common) -> CliResult<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match workers {
        None => f(),
        Some(0) => Err(CliError::Config("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Runs the experiments, prints one line per check and fails with
/// [`CliError::Check`] under `check` when any threshold is missed.
pub fn run_experiments(
    experiments: &[Experiment],
    config: &Config,
    out: &Path,
    check: bool,
) -> CliResult<Vec<Outcome>> {
    let mut outcomes = Vec::new();
    let mut failed = Vec::new();
    for &e in experiments {
        let outcome = e.run(config, out)?;
        println!("{} -> {}", e.name(), outcome.dir.display());
        for c in &outcome.checks {
            println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        failed.extend(outcome.failed().into_iter().map(|f| format!("{}/{f}", e.name())));
        outcomes.push(outcome);
    }
    if check && !failed.is_empty() {
        return Err(CliError::Check(failed));
    }
    Ok(outcomes)
}

fn apply_sample_flags(config: &mut Config, args: &SampleArgs) {
    let s = &mut config.sample;
    if let Some(v) = args.sampler {
        s.sampler = v;
    }
    if let Some(v) = args.steps {
        s.steps = Some(v);
    }
    if let Some(v) = args.policy {
        s.policy = v;
    }
    if let Some(v) = args.k {
        s.k = v;
    }
    if let Some(v) = args.sigma {
        s.sigma = Some(v);
    }
    if let Some(v) = args.w {
        s.w = v;
    }
    if let Some(v) = args.class {
        s.class = v;
    }
    if let Some(v) = args.n {
        s.n = v;
    }
    if let Some(v) = args.schedule {
        config.schedule = v;
    }
}

/// Experiment and config recorded in a `manifest.toml`.
pub fn load_manifest(path: &Path) -> CliResult<(Experiment, Config)> {
    let experiment = Experiment::from_name(&output::manifest_experiment(path)?)?;
    Ok((experiment, Config::load(path)?))
}

/// Regenerates every figure under `out` and concatenates the metrics tables.
pub fn report(out: &Path) -> CliResult<usize> {
    let mut merged: Option<Table> = None;
    for e in Experiment::ALL {
        let dir = out.join(e.name());
        let metrics = dir.join("metrics.csv");
        if !metrics.exists() {
            continue;
        }
        e.plot(&dir)?;
        let t = ReadTable::read(&metrics)?;
        let table = merged
            .get_or_insert_with(|| Table::new(&t.schema, &t.header.iter().map(String::as_str).collect::<Vec<_>>()));
        for row in t.rows {
            table.push(row);
        }
        println!("{}: figures regenerated", e.name());
    }
    let table = merged.ok_or_else(|| CliError::Config(format!("no experiment outputs under {}", out.display())))?;
    table.write(&out.join("report.csv"))?;
    Ok(table.len())
}

/// Entry point shared by the binary and the tests.
pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Toy1d(a) => run_single(Experiment::Toy1d, a),
        Command::Toy2d(a) => run_single(Experiment::Toy2d, a),
        Command::Bounds(a) => run_single(Experiment::Bounds, a),
        Command::CnsGap(a) => run_single(Experiment::CnsGap, a),
        Command::Sweep(a) => run_single(Experiment::Sweep, a),
        Command::All(a) => {
            let config = load_config(&a.common)?;
            with_workers(a.common.workers, || run_experiments(&Experiment::ALL, &config, &a.out, a.check)).map(|_| ())
        }
        Command::Sample(a) => {
            let mut config = load_config(&a.common)?;
            apply_sample_flags(&mut config, &a);
            let batch = with_workers(a.common.workers, || experiments::sample::run_sample(&config, &a.out))?;
            println!("{} samples -> {}", batch.len(), a.out.display());
            Ok(())
        }
        Command::Rerun { manifest, out, check, workers } => {
            let (experiment, config) = load_manifest(&manifest)?;
            with_workers(workers, || run_experiments(&[experiment], &config, &out, check)).map(|_| ())
        }
        Command::Report { out } => {
            let rows = report(&out)?;
            println!("{rows} metric rows -> {}", out.join("report.csv").display());
            Ok(())
        }
    }
}

fn run_single(e: Experiment, a: ExperimentArgs) -> CliResult<()> {
    let config = load_config(&a.common)?;
    with_workers(a.common.workers, || run_experiments(&[e], &config, &a.out, a.check)).map(|_| ())
}
