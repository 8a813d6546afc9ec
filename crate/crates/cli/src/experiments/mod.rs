//! Experiment drivers. Each writes its tables, a manifest and its plots under
//! `<out>/<experiment>/` and returns the outcome of its acceptance checks.

pub mod bounds;
pub mod cns_gap;
pub mod sample;
pub mod sweep;
pub mod toy1d;
pub mod toy2d;

use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{write_manifest, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Toy1d,
    Toy2d,
    Bounds,
    CnsGap,
    Sweep,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Toy1d, Experiment::Toy2d, Experiment::Bounds, Experiment::CnsGap, Experiment::Sweep];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Toy1d => "toy1d",
            Experiment::Toy2d => "toy2d",
            Experiment::Bounds => "bounds",
            Experiment::CnsGap => "cns-gap",
            Experiment::Sweep => "sweep",
        }
    }

    pub fn from_name(name: &str) -> CliResult<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| CliError::Config(format!("unknown experiment `{name}`")))
    }

    pub fn run(self, config: &Config, out_root: &Path) -> CliResult<Outcome> {
        let dir = out_root.join(self.name());
        let mut outcome = match self {
            Experiment::Toy1d => toy1d::run(config, &dir)?,
            Experiment::Toy2d => toy2d::run(config, &dir)?,
            Experiment::Bounds => bounds::run(config, &dir)?,
            Experiment::CnsGap => cns_gap::run(config, &dir)?,
            Experiment::Sweep => sweep::run(config, &dir)?,
        };
        outcome.files.push("metrics.csv".into());
        outcome.metrics.write(&dir.join("metrics.csv"))?;
        write_manifest(&dir, self.name(), config, &outcome.files)?;
        self.plot(&dir)?;
        Ok(outcome)
    }

    /// Regenerates the SVG figures from the experiment's CSV files.
    pub fn plot(self, dir: &Path) -> CliResult<()> {
        match self {
            Experiment::Toy1d => toy1d::plot(dir),
            Experiment::Toy2d => toy2d::plot(dir),
            Experiment::Bounds => bounds::plot(dir),
            Experiment::CnsGap => cns_gap::plot(dir),
            Experiment::Sweep => sweep::plot(dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

pub struct Outcome {
    pub dir: PathBuf,
    /// Data files written, relative to `dir`.
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    pub metrics: Metrics,
}

impl Outcome {
    pub fn failed(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect()
    }
}
