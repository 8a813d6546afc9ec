//! Experiment configuration: a TOML document with schedule settings at the
//! top level and one table per experiment. Every field has a default, so an
//! empty file is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tsr_core::schedule::{DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_T_CLIP};
use tsr_core::scorefield::{CheckerboardParams, MixtureSpec, SwissRollParams};
use tsr_core::{GaussianMixture, RescalePolicy, SamplerKind, Schedule, ScheduleKind};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_clip: f64,
    pub seed: u64,
    /// Target distribution of the `sample` subcommand.
    pub mixture: MixtureSpec,
    pub toy1d: Toy1dConfig,
    pub toy2d: Toy2dConfig,
    pub bounds: BoundsConfig,
    pub cns_gap: CnsGapConfig,
    pub sweep: SweepConfig,
    pub sample: SampleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schedule: ScheduleKind::Vp,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
            t_clip: DEFAULT_T_CLIP,
            seed: 0,
            mixture: MixtureSpec { weights: vec![1.0], means: vec![vec![2.0]], sigma: 0.5 },
            toy1d: Toy1dConfig::default(),
            toy2d: Toy2dConfig::default(),
            bounds: BoundsConfig::default(),
            cns_gap: CnsGapConfig::default(),
            sweep: SweepConfig::default(),
            sample: SampleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy1dConfig {
    pub means: Vec<f64>,
    pub sigma: f64,
    /// Component indices of each class.
    pub classes: Vec<Vec<usize>>,
    /// Class every run is conditioned on.
    pub class: usize,
    pub k: f64,
    pub tsr_sigma: f64,
    pub cfg_w: f64,
    pub n: usize,
    pub steps: usize,
    pub cutoff_multiplier: f64,
}

impl Default for Toy1dConfig {
    fn default() -> Self {
        Toy1dConfig {
            means: vec![-5.0, -3.0, -1.0, 1.0, 3.0, 5.0],
            sigma: 0.1,
            classes: vec![vec![0, 1, 2], vec![3, 4, 5]],
            class: 1,
            k: 10.0,
            tsr_sigma: 0.1,
            cfg_w: 10.0,
            n: 30_000,
            steps: 1000,
            cutoff_multiplier: tsr_core::metrics::DEFAULT_CUTOFF_MULTIPLIER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Checkerboard,
    Swissroll,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Checkerboard => "checkerboard",
            Dataset::Swissroll => "swissroll",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy2dConfig {
    pub datasets: Vec<Dataset>,
    pub dataset_size: usize,
    pub n: usize,
    pub k: f64,
    pub tsr_sigma: f64,
    pub ddpm_steps: usize,
    pub ddim_steps: usize,
    pub checkerboard: CheckerboardParams,
    pub swissroll: SwissRollParams,
}

impl Default for Toy2dConfig {
    fn default() -> Self {
        Toy2dConfig {
            datasets: vec![Dataset::Checkerboard, Dataset::Swissroll],
            dataset_size: 80_000,
            n: 1000,
            k: 4.0,
            tsr_sigma: 0.3,
            ddpm_steps: 200,
            ddim_steps: 50,
            checkerboard: CheckerboardParams::default(),
            swissroll: SwissRollParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// Means sit at `-half_separation` and `+half_separation`.
    pub half_separation: f64,
    pub sigma: f64,
    pub k: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    pub n: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { half_separation: 5.0, sigma: 0.1, k: 4.0, t_lo: 0.05, t_hi: 0.95, points: 20, n: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnsGapConfig {
    pub k: f64,
    /// Two-mode case: means at `-half_separation` and `+half_separation`.
    pub half_separation: f64,
    pub sigma: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_points: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_points: usize,
}

impl Default for CnsGapConfig {
    fn default() -> Self {
        CnsGapConfig {
            k: 4.0,
            half_separation: 2.0,
            sigma: 0.5,
            t_lo: 0.05,
            t_hi: 0.95,
            t_points: 10,
            x_lo: -3.0,
            x_hi: 3.0,
            x_points: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ks: Vec<f64>,
    /// Data scale used for the `ks` family.
    pub sigma_for_ks: f64,
    pub sigmas: Vec<f64>,
    /// Target ratio used for the `sigmas` family.
    pub k_for_sigmas: f64,
    pub onset_threshold: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ks: vec![0.5, 2.0, 5.0, 10.0],
            sigma_for_ks: 1.0,
            sigmas: vec![0.25, 0.5, 1.0, 3.0],
            k_for_sigmas: 2.0,
            onset_threshold: 1.5,
            points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    None,
    Tsr,
    Cns,
    Cfg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub sampler: SamplerKind,
    /// Defaults to the sampler's own step count.
    pub steps: Option<usize>,
    pub policy: PolicyName,
    pub k: f64,
    /// TSR data scale; defaults to the mixture's component std.
    pub sigma: Option<f64>,
    pub w: f64,
    pub class: usize,
    pub n: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            sampler: SamplerKind::Ddim,
            steps: None,
            policy: PolicyName::Tsr,
            k: 4.0,
            sigma: None,
            w: 1.0,
            class: 0,
            n: 20_000,
        }
    }
}

impl SampleConfig {
    pub fn policy(&self, mixture: &GaussianMixture) -> RescalePolicy {
        match self.policy {
            PolicyName::None => RescalePolicy::None,
            PolicyName::Tsr => RescalePolicy::Tsr { k: self.k, sigma: self.sigma.unwrap_or(mixture.sigma()) },
            PolicyName::Cns => RescalePolicy::Cns { k: self.k },
            PolicyName::Cfg => RescalePolicy::Cfg { w: self.w, class: self.class },
        }
    }
}

impl Config {
    pub fn schedule(&self) -> CliResult<Schedule> {
        Ok(Schedule::new(self.schedule, self.beta_min, self.beta_max, self.t_clip)?)
    }

    /// Schedule for experiments whose samplers or theory require VP.
    pub fn vp_schedule(&self, experiment: &str) -> CliResult<Schedule> {
        let s = self.schedule()?;
        if s.kind != ScheduleKind::Vp {
            return Err(CliError::Config(format!("{experiment} requires schedule = \"vp\"")));
        }
        Ok(s)
    }

    pub fn mixture(&self) -> CliResult<GaussianMixture> {
        Ok(GaussianMixture::try_from(self.mixture.clone())?)
    }

    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let value: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        // A manifest nests the resolved config under [config].
        let body = match value.get("config") {
            Some(toml::Value::Table(inner)) => inner.clone(),
            _ => value,
        };
        body.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
    }

    pub fn from_json_str(text: &str) -> CliResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let body = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        serde_json::from_value(body).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML config or manifest, or a JSON sample sidecar.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|ext| ext == "json") {
            Config::from_json_str(&text)
        } else {
            Config::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
