//! Reverse-time integrators driven by a [`ScoreField`] and a
//! [`RescalePolicy`].
//!
//! All samplers walk the uniform grid from `1 - t_clip` down to `t_clip`.
//! Each batch element owns the RNG stream `(seed, element index)`, draws its
//! prior first and its per-step noise afterwards, so batches are identical
//! whether integrated sequentially or in parallel.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rescale::{
    cfg_combine_in_place, rescale_epsilon_at, rescale_score_at, rescale_velocity_at, score_to_velocity_at,
    RescalePolicy,
};
use crate::rng::stream_rng;
use crate::schedule::{NoiseLevel, Schedule, ScheduleKind};
use crate::scorefield::ScoreField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// Ancestral sampling from the DDPM posterior.
    Ddpm,
    /// Deterministic DDIM (`eta = 0`).
    Ddim,
    /// Euler integration of the probability-flow ODE.
    EulerOde,
    /// Euler-Maruyama integration of the reverse VP SDE.
    EulerSde,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::Ddim => "ddim",
            SamplerKind::EulerOde => "euler-ode",
            SamplerKind::EulerSde => "euler-sde",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, SamplerKind::Ddpm | SamplerKind::EulerSde)
    }

    pub fn default_steps(self) -> usize {
        match self {
            SamplerKind::Ddpm | SamplerKind::EulerSde => 1000,
            SamplerKind::Ddim => 50,
            SamplerKind::EulerOde => 100,
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            "euler-ode" | "ode" => Ok(SamplerKind::EulerOde),
            "euler-sde" | "sde" => Ok(SamplerKind::EulerSde),
            other => {
                Err(Error::Parameter(format!("unknown sampler `{other}` (expected ddpm|ddim|euler-ode|euler-sde)")))
            }
        }
    }
}

fn default_prior_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub batch: usize,
    /// Standard deviation of the Gaussian prior at `1 - t_clip`.
    #[serde(default = "default_prior_scale")]
    pub prior_scale: f64,
}

impl SamplerConfig {
    /// Config with the default step count for `kind`.
    pub fn new(kind: SamplerKind, schedule: Schedule, batch: usize, seed: u64) -> Self {
        SamplerConfig { kind, steps: kind.default_steps(), schedule, seed, batch, prior_scale: 1.0 }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_prior_scale(mut self, prior_scale: f64) -> Self {
        self.prior_scale = prior_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.steps < 2 {
            return Err(Error::Config(format!("steps must be >= 2, got {}", self.steps)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if !(self.prior_scale.is_finite() && self.prior_scale > 0.0) {
            return Err(Error::Config(format!("prior_scale must be > 0, got {}", self.prior_scale)));
        }
        Ok(())
    }
}

/// Everything needed to regenerate a [`SampleBatch`] bit-exactly, given the
/// same score field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sampler: SamplerConfig,
    pub policy: RescalePolicy,
    pub field: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub dim: usize,
    /// Row-major `batch x dim`.
    pub points: Vec<f64>,
    pub meta: SampleMeta,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Values of one coordinate across the batch.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Checks that the (sampler, schedule, policy, field) combination is
/// supported, naming the violated constraint otherwise.
pub fn check_compatibility(config: &SamplerConfig, field: &dyn ScoreField, policy: &RescalePolicy) -> Result<()> {
    config.validate()?;
    policy.validate().map_err(|e| Error::Config(e.to_string()))?;
    let kind = config.kind;
    if kind != SamplerKind::EulerOde && config.schedule.kind != ScheduleKind::Vp {
        return Err(Error::Config(format!(
            "the {kind} sampler requires the vp schedule (got {})",
            config.schedule.kind
        )));
    }
    match *policy {
        RescalePolicy::Cns { .. } if !kind.is_stochastic() => {
            Err(Error::Config(format!("constant noise scaling only applies to stochastic samplers, not {kind}")))
        }
        RescalePolicy::Cfg { class, .. } if class >= field.num_classes() => {
            Err(Error::Config(format!("guidance class {class} unavailable: field has {} classes", field.num_classes())))
        }
        _ => Ok(()),
    }
}

/// Standard-normal prior draws (times `prior_scale`), row-major.
pub fn init_prior(config: &SamplerConfig, dim: usize) -> Vec<f64> {
    let mut points = vec![0.0; config.batch * dim];
    points.par_chunks_mut(dim).enumerate().for_each(|(i, x)| {
        let mut rng = stream_rng(config.seed, i as u64);
        fill_normal(&mut rng, x, config.prior_scale);
    });
    points
}

fn fill_normal<R: Rng>(rng: &mut R, out: &mut [f64], scale: f64) {
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = scale * z;
    }
}

struct Scratch {
    score: Vec<f64>,
    aux: Vec<f64>,
    noise: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch { score: vec![0.0; dim], aux: vec![0.0; dim], noise: vec![0.0; dim] }
    }
}

/// A score field, policy and schedule bound together, exposing single
/// reverse-time steps.
pub struct Integrator<'a> {
    schedule: Schedule,
    field: &'a dyn ScoreField,
    policy: RescalePolicy,
    /// The part of `policy` that multiplies the score (TSR or identity).
    score_policy: RescalePolicy,
    /// Noise multiplier, `1/sqrt(k)` under CNS.
    noise_scale: f64,
}

impl<'a> Integrator<'a> {
    pub fn new(schedule: Schedule, field: &'a dyn ScoreField, policy: RescalePolicy) -> Result<Self> {
        schedule.validate()?;
        policy.validate()?;
        let score_policy = match policy {
            RescalePolicy::Tsr { .. } => policy,
            _ => RescalePolicy::None,
        };
        Ok(Integrator { schedule, field, policy, score_policy, noise_scale: policy.noise_scale()? })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.dim(), got: x.len() })
        }
    }

    fn require_vp(&self) -> Result<()> {
        match self.schedule.kind {
            ScheduleKind::Vp => Ok(()),
            other => Err(Error::UnsupportedSchedule(other.name())),
        }
    }

    fn require_deterministic_policy(&self, sampler: SamplerKind) -> Result<()> {
        match self.policy {
            RescalePolicy::Cns { .. } => Err(Error::PolicyMisuse(format!(
                "constant noise scaling only applies to stochastic samplers, not {sampler}"
            ))),
            _ => Ok(()),
        }
    }

    /// Pretrained score, combined with the class-conditional score under
    /// guidance. TSR is applied afterwards in the sampler's own
    /// parameterization.
    fn model_score(&self, x: &[f64], level: &NoiseLevel, scratch: &mut Scratch) -> Result<()> {
        self.field.score_into(x, level, &mut scratch.score);
        if let RescalePolicy::Cfg { w, class } = self.policy {
            self.field.class_score_into(class, x, level, &mut scratch.aux)?;
            cfg_combine_in_place(&scratch.aux, &mut scratch.score, w)?;
        }
        Ok(())
    }

    /// Rescaled noise prediction `eps~ = r_t * (-sigma_t * score)` into
    /// `scratch.score`.
    fn epsilon(&self, x: &[f64], level: &NoiseLevel, scratch: &mut Scratch) -> Result<()> {
        self.model_score(x, level, scratch)?;
        scratch.score.iter_mut().for_each(|s| *s *= -level.sigma);
        rescale_epsilon_at(&self.score_policy, &mut scratch.score, level)
    }

    fn ddpm_update(&self, x: &mut [f64], from: &NoiseLevel, to: &NoiseLevel, scratch: &mut Scratch) -> Result<()> {
        self.epsilon(x, from, scratch)?;
        let (a_t, s_t, a_s, s_s) = (from.alpha, from.sigma, to.alpha, to.sigma);
        let a_ts = a_t / a_s;
        let var_ts = (s_t * s_t - a_ts * a_ts * s_s * s_s).max(0.0);
        let c_x = a_ts * s_s * s_s / (s_t * s_t);
        let c_x0 = a_s * var_ts / (s_t * s_t);
        let std = (var_ts * s_s * s_s / (s_t * s_t)).sqrt() * self.noise_scale;
        for ((xi, eps), z) in x.iter_mut().zip(&scratch.score).zip(&scratch.noise) {
            let x0 = (*xi - s_t * eps) / a_t;
            *xi = c_x * *xi + c_x0 * x0 + std * z;
        }
        Ok(())
    }

    fn ddim_update(&self, x: &mut [f64], from: &NoiseLevel, to: &NoiseLevel, scratch: &mut Scratch) -> Result<()> {
        self.epsilon(x, from, scratch)?;
        for (xi, eps) in x.iter_mut().zip(&scratch.score) {
            let x0 = (*xi - from.sigma * eps) / from.alpha;
            *xi = to.alpha * x0 + to.sigma * eps;
        }
        Ok(())
    }

    fn ode_update(&self, x: &mut [f64], level: &NoiseLevel, dt: f64, scratch: &mut Scratch) -> Result<()> {
        self.model_score(x, level, scratch)?;
        score_to_velocity_at(&scratch.score, x, level, &mut scratch.aux)?;
        rescale_velocity_at(&self.score_policy, &mut scratch.aux, x, level)?;
        for (xi, v) in x.iter_mut().zip(&scratch.aux) {
            *xi += v * dt;
        }
        Ok(())
    }

    fn sde_update(&self, x: &mut [f64], level: &NoiseLevel, dt: f64, scratch: &mut Scratch) -> Result<()> {
        let (f, g) = self.schedule.drift_diffusion(level.t)?;
        self.model_score(x, level, scratch)?;
        rescale_score_at(&self.score_policy, &mut scratch.score, level)?;
        // Reduced diffusion g/sqrt(k) paired with score k*s, so the drift
        // -(g/sqrt(k))^2 (k s) keeps its unscaled value.
        let k_cns = 1.0 / (self.noise_scale * self.noise_scale);
        let g_eff = g * self.noise_scale;
        let sqrt_dt = dt.abs().sqrt();
        for ((xi, s), z) in x.iter_mut().zip(&scratch.score).zip(&scratch.noise) {
            let drift = f * *xi - g_eff * g_eff * (k_cns * s);
            *xi += drift * dt + g_eff * sqrt_dt * z;
        }
        Ok(())
    }

    fn check_reverse_pair(&self, t_from: f64, t_to: f64) -> Result<(NoiseLevel, NoiseLevel)> {
        if t_to >= t_from {
            return Err(Error::Parameter(format!("reverse step needs t_to < t_from, got {t_from} -> {t_to}")));
        }
        Ok((self.schedule.level(t_from)?, self.schedule.level(t_to)?))
    }

    /// One ancestral step from `t_from` to `t_to` using the supplied standard
    /// normal draw.
    pub fn ddpm_step_with_noise(&self, x: &mut [f64], t_from: f64, t_to: f64, noise: &[f64]) -> Result<()> {
        self.require_vp()?;
        self.check_dim(x)?;
        self.check_dim(noise)?;
        let (from, to) = self.check_reverse_pair(t_from, t_to)?;
        let mut scratch = Scratch::new(self.dim());
        scratch.noise.copy_from_slice(noise);
        self.ddpm_update(x, &from, &to, &mut scratch)
    }

    pub fn ddpm_step<R: Rng>(&self, x: &mut [f64], t_from: f64, t_to: f64, rng: &mut R) -> Result<()> {
        let mut noise = vec![0.0; self.dim()];
        fill_normal(rng, &mut noise, 1.0);
        self.ddpm_step_with_noise(x, t_from, t_to, &noise)
    }

    pub fn ddim_step(&self, x: &mut [f64], t_from: f64, t_to: f64) -> Result<()> {
        self.require_vp()?;
        self.require_deterministic_policy(SamplerKind::Ddim)?;
        self.check_dim(x)?;
        let (from, to) = self.check_reverse_pair(t_from, t_to)?;
        self.ddim_update(x, &from, &to, &mut Scratch::new(self.dim()))
    }

    pub fn euler_ode_step(&self, x: &mut [f64], t: f64, dt: f64) -> Result<()> {
        self.require_deterministic_policy(SamplerKind::EulerOde)?;
        self.check_dim(x)?;
        let level = self.schedule.level(t)?;
        self.ode_update(x, &level, dt, &mut Scratch::new(self.dim()))
    }

    /// One Euler-Maruyama step with the supplied standard normal draw.
    /// `dt` is negative in reverse time.
    pub fn euler_sde_step_with_noise(&self, x: &mut [f64], t: f64, dt: f64, noise: &[f64]) -> Result<()> {
        self.require_vp()?;
        self.check_dim(x)?;
        self.check_dim(noise)?;
        if dt >= 0.0 {
            return Err(Error::Parameter(format!("reverse-time step needs dt < 0, got {dt}")));
        }
        let level = self.schedule.level(t)?;
        let mut scratch = Scratch::new(self.dim());
        scratch.noise.copy_from_slice(noise);
        self.sde_update(x, &level, dt, &mut scratch)
    }

    pub fn euler_sde_step<R: Rng>(&self, x: &mut [f64], t: f64, dt: f64, rng: &mut R) -> Result<()> {
        let mut noise = vec![0.0; self.dim()];
        fill_normal(rng, &mut noise, 1.0);
        self.euler_sde_step_with_noise(x, t, dt, &noise)
    }
}

/// Integrates a full batch from the prior to `t_clip`.
pub fn run(config: &SamplerConfig, field: &dyn ScoreField, policy: &RescalePolicy) -> Result<SampleBatch> {
    check_compatibility(config, field, policy)?;
    let dim = field.dim();
    let integrator = Integrator::new(config.schedule, field, *policy)?;
    let levels = config
        .schedule
        .reverse_grid(config.steps)
        .into_iter()
        .map(|t| config.schedule.level(t))
        .collect::<Result<Vec<_>>>()?;
    let kind = config.kind;

    let mut points = vec![0.0; config.batch * dim];
    points.par_chunks_mut(dim).enumerate().try_for_each(|(i, x)| -> Result<()> {
        let mut rng = stream_rng(config.seed, i as u64);
        fill_normal(&mut rng, x, config.prior_scale);
        let mut scratch = Scratch::new(dim);
        for pair in levels.windows(2) {
            let (from, to) = (&pair[0], &pair[1]);
            if kind.is_stochastic() {
                fill_normal(&mut rng, &mut scratch.noise, 1.0);
            }
            match kind {
                SamplerKind::Ddpm => integrator.ddpm_update(x, from, to, &mut scratch)?,
                SamplerKind::Ddim => integrator.ddim_update(x, from, to, &mut scratch)?,
                SamplerKind::EulerOde => integrator.ode_update(x, from, to.t - from.t, &mut scratch)?,
                SamplerKind::EulerSde => integrator.sde_update(x, from, to.t - from.t, &mut scratch)?,
            }
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Parameter(format!("sample {i} diverged under {policy} with {kind}")))
        }
    })?;

    Ok(SampleBatch {
        dim,
        points,
        meta: SampleMeta { sampler: *config, policy: *policy, field: field.describe(), dim },
    })
}
