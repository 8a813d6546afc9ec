//! Forward-process coefficients for variance-preserving diffusion and linear
//! flow-matching interpolants, `x_t = alpha_t x_0 + sigma_t eps`.
//!
//! Time runs from `t = 0` (data) to `t = 1` (noise). Every coefficient is
//! evaluated on the clipped domain `[t_clip, 1 - t_clip]`, where `sigma_t` and
//! `alpha_t` are both bounded away from zero.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

pub const DEFAULT_BETA_MIN: f64 = 0.1;
pub const DEFAULT_BETA_MAX: f64 = 20.0;
pub const DEFAULT_T_CLIP: f64 = 1e-3;

// Grid endpoints are computed in floating point; accept them even when they
// land an ulp or two outside the nominal domain.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Linear-beta VP-SDE: `beta(t) = beta_min + (beta_max - beta_min) t`.
    Vp,
    /// Rectified flow: `alpha_t = 1 - t`, `sigma_t = t`.
    Flow,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Vp => "vp",
            ScheduleKind::Flow => "flow",
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vp" => Ok(ScheduleKind::Vp),
            "flow" => Ok(ScheduleKind::Flow),
            other => Err(Error::Parameter(format!("unknown schedule `{other}` (expected vp|flow)"))),
        }
    }
}

/// A forward noise schedule. `beta_min`/`beta_max` are ignored for
/// [`ScheduleKind::Flow`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_clip: f64,
}

/// All schedule quantities at a single time, evaluated once and shared by
/// score fields, rescaling and integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevel {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub alpha_dot: f64,
    pub sigma_dot: f64,
}

impl NoiseLevel {
    /// Signal-to-noise ratio `alpha^2 / sigma^2`.
    pub fn snr(&self) -> f64 {
        let ratio = self.alpha / self.sigma;
        ratio * ratio
    }

    /// `alpha_dot sigma - alpha sigma_dot`, the schedule factor in the
    /// velocity/score conversion.
    pub fn cross_rate(&self) -> f64 {
        self.alpha_dot * self.sigma - self.alpha * self.sigma_dot
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::vp()
    }
}

impl Schedule {
    pub fn new(kind: ScheduleKind, beta_min: f64, beta_max: f64, t_clip: f64) -> Result<Self> {
        let s = Schedule { kind, beta_min, beta_max, t_clip };
        s.validate()?;
        Ok(s)
    }

    /// VP schedule with the conventional `beta in [0.1, 20]`.
    pub fn vp() -> Self {
        Schedule {
            kind: ScheduleKind::Vp,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
            t_clip: DEFAULT_T_CLIP,
        }
    }

    pub fn flow() -> Self {
        Schedule { kind: ScheduleKind::Flow, ..Schedule::vp() }
    }

    pub fn with_t_clip(mut self, t_clip: f64) -> Result<Self> {
        self.t_clip = t_clip;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_clip > 0.0 && self.t_clip < 0.5) {
            return Err(Error::Parameter(format!("t_clip must lie in (0, 0.5), got {}", self.t_clip)));
        }
        if self.kind == ScheduleKind::Vp {
            ensure_positive("beta_min", self.beta_min)?;
            ensure_positive("beta_max", self.beta_max)?;
            if self.beta_max < self.beta_min {
                return Err(Error::Parameter(format!(
                    "beta_max ({}) must be >= beta_min ({})",
                    self.beta_max, self.beta_min
                )));
            }
        }
        Ok(())
    }

    pub fn t_min(&self) -> f64 {
        self.t_clip
    }

    pub fn t_max(&self) -> f64 {
        1.0 - self.t_clip
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let (lo, hi) = (self.t_min(), self.t_max());
        if t.is_finite() && t >= lo - DOMAIN_SLACK && t <= hi + DOMAIN_SLACK {
            Ok(())
        } else {
            Err(Error::Domain { t, lo, hi })
        }
    }

    /// Linear `beta(t)` of the VP schedule. Defined on all of `[0, 1]`.
    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * t
    }

    /// `-1/2 * integral_0^t beta(s) ds`, i.e. `ln alpha_t` for VP.
    fn vp_log_alpha(&self, t: f64) -> f64 {
        -0.5 * (self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t)
    }

    fn unchecked_alpha_sigma(&self, t: f64) -> (f64, f64) {
        match self.kind {
            ScheduleKind::Flow => (1.0 - t, t),
            ScheduleKind::Vp => {
                let log_alpha = self.vp_log_alpha(t);
                // sigma^2 = 1 - alpha^2 without cancellation near t = 0.
                (log_alpha.exp(), (-(2.0 * log_alpha).exp_m1()).sqrt())
            }
        }
    }

    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check_domain(t)?;
        Ok(self.unchecked_alpha_sigma(t))
    }

    pub fn snr(&self, t: f64) -> Result<f64> {
        Ok(self.level(t)?.snr())
    }

    pub fn alpha_sigma_dot(&self, t: f64) -> Result<(f64, f64)> {
        let lvl = self.level(t)?;
        Ok((lvl.alpha_dot, lvl.sigma_dot))
    }

    /// Drift `f(t)` and diffusion `g(t)` of the VP forward SDE
    /// `dx = f(t) x dt + g(t) dw`.
    pub fn drift_diffusion(&self, t: f64) -> Result<(f64, f64)> {
        if self.kind != ScheduleKind::Vp {
            return Err(Error::UnsupportedSchedule(self.kind.name()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain { t, lo: 0.0, hi: 1.0 });
        }
        let beta = self.beta(t);
        Ok((-0.5 * beta, beta.sqrt()))
    }

    pub fn level(&self, t: f64) -> Result<NoiseLevel> {
        self.check_domain(t)?;
        let (alpha, sigma) = self.unchecked_alpha_sigma(t);
        let (alpha_dot, sigma_dot) = match self.kind {
            ScheduleKind::Flow => (-1.0, 1.0),
            ScheduleKind::Vp => {
                let alpha_dot = -0.5 * self.beta(t) * alpha;
                // d/dt sqrt(1 - alpha^2)
                (alpha_dot, -alpha * alpha_dot / sigma)
            }
        };
        Ok(NoiseLevel { t, alpha, sigma, alpha_dot, sigma_dot })
    }

    /// Uniform decreasing grid of `steps + 1` times from `1 - t_clip` to
    /// `t_clip` (both endpoints exact).
    pub fn reverse_grid(&self, steps: usize) -> Vec<f64> {
        let (hi, lo) = (self.t_max(), self.t_min());
        (0..=steps).map(|i| if i == steps { lo } else { hi + (lo - hi) * (i as f64 / steps as f64) }).collect()
    }
}
