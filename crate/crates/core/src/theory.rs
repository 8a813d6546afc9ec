//! Numerical checks of the rescaled-score approximation error bounds and of
//! the score condition under which constant noise scaling would sample a
//! temperature-scaled distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::rng::derive_seed;
use crate::schedule::{NoiseLevel, Schedule, ScheduleKind};
use crate::scorefield::GaussianMixture;

pub const BOUND_SLACK: f64 = 0.05;
pub const MIN_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t: f64,
    pub error_mc: f64,
    pub mc_stderr: f64,
    pub b_exp: f64,
    pub b_poly: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn bound(&self) -> f64 {
        self.b_exp.min(self.b_poly)
    }
}

/// `||sum_n (w1_n - wk_n)(x - alpha mu_n)|| / sigma_{t,k}^2` at one point.
fn error_integrand(
    mix: &GaussianMixture,
    x: &[f64],
    level: &NoiseLevel,
    k: f64,
    w1: &mut [f64],
    wk: &mut [f64],
) -> f64 {
    let v1 = mix.noisy_variance(level, 1.0);
    let vk = mix.noisy_variance(level, k);
    mix.responsibilities_with(x, level.alpha, v1, w1);
    mix.responsibilities_with(x, level.alpha, vk, wk);
    let mut acc = vec![0.0; x.len()];
    for ((mu, a), b) in mix.means().iter().zip(w1.iter()).zip(wk.iter()) {
        let dw = a - b;
        if dw != 0.0 {
            for ((o, xi), m) in acc.iter_mut().zip(x).zip(mu) {
                *o += dw * (xi - level.alpha * m);
            }
        }
    }
    acc.iter().map(|v| v * v).sum::<f64>().sqrt() / vk
}

/// Pointwise integrand of [`error_mc`]; exposed for quadrature cross-checks.
pub fn error_integrand_at(mix: &GaussianMixture, x: &[f64], schedule: &Schedule, t: f64, k: f64) -> Result<f64> {
    ensure_positive("k", k)?;
    if x.len() != mix.dim() {
        return Err(Error::Dimension { expected: mix.dim(), got: x.len() });
    }
    let level = schedule.level(t)?;
    let (mut w1, mut wk) = (vec![0.0; mix.len()], vec![0.0; mix.len()]);
    Ok(error_integrand(mix, x, &level, k, &mut w1, &mut wk))
}

/// Monte-Carlo estimate of the expected score error under exact draws from
/// the noisy sharpened marginal. Returns `(estimate, standard error)`.
pub fn error_mc(mix: &GaussianMixture, schedule: &Schedule, t: f64, k: f64, n: usize, seed: u64) -> Result<(f64, f64)> {
    ensure_positive("k", k)?;
    if n < MIN_MC_SAMPLES {
        return Err(Error::Parameter(format!("error_mc needs n >= {MIN_MC_SAMPLES}, got {n}")));
    }
    let level = schedule.level(t)?;
    let (points, _) = mix.sample_noisy(k, level.alpha, level.sigma, n, seed)?;
    let (mut w1, mut wk) = (vec![0.0; mix.len()], vec![0.0; mix.len()]);
    let values: Vec<f64> =
        points.chunks_exact(mix.dim()).map(|x| error_integrand(mix, x, &level, k, &mut w1, &mut wk)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

fn bound_inputs(mix: &GaussianMixture, schedule: &Schedule, t: f64, k: f64) -> Result<(NoiseLevel, f64, f64)> {
    ensure_positive("k", k)?;
    if k < 1.0 {
        return Err(Error::UnsupportedRegime(format!("error bounds are defined for k >= 1, got k = {k}")));
    }
    let level = schedule.level(t)?;
    Ok((level, mix.noisy_variance(&level, 1.0), mix.noisy_variance(&level, k)))
}

/// `6 alpha D_max / s_k * exp(-alpha^2 D^2 / (8 s_1))` with `s_k = sigma_{t,k}^2`.
pub fn bound_exp(mix: &GaussianMixture, schedule: &Schedule, t: f64, k: f64) -> Result<f64> {
    let (level, v1, vk) = bound_inputs(mix, schedule, t, k)?;
    let geom = mix.geometry()?;
    let a = level.alpha;
    Ok(6.0 * a * geom.delta_max / vk * (-(a * a * geom.delta * geom.delta) / (8.0 * v1)).exp())
}

/// `alpha D_max / (4 s_k) * (1/s_k - 1/s_1) * N (d s_k + alpha^2 D_max^2)`.
pub fn bound_poly(mix: &GaussianMixture, schedule: &Schedule, t: f64, k: f64) -> Result<f64> {
    let (level, v1, vk) = bound_inputs(mix, schedule, t, k)?;
    let geom = mix.geometry()?;
    let a = level.alpha;
    let n = mix.len() as f64;
    let d = mix.dim() as f64;
    let prefactor = a * geom.delta_max / (4.0 * vk);
    Ok(prefactor * (1.0 / vk - 1.0 / v1).max(0.0) * n * (d * vk + a * a * geom.delta_max * geom.delta_max))
}

/// `n` evenly spaced times covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One report per grid time. Each grid point uses its own derived seed, so
/// the reports do not depend on evaluation order.
pub fn validate_bounds(
    mix: &GaussianMixture,
    schedule: &Schedule,
    k: f64,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    t_grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let (error_mc, mc_stderr) = error_mc(mix, schedule, t, k, n, derive_seed(seed, i as u64))?;
            let b_exp = bound_exp(mix, schedule, t, k)?;
            let b_poly = bound_poly(mix, schedule, t, k)?;
            let satisfied = error_mc <= b_exp.min(b_poly) * (1.0 + BOUND_SLACK) + 3.0 * mc_stderr;
            Ok(BoundReport { t, error_mc, mc_stderr, b_exp, b_poly, satisfied })
        })
        .collect()
}

/// `||grad log q_t(x) - k grad log p_t(x)||` where `q_0` keeps the means and
/// weights of `p_0` with component std `sigma / sqrt(k)`, and `q_t` is
/// noised with variance `sigma_t^2 / k`.
pub fn cns_gap(mix: &GaussianMixture, schedule: &Schedule, t: f64, k: f64, x: &[f64]) -> Result<f64> {
    ensure_positive("k", k)?;
    if schedule.kind != ScheduleKind::Vp {
        return Err(Error::UnsupportedSchedule(schedule.kind.name()));
    }
    if x.len() != mix.dim() {
        return Err(Error::Dimension { expected: mix.dim(), got: x.len() });
    }
    let level = schedule.level(t)?;
    let a2s2 = level.alpha * level.alpha * mix.sigma() * mix.sigma();
    let s2 = level.sigma * level.sigma;
    let mut q = vec![0.0; x.len()];
    let mut p = vec![0.0; x.len()];
    mix.score_with(x, level.alpha, a2s2 / k + s2 / k, &mut q);
    mix.score_with(x, level.alpha, a2s2 + s2, &mut p);
    Ok(q.iter().zip(&p).map(|(a, b)| (a - k * b).powi(2)).sum::<f64>().sqrt())
}
