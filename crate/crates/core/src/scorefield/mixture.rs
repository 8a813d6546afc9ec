use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, ScoreField};
use crate::error::{ensure_positive, Error, Result};
use crate::rng::stream_rng;
use crate::schedule::{NoiseLevel, Schedule};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Serialized form of a mixture, as it appears in config files:
///
/// ```toml
/// [mixture]
/// weights = [0.5, 0.5]
/// means = [[-5.0], [5.0]]
/// sigma = 0.1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
}

/// Isotropic Gaussian mixture `sum_m w_m N(mu_m, sigma^2 I)` with a shared
/// standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    sigma: f64,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        GaussianMixture::new(spec.weights, spec.means, spec.sigma)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(m: GaussianMixture) -> Self {
        MixtureSpec { weights: m.weights, means: m.means, sigma: m.sigma }
    }
}

/// Parameters of the noised (and optionally sharpened) mixture at one time:
/// components `N(alpha_t mu_m, variance I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variance: f64,
}

/// Pairwise mean separation of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureGeometry {
    /// Minimum pairwise distance between means.
    pub delta: f64,
    /// Maximum pairwise distance between means.
    pub delta_max: f64,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Parameter("mixture needs at least one component".into()));
        }
        if weights.len() != means.len() {
            return Err(Error::Parameter(format!("{} weights for {} means", weights.len(), means.len())));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Parameter("mixture dimension must be positive".into()));
        }
        for mu in &means {
            if mu.len() != dim {
                return Err(Error::Dimension { expected: dim, got: mu.len() });
            }
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("mixture means must be finite".into()));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Parameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Parameter(format!("mixture weights sum to {total}, expected 1")));
        }
        ensure_positive("sigma", sigma)?;
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GaussianMixture { dim, weights, log_weights, means, sigma })
    }

    /// Equal-weight mixture over `means`.
    pub fn uniform(means: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let n = means.len().max(1);
        GaussianMixture::new(vec![1.0 / n as f64; means.len()], means, sigma)
    }

    /// Single isotropic Gaussian `N(mean, sigma^2 I)`.
    pub fn gaussian(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        GaussianMixture::new(vec![1.0], vec![mean], sigma)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Mixture restricted to `components`, with weights renormalized.
    pub fn restrict(&self, components: &[usize]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Parameter("empty component subset".into()));
        }
        let mut weights = Vec::with_capacity(components.len());
        let mut means = Vec::with_capacity(components.len());
        for &c in components {
            let w = *self.weights.get(c).ok_or_else(|| Error::Parameter(format!("component {c} out of range")))?;
            weights.push(w);
            means.push(self.means[c].clone());
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        GaussianMixture::new(weights, means, self.sigma)
    }

    /// `sigma_{t,k}^2 = alpha_t^2 sigma^2 / k + sigma_t^2`.
    pub fn noisy_variance(&self, level: &NoiseLevel, k: f64) -> f64 {
        level.alpha * level.alpha * self.sigma * self.sigma / k + level.sigma * level.sigma
    }

    pub fn noisy_params(&self, schedule: &Schedule, t: f64, k: f64) -> Result<NoisyMixture> {
        ensure_positive("k", k)?;
        Ok(self.noisy_params_at(&schedule.level(t)?, k))
    }

    pub fn noisy_params_at(&self, level: &NoiseLevel, k: f64) -> NoisyMixture {
        NoisyMixture {
            weights: self.weights.clone(),
            means: self.means.iter().map(|mu| mu.iter().map(|m| level.alpha * m).collect()).collect(),
            variance: self.noisy_variance(level, k),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("evaluation point must be finite".into()));
        }
        Ok(())
    }

    /// Unnormalized log-responsibilities `ln w_m - |x - alpha mu_m|^2 / (2 v)`.
    fn component_logits(&self, x: &[f64], alpha: f64, variance: f64, logits: &mut [f64]) {
        for ((logit, mu), lw) in logits.iter_mut().zip(&self.means).zip(&self.log_weights) {
            let sq: f64 = x.iter().zip(mu).map(|(xi, m)| (xi - alpha * m).powi(2)).sum();
            *logit = lw - 0.5 * sq / variance;
        }
    }

    /// Softmax of the component logits, in place.
    fn normalize_logits(logits: &mut [f64]) {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        logits.iter_mut().for_each(|l| *l /= total);
    }

    /// Responsibilities of the components of `N(alpha mu_m, variance I)` at `x`.
    pub(crate) fn responsibilities_with(&self, x: &[f64], alpha: f64, variance: f64, out: &mut [f64]) {
        self.component_logits(x, alpha, variance, out);
        Self::normalize_logits(out);
    }

    /// Score of the mixture `sum_m w_m N(alpha mu_m, variance I)` at `x`.
    pub(crate) fn score_with(&self, x: &[f64], alpha: f64, variance: f64, out: &mut [f64]) {
        let mut stack = [0.0; 16];
        let mut heap;
        let resp: &mut [f64] = if self.len() <= stack.len() {
            &mut stack[..self.len()]
        } else {
            heap = vec![0.0; self.len()];
            &mut heap
        };
        self.responsibilities_with(x, alpha, variance, resp);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, mu) in resp.iter().zip(&self.means) {
            for ((o, xi), m) in out.iter_mut().zip(x).zip(mu) {
                *o -= r * (xi - alpha * m);
            }
        }
        out.iter_mut().for_each(|o| *o /= variance);
    }

    pub fn responsibilities_at(&self, x: &[f64], level: &NoiseLevel, k: f64, out: &mut [f64]) {
        self.responsibilities_with(x, level.alpha, self.noisy_variance(level, k), out);
    }

    /// Posterior component probabilities `w_{t,n}^k(x)`.
    pub fn responsibilities(&self, x: &[f64], schedule: &Schedule, t: f64, k: f64) -> Result<Vec<f64>> {
        ensure_positive("k", k)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.len()];
        self.responsibilities_at(x, &schedule.level(t)?, k, &mut out);
        Ok(out)
    }

    pub fn score_at(&self, x: &[f64], level: &NoiseLevel, k: f64, out: &mut [f64]) {
        self.score_with(x, level.alpha, self.noisy_variance(level, k), out);
    }

    /// Exact score of the noisy mixture whose data components are sharpened
    /// to `sigma / sqrt(k)`. `k = 1` is the plain noisy marginal.
    pub fn score(&self, x: &[f64], schedule: &Schedule, t: f64, k: f64) -> Result<Vec<f64>> {
        ensure_positive("k", k)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim];
        self.score_at(x, &schedule.level(t)?, k, &mut out);
        Ok(out)
    }

    /// Normalized log-density of the noisy, k-sharpened mixture at `x`.
    pub fn log_density_at(&self, x: &[f64], level: &NoiseLevel, k: f64) -> f64 {
        let variance = self.noisy_variance(level, k);
        let mut logits = vec![0.0; self.len()];
        self.component_logits(x, level.alpha, variance, &mut logits);
        log_sum_exp(&logits) - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * variance).ln()
    }

    /// `n` exact draws from the sharpened data distribution
    /// `sum_m w_m N(mu_m, sigma^2 / k I)`, row-major `n x dim`, together with
    /// the drawn component index of each row.
    pub fn sample_with_components(&self, k: f64, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<usize>)> {
        self.sample_noisy(k, 1.0, 0.0, n, seed)
    }

    pub fn sample(&self, k: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
        Ok(self.sample_with_components(k, n, seed)?.0)
    }

    /// Exact draws from the noisy sharpened marginal: component `m`, then
    /// `alpha mu_m + sqrt(alpha^2 sigma^2 / k + sigma_t^2) z`.
    pub fn sample_noisy(
        &self,
        k: f64,
        alpha: f64,
        sigma_t: f64,
        n: usize,
        seed: u64,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        ensure_positive("k", k)?;
        if n == 0 {
            return Err(Error::Parameter("sample count must be >= 1".into()));
        }
        let std = (alpha * alpha * self.sigma * self.sigma / k + sigma_t * sigma_t).sqrt();
        let categorical =
            WeightedIndex::new(&self.weights).map_err(|e| Error::Parameter(format!("bad mixture weights: {e}")))?;
        let mut rng = stream_rng(seed, 0);
        let mut points = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let m = categorical.sample(&mut rng);
            labels.push(m);
            for &mu in &self.means[m] {
                let z: f64 = StandardNormal.sample(&mut rng);
                points.push(alpha * mu + std * z);
            }
        }
        Ok((points, labels))
    }

    /// Minimum and maximum pairwise mean distances. A single component has
    /// both equal to zero; coincident means are rejected.
    pub fn geometry(&self) -> Result<MixtureGeometry> {
        let mut delta = f64::INFINITY;
        let mut delta_max: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d = self.means[i].iter().zip(&self.means[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                delta = delta.min(d);
                delta_max = delta_max.max(d);
            }
        }
        if self.len() == 1 {
            return Ok(MixtureGeometry { delta: 0.0, delta_max: 0.0 });
        }
        if delta <= 0.0 {
            return Err(Error::Parameter("mixture has coincident means".into()));
        }
        Ok(MixtureGeometry { delta, delta_max })
    }
}

impl ScoreField for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], level: &NoiseLevel, out: &mut [f64]) {
        self.score_at(x, level, 1.0, out);
    }

    fn describe(&self) -> String {
        format!("mixture(n={}, d={}, sigma={})", self.len(), self.dim, self.sigma)
    }
}

/// Ground-truth field of the sharpened mixture: the score a sampler would
/// need to reach `sum_m w_m N(mu_m, sigma^2 / k I)` exactly.
#[derive(Debug, Clone)]
pub struct TemperedMixture {
    pub mixture: GaussianMixture,
    pub k: f64,
}

impl TemperedMixture {
    pub fn new(mixture: GaussianMixture, k: f64) -> Result<Self> {
        ensure_positive("k", k)?;
        Ok(TemperedMixture { mixture, k })
    }
}

impl ScoreField for TemperedMixture {
    fn dim(&self) -> usize {
        self.mixture.dim
    }

    fn score_into(&self, x: &[f64], level: &NoiseLevel, out: &mut [f64]) {
        self.mixture.score_at(x, level, self.k, out);
    }

    fn describe(&self) -> String {
        format!("tempered-{}(k={})", self.mixture.describe(), self.k)
    }
}

/// Mixture whose components are partitioned into classes. The unconditional
/// score is that of the whole mixture; class `c` has the score of the
/// renormalized sub-mixture.
#[derive(Debug, Clone)]
pub struct ClassConditional {
    mixture: GaussianMixture,
    classes: Vec<Vec<usize>>,
    conditionals: Vec<GaussianMixture>,
}

impl ClassConditional {
    pub fn new(mixture: GaussianMixture, classes: Vec<Vec<usize>>) -> Result<Self> {
        let conditionals = classes.iter().map(|c| mixture.restrict(c)).collect::<Result<Vec<_>>>()?;
        Ok(ClassConditional { mixture, classes, conditionals })
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn conditional(&self, class: usize) -> Option<&GaussianMixture> {
        self.conditionals.get(class)
    }
}

impl ScoreField for ClassConditional {
    fn dim(&self) -> usize {
        self.mixture.dim
    }

    fn score_into(&self, x: &[f64], level: &NoiseLevel, out: &mut [f64]) {
        self.mixture.score_at(x, level, 1.0, out);
    }

    fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn class_score_into(&self, class: usize, x: &[f64], level: &NoiseLevel, out: &mut [f64]) -> Result<()> {
        let cond =
            self.conditionals.get(class).ok_or_else(|| Error::Parameter(format!("class {class} out of range")))?;
        cond.score_at(x, level, 1.0, out);
        Ok(())
    }

    fn describe(&self) -> String {
        format!("class-conditional-{}(classes={})", self.mixture.describe(), self.classes.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn vp_level_with_alpha(alpha: f64) -> NoiseLevel {
        NoiseLevel { t: f64::NAN, alpha, sigma: (1.0 - alpha * alpha).sqrt(), alpha_dot: f64::NAN, sigma_dot: f64::NAN }
    }

    #[test]
    fn noisy_variance_by_hand() {
        let mix = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let lvl = vp_level_with_alpha(0.6);
        assert_abs_diff_eq!(mix.noisy_params_at(&lvl, 1.0).variance, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mix.noisy_params_at(&lvl, 4.0).variance, 0.73, epsilon = 1e-15);
        let noisy = mix.noisy_params_at(&lvl, 1.0);
        assert_eq!(noisy.means, vec![vec![0.0]]);
    }

    #[test]
    fn noisy_variance_tends_to_sigma_t_when_signal_vanishes() {
        let mix = GaussianMixture::gaussian(vec![3.0], 0.7).unwrap();
        let lvl = NoiseLevel { t: 1.0, alpha: 1e-9, sigma: 0.9, alpha_dot: 0.0, sigma_dot: 0.0 };
        for k in [0.5, 1.0, 10.0] {
            assert_abs_diff_eq!(mix.noisy_variance(&lvl, k), 0.81, epsilon = 1e-15);
        }
    }

    #[test]
    fn nonpositive_k_is_rejected() {
        let mix = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let s = Schedule::vp();
        assert!(matches!(mix.noisy_params(&s, 0.5, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(mix.score(&[0.0], &s, 0.5, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn single_gaussian_score_by_hand() {
        let mix = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let mut out = [0.0];
        mix.score_at(&[1.0], &vp_level_with_alpha(0.6), 1.0, &mut out);
        assert_abs_diff_eq!(out[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_gaussian_score_is_linear() {
        let mix = GaussianMixture::gaussian(vec![1.5, -0.5], 0.4).unwrap();
        let lvl = vp_level_with_alpha(0.8);
        let v = mix.noisy_variance(&lvl, 3.0);
        let mut out = [0.0; 2];
        for x in [[0.0, 0.0], [2.0, -1.0], [-3.0, 4.0]] {
            mix.score_at(&x, &lvl, 3.0, &mut out);
            assert_abs_diff_eq!(out[0], -(x[0] - 0.8 * 1.5) / v, epsilon = 1e-14);
            assert_abs_diff_eq!(out[1], -(x[1] + 0.8 * 0.5) / v, epsilon = 1e-14);
        }
    }

    #[test]
    fn symmetric_pair_has_zero_score_at_origin() {
        let mix = GaussianMixture::uniform(vec![vec![-2.0], vec![2.0]], 0.3).unwrap();
        let s = Schedule::vp();
        assert_eq!(mix.score(&[0.0], &s, 0.4, 1.0).unwrap(), vec![0.0]);
        assert_eq!(mix.responsibilities(&[0.0], &s, 0.4, 1.0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn responsibilities_concentrate_on_well_separated_mode() {
        let mix = GaussianMixture::uniform(vec![vec![-5.0], vec![0.0], vec![5.0]], 0.1).unwrap();
        let lvl = vp_level_with_alpha(0.99);
        let v = mix.noisy_variance(&lvl, 1.0);
        assert!(5.0 * 0.99 / v.sqrt() > 10.0);
        let mut w = [0.0; 3];
        mix.responsibilities_at(&[0.99 * 5.0], &lvl, 1.0, &mut w);
        assert!(w[2] > 0.999, "{w:?}");
        let single = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        assert_eq!(single.responsibilities(&[0.3], &Schedule::flow(), 0.5, 2.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn responsibilities_do_not_underflow_far_from_modes() {
        let mix = GaussianMixture::uniform(vec![vec![-5.0], vec![5.0]], 0.01).unwrap();
        let lvl = vp_level_with_alpha(0.9999);
        let mut w = [0.0; 2];
        mix.responsibilities_at(&[1e3], &lvl, 1.0, &mut w);
        assert_eq!(w, [0.0, 1.0]);
        let mut s = [0.0];
        mix.score_at(&[1e3], &lvl, 1.0, &mut s);
        assert!(s[0].is_finite() && s[0] < 0.0);
    }

    #[test]
    fn invalid_mixtures() {
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![1.0, 0.0], vec![vec![0.0], vec![1.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![], vec![], 1.0).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![f64::NAN]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.5], vec![vec![0.0], vec![1.0, 2.0]], 1.0).is_err());
        assert!(GaussianMixture::gaussian(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn sampled_std_matches_sharpened_sigma() {
        let mix = GaussianMixture::gaussian(vec![2.0], 0.5).unwrap();
        let x = mix.sample(4.0, 50_000, 11).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        assert!((std / 0.25 - 1.0).abs() < 0.01, "std {std}");
        assert!((mean - 2.0).abs() < 0.01);
    }

    #[test]
    fn sampled_component_frequencies_and_means() {
        let mix = GaussianMixture::new(vec![0.3, 0.7], vec![vec![-1.0], vec![4.0]], 0.5).unwrap();
        let (x, labels) = mix.sample_with_components(1.0, 100_000, 3).unwrap();
        let n1 = labels.iter().filter(|&&l| l == 0).count() as f64 / labels.len() as f64;
        assert!((n1 - 0.3).abs() < 0.01, "{n1}");
        for (m, mu) in [(0usize, -1.0), (1, 4.0)] {
            let vals: Vec<f64> = x.iter().zip(&labels).filter(|(_, &l)| l == m).map(|(v, _)| *v).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            // 4 standard errors of the conditional mean
            assert!((mean - mu).abs() < 4.0 * 0.5 / (vals.len() as f64).sqrt(), "{m}: {mean}");
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mix = GaussianMixture::uniform(vec![vec![0.0, 1.0], vec![2.0, 3.0]], 0.2).unwrap();
        assert_eq!(mix.sample(2.0, 100, 5).unwrap(), mix.sample(2.0, 100, 5).unwrap());
        assert_ne!(mix.sample(2.0, 100, 5).unwrap(), mix.sample(2.0, 100, 6).unwrap());
        assert!(mix.sample(2.0, 0, 5).is_err());
    }

    #[test]
    fn scaled_oracle_matches_sharpened_data_mixture_near_zero() {
        let s = Schedule::vp();
        let mix = GaussianMixture::uniform(vec![vec![-1.0, 0.5], vec![1.5, 2.0], vec![0.0, -2.0]], 0.6).unwrap();
        let k: f64 = 5.0;
        let sharp = GaussianMixture::new(mix.weights().to_vec(), mix.means().to_vec(), 0.6 / k.sqrt()).unwrap();
        for x in [[0.1, 0.2], [1.4, 1.9], [-3.0, 0.0], [0.0, -2.2]] {
            let a = mix.score(&x, &s, s.t_clip, k).unwrap();
            let b = sharp.score(&x, &s, s.t_clip, 1.0).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn geometry_of_mixtures() {
        let mix = GaussianMixture::uniform(vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]], 0.1).unwrap();
        let g = mix.geometry().unwrap();
        assert_abs_diff_eq!(g.delta, 1.0);
        assert_abs_diff_eq!(g.delta_max, 5.0);
        let single = GaussianMixture::gaussian(vec![1.0], 0.1).unwrap();
        assert_eq!(single.geometry().unwrap(), MixtureGeometry { delta: 0.0, delta_max: 0.0 });
        let dup = GaussianMixture::uniform(vec![vec![1.0], vec![1.0]], 0.1).unwrap();
        assert!(dup.geometry().is_err());
    }

    #[test]
    fn class_conditional_scores() {
        let mix = GaussianMixture::uniform(vec![vec![-3.0], vec![-1.0], vec![1.0], vec![3.0]], 0.2).unwrap();
        let field = ClassConditional::new(mix.clone(), vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(field.num_classes(), 2);
        let lvl = Schedule::vp().level(0.2).unwrap();
        let cond = GaussianMixture::uniform(vec![vec![1.0], vec![3.0]], 0.2).unwrap();
        let (mut a, mut b) = ([0.0], [0.0]);
        field.class_score_into(1, &[0.7], &lvl, &mut a).unwrap();
        cond.score_at(&[0.7], &lvl, 1.0, &mut b);
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-14);
        assert!(field.class_score_into(2, &[0.7], &lvl, &mut a).is_err());
        assert!(mix.class_score_into(0, &[0.7], &lvl, &mut a).is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let mix = GaussianMixture::new(vec![0.25, 0.75], vec![vec![-1.0, 0.0], vec![2.0, 1.0]], 0.3).unwrap();
        let spec = MixtureSpec::from(mix.clone());
        assert_eq!(GaussianMixture::try_from(spec).unwrap(), mix);
    }

    fn arb_mixture() -> impl Strategy<Value = GaussianMixture> {
        (1usize..=3, 1usize..=5).prop_flat_map(|(d, n)| {
            (
                proptest::collection::vec(0.2f64..1.0, n),
                proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, d), n),
                0.3f64..1.5,
            )
                .prop_map(|(raw, means, sigma)| {
                    let total: f64 = raw.iter().sum();
                    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
                    let head: f64 = w[1..].iter().sum();
                    w[0] = 1.0 - head;
                    GaussianMixture::new(w, means, sigma).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn score_matches_log_density_gradient(
            mix in arb_mixture(),
            t in 0.05f64..0.95,
            k in 0.5f64..4.0,
            flow in any::<bool>(),
            seed in proptest::collection::vec(-2.5f64..2.5, 3),
        ) {
            let s = if flow { Schedule::flow() } else { Schedule::vp() };
            let lvl = s.level(t).unwrap();
            let x: Vec<f64> = seed[..mix.dim()].to_vec();
            let mut score = vec![0.0; mix.dim()];
            mix.score_at(&x, &lvl, k, &mut score);
            let h = 1e-5;
            for i in 0..mix.dim() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (mix.log_density_at(&xp, &lvl, k) - mix.log_density_at(&xm, &lvl, k)) / (2.0 * h);
                prop_assert!((fd - score[i]).abs() < 1e-5, "dim {i}: fd {fd} vs {}", score[i]);
            }
        }

        #[test]
        fn responsibilities_sum_to_one(
            mix in arb_mixture(),
            t in 1e-3f64..0.999,
            k in 0.1f64..50.0,
            seed in proptest::collection::vec(-20.0f64..20.0, 3),
        ) {
            let s = Schedule::vp();
            let w = mix.responsibilities(&seed[..mix.dim()], &s, t, k).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
        }
    }
}
