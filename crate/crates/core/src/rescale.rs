//! Temporal score rescaling and the baseline steering policies.
//!
//! TSR multiplies the model score by
//!
//! ```text
//! r_t(k, sigma) = (eta_t sigma^2 + 1) / (eta_t sigma^2 / k + 1)
//! ```
//!
//! where `eta_t` is the schedule SNR. For a single isotropic Gaussian with
//! standard deviation `sigma` this turns the score of `p_t` into the exact
//! score of the noised `N(mu, sigma^2 / k)`. Because every common model
//! parameterization (score, noise, velocity) is linear in the score at fixed
//! `(x, t)`, the same factor can be applied in each of them.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::schedule::{NoiseLevel, Schedule};

/// How a sampler steers the pretrained score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum RescalePolicy {
    #[default]
    None,
    /// Temporal score rescaling.
    Tsr { k: f64, sigma: f64 },
    /// Constant noise scaling: the stochastic term of the sampler is
    /// multiplied by `1/sqrt(k)`.
    Cns { k: f64 },
    /// Classifier-free guidance toward `class` with weight `w`.
    Cfg { w: f64, class: usize },
}

impl std::fmt::Display for RescalePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RescalePolicy::None => write!(f, "none"),
            RescalePolicy::Tsr { k, sigma } => write!(f, "tsr(k={k},sigma={sigma})"),
            RescalePolicy::Cns { k } => write!(f, "cns(k={k})"),
            RescalePolicy::Cfg { w, class } => write!(f, "cfg(w={w},class={class})"),
        }
    }
}

impl RescalePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            RescalePolicy::None => "none",
            RescalePolicy::Tsr { .. } => "tsr",
            RescalePolicy::Cns { .. } => "cns",
            RescalePolicy::Cfg { .. } => "cfg",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RescalePolicy::None => Ok(()),
            RescalePolicy::Tsr { k, sigma } => {
                ensure_positive("k", k)?;
                ensure_positive("sigma", sigma)
            }
            RescalePolicy::Cns { k } => ensure_positive("k", k),
            RescalePolicy::Cfg { w, .. } => {
                if w.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("guidance weight must be finite, got {w}")))
                }
            }
        }
    }

    /// Score multiplier at SNR `eta`: `r_t` for TSR, 1 for no-op. Other
    /// policies do not act on the score by multiplication.
    pub fn score_factor(&self, eta: f64) -> Result<f64> {
        match *self {
            RescalePolicy::None => Ok(1.0),
            RescalePolicy::Tsr { k, sigma } => tsr_factor(k, sigma, eta),
            RescalePolicy::Cns { .. } => Err(Error::PolicyMisuse(
                "constant noise scaling leaves the score untouched; it is applied by the sampler's noise term".into(),
            )),
            RescalePolicy::Cfg { .. } => {
                Err(Error::PolicyMisuse("classifier-free guidance combines two scores; use cfg_combine".into()))
            }
        }
    }

    /// Multiplier on the stochastic term of a sampler.
    pub fn noise_scale(&self) -> Result<f64> {
        match *self {
            RescalePolicy::Cns { k } => cns_noise_scale(k),
            _ => Ok(1.0),
        }
    }
}

/// TSR factor in the form `k (eta sigma^2 + 1) / (eta sigma^2 + k)`, which
/// stays finite as `eta -> inf`.
pub fn tsr_factor(k: f64, sigma: f64, eta: f64) -> Result<f64> {
    ensure_positive("k", k)?;
    ensure_positive("sigma", sigma)?;
    if eta.is_nan() || eta < 0.0 {
        return Err(Error::Parameter(format!("snr must be >= 0, got {eta}")));
    }
    let a = eta * sigma * sigma;
    if a.is_infinite() {
        return Ok(k);
    }
    Ok(k * (a + 1.0) / (a + k))
}

/// Largest `t` in the clipped domain at which `r_t` reaches `threshold`,
/// i.e. the time reverse sampling first crosses it. `None` when the factor
/// never reaches the threshold on the domain. Requires `threshold` strictly
/// between 1 and `k`.
pub fn onset_time(schedule: &Schedule, k: f64, sigma: f64, threshold: f64) -> Result<Option<f64>> {
    tsr_factor(k, sigma, 1.0)?;
    if !(threshold > 1.0 && threshold < k) {
        return Err(Error::Parameter(format!("threshold must lie in (1, k = {k}), got {threshold}")));
    }
    let r = |t: f64| -> Result<f64> { tsr_factor(k, sigma, schedule.snr(t)?) };
    let (mut lo, mut hi) = (schedule.t_min(), schedule.t_max());
    if r(hi)? >= threshold {
        return Ok(Some(hi));
    }
    if r(lo)? < threshold {
        return Ok(None);
    }
    // r decreases in t: keep r(lo) >= threshold > r(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if r(mid)? >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

pub fn cns_noise_scale(k: f64) -> Result<f64> {
    ensure_positive("k", k)?;
    Ok(1.0 / k.sqrt())
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Dimension { expected: a.len(), got: b.len() })
    }
}

/// `s_uncond + w (s_cond - s_uncond)`, written into `uncond`.
pub fn cfg_combine_in_place(cond: &[f64], uncond: &mut [f64], w: f64) -> Result<()> {
    check_same_len(cond, uncond)?;
    for (u, c) in uncond.iter_mut().zip(cond) {
        *u += w * (c - *u);
    }
    Ok(())
}

pub fn cfg_combine(score_cond: &[f64], score_uncond: &[f64], w: f64) -> Result<Vec<f64>> {
    let mut out = score_uncond.to_vec();
    cfg_combine_in_place(score_cond, &mut out, w)?;
    Ok(out)
}

pub fn rescale_score_at(policy: &RescalePolicy, score: &mut [f64], level: &NoiseLevel) -> Result<()> {
    let r = policy.score_factor(level.snr())?;
    score.iter_mut().for_each(|s| *s *= r);
    Ok(())
}

/// `r_t * score`.
pub fn rescale_score(policy: &RescalePolicy, score: &[f64], schedule: &Schedule, t: f64) -> Result<Vec<f64>> {
    let mut out = score.to_vec();
    rescale_score_at(policy, &mut out, &schedule.level(t)?)?;
    Ok(out)
}

/// Noise predictions are `-sigma_t` times the score, so they rescale by the
/// same factor.
pub fn rescale_epsilon_at(policy: &RescalePolicy, eps: &mut [f64], level: &NoiseLevel) -> Result<()> {
    rescale_score_at(policy, eps, level)
}

pub fn rescale_epsilon(policy: &RescalePolicy, eps: &[f64], schedule: &Schedule, t: f64) -> Result<Vec<f64>> {
    let mut out = eps.to_vec();
    rescale_epsilon_at(policy, &mut out, &schedule.level(t)?)?;
    Ok(out)
}

/// `v~ = (r (alpha v - alpha_dot x) + alpha_dot x) / alpha`, in place on `v`.
pub fn rescale_velocity_at(policy: &RescalePolicy, v: &mut [f64], x: &[f64], level: &NoiseLevel) -> Result<()> {
    check_same_len(x, v)?;
    let r = policy.score_factor(level.snr())?;
    if r == 1.0 {
        return Ok(());
    }
    let (alpha, alpha_dot) = (level.alpha, level.alpha_dot);
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi = (r * (alpha * *vi - alpha_dot * xi) + alpha_dot * xi) / alpha;
    }
    Ok(())
}

pub fn rescale_velocity(policy: &RescalePolicy, v: &[f64], x: &[f64], schedule: &Schedule, t: f64) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    rescale_velocity_at(policy, &mut out, x, &schedule.level(t)?)?;
    Ok(out)
}

/// `sigma_t (alpha_dot sigma_t - alpha sigma_dot)`; zero would make the
/// conversion singular.
fn conversion_denominator(level: &NoiseLevel) -> Result<f64> {
    let denom = level.sigma * level.cross_rate();
    if denom.is_finite() && denom.abs() > f64::MIN_POSITIVE && level.alpha.abs() > f64::MIN_POSITIVE {
        Ok(denom)
    } else {
        Err(Error::DegenerateSchedule(level.t))
    }
}

/// Score implied by a probability-flow velocity:
/// `s = (alpha v - alpha_dot x) / (sigma (alpha_dot sigma - alpha sigma_dot))`.
pub fn velocity_to_score_at(v: &[f64], x: &[f64], level: &NoiseLevel, out: &mut [f64]) -> Result<()> {
    check_same_len(x, v)?;
    check_same_len(x, out)?;
    let denom = conversion_denominator(level)?;
    for ((o, vi), xi) in out.iter_mut().zip(v).zip(x) {
        *o = (level.alpha * vi - level.alpha_dot * xi) / denom;
    }
    Ok(())
}

/// Inverse of [`velocity_to_score_at`]:
/// `v = (alpha_dot x + sigma (alpha_dot sigma - alpha sigma_dot) s) / alpha`.
pub fn score_to_velocity_at(score: &[f64], x: &[f64], level: &NoiseLevel, out: &mut [f64]) -> Result<()> {
    check_same_len(x, score)?;
    check_same_len(x, out)?;
    let denom = conversion_denominator(level)?;
    for ((o, si), xi) in out.iter_mut().zip(score).zip(x) {
        *o = (level.alpha_dot * xi + denom * si) / level.alpha;
    }
    Ok(())
}

pub fn velocity_to_score(v: &[f64], x: &[f64], schedule: &Schedule, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    velocity_to_score_at(v, x, &schedule.level(t)?, &mut out)?;
    Ok(out)
}

pub fn score_to_velocity(score: &[f64], x: &[f64], schedule: &Schedule, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    score_to_velocity_at(score, x, &schedule.level(t)?, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorefield::GaussianMixture;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const TSR2: RescalePolicy = RescalePolicy::Tsr { k: 2.0, sigma: 1.0 };

    #[test]
    fn factor_examples() {
        for (sigma, eta) in [(0.1, 0.0), (1.0, 3.0), (5.0, 1e9)] {
            assert_eq!(tsr_factor(1.0, sigma, eta).unwrap(), 1.0);
        }
        assert!((tsr_factor(10.0, 1.0, 1e12).unwrap() - 10.0).abs() < 1e-6);
        assert_abs_diff_eq!(tsr_factor(2.0, 1.0, 1.0).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(tsr_factor(3.0, 1.0, f64::INFINITY).unwrap(), 3.0);
        assert_eq!(tsr_factor(3.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn factor_rejects_bad_parameters() {
        assert!(tsr_factor(0.0, 1.0, 1.0).is_err());
        assert!(tsr_factor(2.0, -1.0, 1.0).is_err());
        assert!(tsr_factor(2.0, 1.0, -1.0).is_err());
        assert!(tsr_factor(2.0, 1.0, f64::NAN).is_err());
        assert!(RescalePolicy::Tsr { k: 2.0, sigma: 0.0 }.validate().is_err());
        assert!(RescalePolicy::Cns { k: -2.0 }.validate().is_err());
        assert!(RescalePolicy::Cfg { w: f64::NAN, class: 0 }.validate().is_err());
    }

    #[test]
    fn no_op_policies_agree() {
        let s = Schedule::vp();
        let v = [0.3, -1.2];
        let none = rescale_score(&RescalePolicy::None, &v, &s, 0.4).unwrap();
        let unit = rescale_score(&RescalePolicy::Tsr { k: 1.0, sigma: 0.37 }, &v, &s, 0.4).unwrap();
        assert_eq!(none, v);
        assert_eq!(unit, v);
        assert_eq!(cns_noise_scale(1.0).unwrap(), 1.0);
    }

    #[test]
    fn score_rescaling_is_linear() {
        let s = Schedule::flow();
        let base = rescale_score(&TSR2, &[1.0, -2.0], &s, 0.3).unwrap();
        let scaled = rescale_score(&TSR2, &[3.0, -6.0], &s, 0.3).unwrap();
        for (b, c) in base.iter().zip(&scaled) {
            assert_abs_diff_eq!(3.0 * b, c, epsilon = 1e-14);
        }
    }

    #[test]
    fn score_rescaling_turns_gaussian_score_into_sharpened_score() {
        let mix = GaussianMixture::gaussian(vec![2.0, -1.0], 0.5).unwrap();
        let k = 4.0;
        let policy = RescalePolicy::Tsr { k, sigma: 0.5 };
        for s in [Schedule::vp(), Schedule::flow()] {
            for &t in &[0.001, 0.2, 0.5, 0.9] {
                let x = [1.1, 0.4];
                let rescaled = rescale_score(&policy, &mix.score(&x, &s, t, 1.0).unwrap(), &s, t).unwrap();
                let truth = mix.score(&x, &s, t, k).unwrap();
                for (a, b) in rescaled.iter().zip(&truth) {
                    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cns_and_cfg_are_not_score_multipliers() {
        let s = Schedule::vp();
        assert!(matches!(rescale_score(&RescalePolicy::Cns { k: 4.0 }, &[1.0], &s, 0.5), Err(Error::PolicyMisuse(_))));
        assert!(matches!(
            rescale_epsilon(&RescalePolicy::Cfg { w: 3.0, class: 0 }, &[1.0], &s, 0.5),
            Err(Error::PolicyMisuse(_))
        ));
    }

    #[test]
    fn epsilon_rescaling_by_hand() {
        // eta = 1 with sigma = 1 and k = 2 gives r = 4/3; flow hits eta = 1 at t = 0.5.
        let out = rescale_epsilon(&TSR2, &[0.3, -0.6], &Schedule::flow(), 0.5).unwrap();
        assert_abs_diff_eq!(out[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -0.8, epsilon = 1e-15);
    }

    #[test]
    fn epsilon_and_score_rescaling_agree() {
        let s = Schedule::vp();
        let t = 0.37;
        let sigma_t = s.alpha_sigma(t).unwrap().1;
        let score = [0.7, -2.5, 1.1];
        let via_score: Vec<f64> = rescale_score(&TSR2, &score, &s, t).unwrap().iter().map(|v| -sigma_t * v).collect();
        let eps: Vec<f64> = score.iter().map(|v| -sigma_t * v).collect();
        let via_eps = rescale_epsilon(&TSR2, &eps, &s, t).unwrap();
        for (a, b) in via_score.iter().zip(&via_eps) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_identity_cases() {
        let s = Schedule::flow();
        let v = [0.4, -0.9];
        assert_eq!(rescale_velocity(&RescalePolicy::None, &v, &[1.0, 2.0], &s, 0.3).unwrap(), v);
        let r = TSR2.score_factor(s.snr(0.3).unwrap()).unwrap();
        let at_origin = rescale_velocity(&TSR2, &v, &[0.0, 0.0], &s, 0.3).unwrap();
        assert_abs_diff_eq!(at_origin[0], r * v[0], epsilon = 1e-14);
        assert_abs_diff_eq!(at_origin[1], r * v[1], epsilon = 1e-14);
    }

    #[test]
    fn flow_velocity_to_score_closed_form() {
        let s = Schedule::flow();
        let (t, v, x) = (0.3, 0.8, -1.4);
        let score = velocity_to_score(&[v], &[x], &s, t).unwrap()[0];
        assert_abs_diff_eq!(score, -((1.0 - t) * v + x) / t, epsilon = 1e-14);
    }

    #[test]
    fn score_to_velocity_matches_exact_gaussian_flow() {
        // For data N(mu, s^2) the flow velocity is E[eps - x0 | x_t], computable
        // from Gaussian conditioning without any score.
        let (mu, sd) = (2.0, 0.5);
        let mix = GaussianMixture::gaussian(vec![mu], sd).unwrap();
        let s = Schedule::flow();
        for &(t, x) in &[(0.4, 1.3), (0.05, 2.1), (0.9, -0.7)] {
            let (a, sg) = (1.0 - t, t);
            let var = a * a * sd * sd + sg * sg;
            let e_x0 = mu + a * sd * sd / var * (x - a * mu);
            let e_eps = sg / var * (x - a * mu);
            let exact = e_eps - e_x0;
            let score = mix.score(&[x], &s, t, 1.0).unwrap();
            let v = score_to_velocity(&score, &[x], &s, t).unwrap()[0];
            assert!((v - exact).abs() < 1e-12, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn onset_matches_closed_form_snr() {
        // r = threshold  <=>  eta sigma^2 = k (threshold - 1) / (k - threshold)
        let s = Schedule::vp();
        let (k, sigma, thr) = (2.0, 0.5, 1.5);
        let t = onset_time(&s, k, sigma, thr).unwrap().unwrap();
        let eta = k * (thr - 1.0) / (k - thr) / (sigma * sigma);
        assert!((s.snr(t).unwrap() / eta - 1.0).abs() < 1e-9);
        let flow = Schedule::flow();
        let t = onset_time(&flow, k, sigma, thr).unwrap().unwrap();
        // flow: eta = ((1 - t) / t)^2
        assert!((t - 1.0 / (1.0 + eta.sqrt())).abs() < 1e-12);
        assert!(onset_time(&s, 2.0, 1.0, 2.5).is_err());
        assert_eq!(onset_time(&s, 1e3, 1e-6, 999.0).unwrap(), None);
    }

    #[test]
    fn cns_scale_examples() {
        assert_eq!(cns_noise_scale(4.0).unwrap(), 0.5);
        assert_eq!(cns_noise_scale(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(cns_noise_scale(1600.0).unwrap(), 0.025, epsilon = 1e-15);
        assert!(cns_noise_scale(0.0).is_err());
        assert_eq!(RescalePolicy::Cns { k: 4.0 }.noise_scale().unwrap(), 0.5);
        assert_eq!(TSR2.noise_scale().unwrap(), 1.0);
    }

    #[test]
    fn cfg_examples() {
        let (c, u) = ([2.0, -1.0], [1.0, 3.0]);
        assert_eq!(cfg_combine(&c, &u, 1.0).unwrap(), c);
        assert_eq!(cfg_combine(&c, &u, 0.0).unwrap(), u);
        assert_eq!(cfg_combine(&[2.0], &[1.0], 10.0).unwrap(), vec![11.0]);
        assert!(matches!(cfg_combine(&[1.0], &[1.0, 2.0], 2.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn policy_serde_shape() {
        let p: RescalePolicy = serde_json::from_str(r#"{"policy":"tsr","k":4.0,"sigma":0.5}"#).unwrap();
        assert_eq!(p, RescalePolicy::Tsr { k: 4.0, sigma: 0.5 });
    }

    proptest! {
        #[test]
        fn factor_is_bounded_by_one_and_k(k in 0.01f64..100.0, sigma in 0.01f64..10.0, eta in 0.0f64..1e8) {
            let r = tsr_factor(k, sigma, eta).unwrap();
            let (lo, hi) = (k.min(1.0), k.max(1.0));
            prop_assert!(r >= lo * (1.0 - 1e-14) && r <= hi * (1.0 + 1e-14));
        }

        #[test]
        fn factor_is_monotone_in_snr(k in 0.01f64..100.0, sigma in 0.01f64..10.0, e1 in 0.0f64..1e6, e2 in 0.0f64..1e6) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let (r_lo, r_hi) = (tsr_factor(k, sigma, lo).unwrap(), tsr_factor(k, sigma, hi).unwrap());
            if k > 1.0 {
                prop_assert!(r_hi >= r_lo * (1.0 - 1e-14));
            } else {
                prop_assert!(r_hi <= r_lo * (1.0 + 1e-14));
            }
        }

        #[test]
        fn factor_grows_with_sigma_when_sharpening(k in 1.0f64..100.0, eta in 1e-6f64..1e6, s1 in 0.01f64..10.0, s2 in 0.01f64..10.0) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(tsr_factor(k, hi, eta).unwrap() >= tsr_factor(k, lo, eta).unwrap() * (1.0 - 1e-14));
        }

        #[test]
        fn velocity_score_conversions_are_inverse(
            v in proptest::collection::vec(-5.0f64..5.0, 3),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
            t in 1e-3f64..0.999,
            flow in any::<bool>(),
        ) {
            let s = if flow { Schedule::flow() } else { Schedule::vp() };
            let score = velocity_to_score(&v, &x, &s, t).unwrap();
            let back = score_to_velocity(&score, &x, &s, t).unwrap();
            for (a, b) in v.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()) * (1.0 / (1.0 - t)), "{a} vs {b}");
            }
        }

        #[test]
        fn rescaled_velocity_implies_rescaled_score(
            v in proptest::collection::vec(-5.0f64..5.0, 2),
            x in proptest::collection::vec(-5.0f64..5.0, 2),
            t in 0.01f64..0.99,
            k in 0.2f64..20.0,
            sigma in 0.05f64..3.0,
            flow in any::<bool>(),
        ) {
            let s = if flow { Schedule::flow() } else { Schedule::vp() };
            let policy = RescalePolicy::Tsr { k, sigma };
            let r = policy.score_factor(s.snr(t).unwrap()).unwrap();
            let lhs = velocity_to_score(&rescale_velocity(&policy, &v, &x, &s, t).unwrap(), &x, &s, t).unwrap();
            let rhs = velocity_to_score(&v, &x, &s, t).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - r * b).abs() < 1e-9 * (1.0 + (r * b).abs()), "{a} vs {}", r * b);
            }
        }
    }
}
