//! Closed-form score providers.
//!
//! Every provider returns the exact score of a noisy marginal under the
//! forward process, so samplers can be checked against analytic targets
//! rather than trained approximations.

mod datasets;
mod empirical;
mod mixture;

pub use datasets::{
    make_checkerboard, make_checkerboard_with, make_swissroll, make_swissroll_with, CellGrid, CheckerboardParams,
    SwissRollParams,
};
pub use empirical::EmpiricalField;
pub use mixture::{ClassConditional, GaussianMixture, MixtureGeometry, MixtureSpec, NoisyMixture, TemperedMixture};

use crate::error::{Error, Result};
use crate::schedule::NoiseLevel;

/// Score provider contract: `(x, t) -> grad log p_t(x)`.
pub trait ScoreField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the score at `x` into `out` (both of length [`ScoreField::dim`]).
    fn score_into(&self, x: &[f64], level: &NoiseLevel, out: &mut [f64]);

    /// Number of conditioning classes; zero for unconditional fields.
    fn num_classes(&self) -> usize {
        0
    }

    /// Class-conditional score, used by classifier-free guidance.
    fn class_score_into(&self, class: usize, _x: &[f64], _level: &NoiseLevel, _out: &mut [f64]) -> Result<()> {
        Err(Error::PolicyMisuse(format!("score field has no class {class}; guidance needs a class-conditional field")))
    }

    /// Short human-readable description recorded in sample metadata.
    fn describe(&self) -> String;
}

/// `log(sum(exp(v)))` computed stably. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
