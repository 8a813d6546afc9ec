use std::cell::RefCell;

use super::ScoreField;
use crate::error::{Error, Result};
use crate::schedule::{NoiseLevel, Schedule};

/// Relative log-weight below which a data point is dropped from the
/// posterior mean. Even 10^6 dropped points change the result by less than
/// `1e6 * exp(-50)`, under half an ulp.
const LOGIT_FLOOR: f64 = 50.0;

thread_local! {
    static SQ_DIST: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// The empirical distribution of a finite dataset. Its noisy marginal is the
/// mixture of `N(alpha_t x_i, sigma_t^2 I)` over data points, whose score is
/// available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalField {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalField {
    /// `points` is row-major with `dim` columns.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dataset dimension must be positive".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::Parameter(format!(
                "dataset buffer of length {} is not a nonempty multiple of dim {dim}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("dataset points must be finite".into()));
        }
        Ok(EmpiricalField { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Parameter("dataset rows have inconsistent dimension".into()));
        }
        EmpiricalField::new(dim, rows.concat())
    }

    pub fn count(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn score(&self, x: &[f64], schedule: &Schedule, t: f64) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        let level = schedule.level(t)?;
        let mut out = vec![0.0; self.dim];
        self.score_into(x, &level, &mut out);
        Ok(out)
    }
}

impl ScoreField for EmpiricalField {
    fn dim(&self) -> usize {
        self.dim
    }

    /// `-(x - alpha * E[x_0 | x]) / sigma_t^2`, with the posterior mean over
    /// data points taken in log-space: one pass for the squared distances and
    /// their minimum, one pass for the normalized weights. Points whose
    /// weight relative to the nearest one is below `exp(-LOGIT_FLOOR)` are
    /// skipped.
    fn score_into(&self, x: &[f64], level: &NoiseLevel, out: &mut [f64]) {
        let alpha = level.alpha;
        let inv_two_var = 0.5 / (level.sigma * level.sigma);
        SQ_DIST.with(|cell| {
            let mut sq = cell.borrow_mut();
            sq.clear();
            sq.extend(self.rows().map(|p| x.iter().zip(p).map(|(xi, pi)| (xi - alpha * pi).powi(2)).sum::<f64>()));
            let min_sq = sq.iter().copied().fold(f64::INFINITY, f64::min);
            let max_sq = min_sq + LOGIT_FLOOR / inv_two_var;
            let mut total = 0.0;
            out.iter_mut().for_each(|o| *o = 0.0);
            for (p, &d) in self.rows().zip(sq.iter()) {
                if d > max_sq {
                    continue;
                }
                let w = ((min_sq - d) * inv_two_var).exp();
                total += w;
                for (o, pi) in out.iter_mut().zip(p) {
                    *o += w * pi;
                }
            }
            let scale = 2.0 * inv_two_var;
            for (o, xi) in out.iter_mut().zip(x) {
                *o = -(xi - alpha * *o / total) * scale;
            }
        });
    }

    fn describe(&self) -> String {
        format!("empirical(n={}, d={})", self.count(), self.dim)
    }
}
