//! Sample-quality summaries: mode occupancy, 1D Wasserstein distance and 2D
//! cell coverage.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::scorefield::{CellGrid, GaussianMixture};

pub const DEFAULT_CUTOFF_MULTIPLIER: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub count: usize,
    pub fraction: f64,
    /// Empirical mean of the assigned points (the component mean when none
    /// were assigned).
    pub mean: Vec<f64>,
    /// Isotropic std: root mean squared deviation per coordinate.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub modes: Vec<ModeSummary>,
    pub unassigned: f64,
    pub total: usize,
}

impl ModeStats {
    pub fn fractions(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.fraction).collect()
    }

    /// Largest minus smallest mode fraction over `modes`.
    pub fn spread_over(&self, modes: &[usize]) -> f64 {
        let fr = modes.iter().map(|&m| self.modes[m].fraction);
        let max = fr.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = fr.fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn spread(&self) -> f64 {
        self.spread_over(&(0..self.modes.len()).collect::<Vec<_>>())
    }
}

fn check_rows(points: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Parameter(format!("buffer of length {} does not hold rows of dim {dim}", points.len())));
    }
    if points.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    Ok(points.len() / dim)
}

/// Assigns each row of `points` to its nearest mixture mean; ties go to the
/// lower component index. Rows farther than `cutoff_multiplier * sigma /
/// sqrt(k)` from every mean are left unassigned.
pub fn assign_modes(
    points: &[f64],
    dim: usize,
    mix: &GaussianMixture,
    k: f64,
    cutoff_multiplier: f64,
) -> Result<ModeStats> {
    let n = check_rows(points, dim)?;
    if dim != mix.dim() {
        return Err(Error::Dimension { expected: mix.dim(), got: dim });
    }
    ensure_positive("k", k)?;
    ensure_positive("cutoff_multiplier", cutoff_multiplier)?;
    let cutoff = cutoff_multiplier * mix.sigma() / k.sqrt();
    let cutoff_sq = cutoff * cutoff;

    let m = mix.len();
    let mut counts = vec![0usize; m];
    let mut sums = vec![vec![0.0; dim]; m];
    let mut labels = Vec::with_capacity(n);
    for row in points.chunks_exact(dim) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, mu) in mix.means().iter().enumerate() {
            let d: f64 = row.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        if best.1 <= cutoff_sq {
            counts[best.0] += 1;
            sums[best.0].iter_mut().zip(row).for_each(|(s, v)| *s += v);
            labels.push(Some(best.0));
        } else {
            labels.push(None);
        }
    }

    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .zip(mix.means())
        .map(|((s, &c), mu)| if c == 0 { mu.clone() } else { s.iter().map(|v| v / c as f64).collect() })
        .collect();
    let mut sq = vec![0.0; m];
    for (row, label) in points.chunks_exact(dim).zip(&labels) {
        if let Some(j) = *label {
            sq[j] += row.iter().zip(&means[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }

    let assigned: usize = counts.iter().sum();
    let modes = (0..m)
        .map(|j| ModeSummary {
            count: counts[j],
            fraction: counts[j] as f64 / n as f64,
            mean: means[j].clone(),
            std: if counts[j] == 0 { 0.0 } else { (sq[j] / (counts[j] * dim) as f64).sqrt() },
        })
        .collect();
    Ok(ModeStats { modes, unassigned: (n - assigned) as f64 / n as f64, total: n })
}

/// Exact empirical W1 between 1D samples. When sizes differ, the larger
/// sample is reduced to the smaller size by taking its mid-rank quantiles.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("wasserstein1 needs nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("wasserstein1 needs finite samples".into()));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (mut sa, mut sb) = (sorted(a), sorted(b));
    let n = sa.len().min(sb.len());
    let thin = |s: Vec<f64>| -> Vec<f64> {
        if s.len() == n {
            return s;
        }
        let m = s.len();
        (0..n).map(|i| s[((2 * i + 1) * m) / (2 * n)]).collect()
    };
    sa = thin(sa);
    sb = thin(sb);
    Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Mass per occupied cell, in [`CellGrid::occupied`] order.
    pub cells: Vec<f64>,
    /// Mass outside every occupied cell.
    pub off_support: f64,
}

impl Coverage {
    pub fn min_cell(&self) -> f64 {
        self.cells.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn grid_coverage(points: &[f64], dim: usize, grid: &CellGrid) -> Result<Coverage> {
    if dim != 2 {
        return Err(Error::Dimension { expected: 2, got: dim });
    }
    let n = check_rows(points, dim)?;
    let mut counts = vec![0usize; grid.occupied.len()];
    let mut off = 0usize;
    for p in points.chunks_exact(2) {
        match grid.occupied_index(p[0], p[1]) {
            Some(i) => counts[i] += 1,
            None => off += 1,
        }
    }
    Ok(Coverage { cells: counts.iter().map(|&c| c as f64 / n as f64).collect(), off_support: off as f64 / n as f64 })
}
