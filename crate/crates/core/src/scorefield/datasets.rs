//! Toy 2D point clouds: checkerboard and swiss roll.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EmpiricalField;
use crate::error::{ensure_positive, Error, Result};
use crate::rng::stream_rng;

/// Square cell decomposition of `[-half_width, half_width]^2` with a set of
/// occupied cells. Cells are indexed `(column, row)` from the lower-left.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub half_width: f64,
    pub cells_per_side: usize,
    pub occupied: Vec<(usize, usize)>,
}

impl CellGrid {
    /// Alternating grid whose occupied ("black") cells have even `col + row`.
    pub fn checkerboard(params: &CheckerboardParams) -> Self {
        let n = params.cells_per_side;
        let occupied =
            (0..n).flat_map(|row| (0..n).map(move |col| (col, row))).filter(|(c, r)| (c + r) % 2 == 0).collect();
        CellGrid { half_width: params.half_width, cells_per_side: n, occupied }
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.half_width / self.cells_per_side as f64
    }

    /// Cell containing `(x, y)`, or `None` outside the box. The upper boundary
    /// belongs to the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let h = self.half_width;
        if !(-h..=h).contains(&x) || !(-h..=h).contains(&y) {
            return None;
        }
        let w = self.cell_width();
        let last = self.cells_per_side - 1;
        let idx = |v: f64| (((v + h) / w).floor() as usize).min(last);
        Some((idx(x), idx(y)))
    }

    /// Index into [`CellGrid::occupied`] of the cell holding `(x, y)`.
    pub fn occupied_index(&self, x: f64, y: f64) -> Option<usize> {
        let cell = self.cell_of(x, y)?;
        self.occupied.iter().position(|&c| c == cell)
    }

    /// Occupied cells at the four corners of the grid.
    pub fn corner_cells(&self) -> Vec<usize> {
        let last = self.cells_per_side - 1;
        let corners = [(0, 0), (last, 0), (0, last), (last, last)];
        self.occupied.iter().enumerate().filter(|(_, c)| corners.contains(c)).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerboardParams {
    pub half_width: f64,
    pub cells_per_side: usize,
}

impl Default for CheckerboardParams {
    fn default() -> Self {
        CheckerboardParams { half_width: 2.0, cells_per_side: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwissRollParams {
    pub theta_min: f64,
    pub theta_max: f64,
    /// Radius of the outermost turn (reached at `theta_max`).
    pub radius: f64,
    pub jitter: f64,
}

impl Default for SwissRollParams {
    fn default() -> Self {
        SwissRollParams { theta_min: 1.5 * PI, theta_max: 4.5 * PI, radius: 2.0, jitter: 0.03 }
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Parameter("dataset size must be >= 1".into()))
    } else {
        Ok(())
    }
}

pub fn make_checkerboard(n: usize, seed: u64) -> Result<EmpiricalField> {
    make_checkerboard_with(&CheckerboardParams::default(), n, seed)
}

/// `n` points uniform over the occupied cells of the checkerboard grid.
pub fn make_checkerboard_with(params: &CheckerboardParams, n: usize, seed: u64) -> Result<EmpiricalField> {
    check_count(n)?;
    ensure_positive("half_width", params.half_width)?;
    if params.cells_per_side < 2 {
        return Err(Error::Parameter("checkerboard needs at least 2 cells per side".into()));
    }
    let grid = CellGrid::checkerboard(params);
    let w = grid.cell_width();
    let mut rng = stream_rng(seed, 0);
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (col, row) = grid.occupied[rng.random_range(0..grid.occupied.len())];
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        points.push(-params.half_width + (col as f64 + u) * w);
        points.push(-params.half_width + (row as f64 + v) * w);
    }
    EmpiricalField::new(2, points)
}

pub fn make_swissroll(n: usize, seed: u64) -> Result<EmpiricalField> {
    make_swissroll_with(&SwissRollParams::default(), n, seed)
}

/// Planar spiral `theta (cos theta, sin theta)` scaled so the outer turn has
/// the configured radius, plus isotropic Gaussian jitter.
pub fn make_swissroll_with(params: &SwissRollParams, n: usize, seed: u64) -> Result<EmpiricalField> {
    check_count(n)?;
    ensure_positive("theta_max", params.theta_max)?;
    ensure_positive("radius", params.radius)?;
    if !(params.jitter >= 0.0 && params.theta_min < params.theta_max) {
        return Err(Error::Parameter("swiss roll needs jitter >= 0 and theta_min < theta_max".into()));
    }
    let scale = params.radius / params.theta_max;
    let mut rng = stream_rng(seed, 0);
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let theta = rng.random_range(params.theta_min..params.theta_max);
        let zx: f64 = StandardNormal.sample(&mut rng);
        let zy: f64 = StandardNormal.sample(&mut rng);
        points.push(scale * theta * theta.cos() + params.jitter * zx);
        points.push(scale * theta * theta.sin() + params.jitter * zy);
    }
    EmpiricalField::new(2, points)
}
