//! Monte-Carlo score error of TSR on a separated two-mode mixture against
//! the exponential and polynomial upper bounds.

use std::path::Path;

use tsr_core::theory::{linspace, validate_bounds, BOUND_SLACK};
use tsr_core::GaussianMixture;

use super::{Check, Outcome};
use crate::config::Config;
use crate::error::CliResult;
use crate::output::{cell, num, write_atomic, Metrics, ReadTable, RunKey, Table};
use crate::plot::{self, Mark, Panel, Series};

pub fn run(config: &Config, dir: &Path) -> CliResult<Outcome> {
    let c = &config.bounds;
    let schedule = config.vp_schedule("bounds")?;
    let mix = GaussianMixture::uniform(vec![vec![-c.half_separation], vec![c.half_separation]], c.sigma)?;
    let grid = linspace(c.t_lo, c.t_hi, c.points);
    let reports = validate_bounds(&mix, &schedule, c.k, &grid, c.n, config.seed)?;

    let mut table = Table::new("tsr-bounds/1", &["t", "error_mc", "mc_stderr", "b_exp", "b_poly", "satisfied"]);
    table.comment(format!("satisfied: error_mc <= min(b_exp, b_poly) * {} + 3 * mc_stderr", 1.0 + BOUND_SLACK));
    for r in &reports {
        table.push(vec![num(r.t), num(r.error_mc), num(r.mc_stderr), num(r.b_exp), num(r.b_poly), cell(r.satisfied)]);
    }
    table.write(&dir.join("bounds.csv"))?;

    let key = RunKey::new("two-mode", "tsr", "mc").k(c.k).sigma(c.sigma);
    let mut metrics = Metrics::new("bounds", config.seed);
    let satisfied = reports.iter().filter(|r| r.satisfied).count();
    let tightest = reports.iter().map(|r| r.bound()).fold(f64::INFINITY, f64::min);
    metrics.push(&key, "satisfied_fraction", satisfied as f64 / reports.len().max(1) as f64);
    metrics.push(&key, "min_bound", tightest);
    metrics.push(&key, "max_error_mc", reports.iter().map(|r| r.error_mc).fold(0.0, f64::max));

    let checks = vec![
        Check::new("all_satisfied", satisfied == reports.len(), format!("{satisfied}/{} grid points", reports.len())),
        Check::new("bounds_informative", tightest < 10.0, format!("min over t of min(b_exp, b_poly) = {tightest:.4e}")),
    ];
    Ok(Outcome { dir: dir.to_path_buf(), files: vec!["bounds.csv".into()], checks, metrics })
}

pub fn plot(dir: &Path) -> CliResult<()> {
    let table = ReadTable::read(&dir.join("bounds.csv"))?;
    let t_col = table.column("t")?;
    let mut panel = Panel::new("score error vs bounds", "t", "log10 value");
    for name in ["error_mc", "b_exp", "b_poly"] {
        let col = table.column(name)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in &table.rows {
            let v = table.f64_at(row, col)?;
            if v > 0.0 {
                xs.push(table.f64_at(row, t_col)?);
                ys.push(v.log10());
            }
        }
        panel = panel.with(Series::new(name, xs, ys, Mark::Line));
    }
    write_atomic(&dir.join("bounds.svg"), plot::render(&[panel], 1).as_bytes())
}
