//! Checkerboard and swiss roll under the exact empirical score; compares
//! cell coverage of constant noise scaling and TSR.

use std::path::Path;

use tsr_core::metrics::grid_coverage;
use tsr_core::rng::derive_seed;
use tsr_core::scorefield::{make_checkerboard_with, make_swissroll_with};
use tsr_core::{run as sample, CellGrid, EmpiricalField, RescalePolicy, SamplerConfig, SamplerKind};

use super::{Check, Outcome};
use crate::config::{Config, Dataset};
use crate::error::CliResult;
use crate::output::{cell, num, write_atomic, Metrics, ReadTable, RunKey, Table};
use crate::plot::{self, Mark, Panel, Series};

/// Fraction of the uniform cell share below which a cell counts as dropped.
const COVERAGE_FLOOR: f64 = 0.6;

pub fn run(config: &Config, dir: &Path) -> CliResult<Outcome> {
    let c = &config.toy2d;
    let schedule = config.vp_schedule("toy2d")?;
    let tsr = RescalePolicy::Tsr { k: c.k, sigma: c.tsr_sigma };
    let cns = RescalePolicy::Cns { k: c.k };
    let runs = [
        ("none-ddpm", SamplerKind::Ddpm, RescalePolicy::None),
        ("cns-ddpm", SamplerKind::Ddpm, cns),
        ("tsr-ddpm", SamplerKind::Ddpm, tsr),
        ("none-ddim", SamplerKind::Ddim, RescalePolicy::None),
        ("tsr-ddim", SamplerKind::Ddim, tsr),
    ];

    let mut metrics = Metrics::new("toy2d", config.seed);
    let mut coverage = Table::new("tsr-toy2d-coverage/1", &["dataset", "run", "cell", "col", "row", "mass"]);
    let mut files = Vec::new();
    let mut checks = Vec::new();
    for (i, &dataset) in c.datasets.iter().enumerate() {
        let data_seed = derive_seed(config.seed, 100 + i as u64);
        let data: EmpiricalField = match dataset {
            Dataset::Checkerboard => make_checkerboard_with(&c.checkerboard, c.dataset_size, data_seed)?,
            Dataset::Swissroll => make_swissroll_with(&c.swissroll, c.dataset_size, data_seed)?,
        };
        let grid = (dataset == Dataset::Checkerboard).then(|| CellGrid::checkerboard(&c.checkerboard));
        let mut samples = Table::new("tsr-toy2d-samples/1", &["run", "x0", "x1"]);
        for p in data.rows().take(c.n) {
            samples.push(vec![cell("data"), num(p[0]), num(p[1])]);
        }
        for &(name, kind, policy) in &runs {
            let steps = if kind == SamplerKind::Ddim { c.ddim_steps } else { c.ddpm_steps };
            let sampler = SamplerConfig::new(kind, schedule, c.n, config.seed).with_steps(steps);
            let batch = sample(&sampler, &data, &policy)?;
            for p in batch.rows() {
                samples.push(vec![cell(name), num(p[0]), num(p[1])]);
            }
            let mut key = RunKey::new(&format!("{}/{name}", dataset.name()), policy.name(), kind.name());
            if let RescalePolicy::Tsr { k, sigma } = policy {
                key = key.k(k).sigma(sigma);
            } else if let RescalePolicy::Cns { k } = policy {
                key = key.k(k);
            }
            let spread = batch.points.iter().map(|v| v * v).sum::<f64>() / batch.len() as f64;
            metrics.push(&key, "mean_sq_norm", spread);
            if let Some(grid) = &grid {
                let cov = grid_coverage(&batch.points, 2, grid)?;
                for (j, (&(col, row), mass)) in grid.occupied.iter().zip(&cov.cells).enumerate() {
                    coverage.push(vec![cell(dataset.name()), cell(name), cell(j), cell(col), cell(row), num(*mass)]);
                    metrics.push(&key, &format!("cell_{j}"), *mass);
                }
                coverage.push(vec![
                    cell(dataset.name()),
                    cell(name),
                    cell("off"),
                    cell(""),
                    cell(""),
                    num(cov.off_support),
                ]);
                metrics.push(&key, "off_support", cov.off_support);
                metrics.push(&key, "min_cell", cov.min_cell());
                checks.extend(coverage_checks(name, policy, &cov.cells, grid));
            }
        }
        let file = format!("{}_samples.csv", dataset.name());
        samples.write(&dir.join(&file))?;
        files.push(file);
    }
    if !coverage.is_empty() {
        coverage.write(&dir.join("coverage.csv"))?;
        files.push("coverage.csv".into());
    }
    Ok(Outcome { dir: dir.to_path_buf(), files, checks, metrics })
}

fn coverage_checks(name: &str, policy: RescalePolicy, cells: &[f64], grid: &CellGrid) -> Vec<Check> {
    let share = 1.0 / cells.len() as f64;
    let floor = COVERAGE_FLOOR * share;
    let min = cells.iter().copied().fold(f64::INFINITY, f64::min);
    match policy {
        RescalePolicy::Tsr { .. } => {
            vec![Check::new(
                &format!("{name}_keeps_all_cells"),
                min >= floor,
                format!("min cell {min:.4} (floor {floor:.4})"),
            )]
        }
        RescalePolicy::Cns { .. } => {
            let corner = grid.corner_cells().iter().map(|&j| cells[j]).fold(f64::INFINITY, f64::min);
            vec![Check::new(
                &format!("{name}_drops_a_corner"),
                corner < floor,
                format!("min corner {corner:.4} (floor {floor:.4})"),
            )]
        }
        RescalePolicy::None if name == "none-ddpm" => {
            let worst = cells.iter().map(|m| (m - share).abs()).fold(0.0, f64::max);
            vec![Check::new(
                "none-ddpm_uniform",
                worst <= 0.02,
                format!("max |cell - {share:.4}| = {worst:.4} (limit 0.02)"),
            )]
        }
        _ => Vec::new(),
    }
}

pub fn plot(dir: &Path) -> CliResult<()> {
    for dataset in [Dataset::Checkerboard, Dataset::Swissroll] {
        let path = dir.join(format!("{}_samples.csv", dataset.name()));
        if !path.exists() {
            continue;
        }
        let table = ReadTable::read(&path)?;
        let (run_col, x0, x1) = (table.column("run")?, table.column("x0")?, table.column("x1")?);
        let mut panels: Vec<Panel> = Vec::new();
        for row in &table.rows {
            let name = &row[run_col];
            if panels.last().is_none_or(|p| p.title != *name) {
                panels.push(
                    Panel::new(name.clone(), "x0", "x1")
                        .with(Series::new(name.clone(), Vec::new(), Vec::new(), Mark::Points))
                        .x_range(-2.5, 2.5)
                        .y_range(-2.5, 2.5),
                );
            }
            let s = &mut panels.last_mut().expect("panel pushed above").series[0];
            s.xs.push(table.f64_at(row, x0)?);
            s.ys.push(table.f64_at(row, x1)?);
        }
        write_atomic(&dir.join(format!("{}.svg", dataset.name())), plot::render(&panels, 3).as_bytes())?;
    }
    Ok(())
}
