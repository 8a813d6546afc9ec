//! Distance between the score constant noise scaling would need and the
//! score it actually uses, for a standard normal and a two-mode mixture.

use std::path::Path;

use tsr_core::theory::{cns_gap, linspace};
use tsr_core::GaussianMixture;

use super::{Check, Outcome};
use crate::config::Config;
use crate::error::CliResult;
use crate::output::{cell, num, write_atomic, Metrics, ReadTable, RunKey, Table};
use crate::plot::{self, Mark, Panel, Series};

pub fn run(config: &Config, dir: &Path) -> CliResult<Outcome> {
    let c = &config.cns_gap;
    let schedule = config.vp_schedule("cns-gap")?;
    let cases = [
        ("standard-normal", GaussianMixture::gaussian(vec![0.0], 1.0)?),
        ("two-mode", GaussianMixture::uniform(vec![vec![-c.half_separation], vec![c.half_separation]], c.sigma)?),
    ];
    let ts = linspace(c.t_lo, c.t_hi, c.t_points);
    let xs = linspace(c.x_lo, c.x_hi, c.x_points);

    let mut table = Table::new("tsr-cns-gap/1", &["case", "t", "x", "gap"]);
    table.comment("q_0 keeps the means and weights of p_0 with component std sigma/sqrt(k); q_t adds noise of variance sigma_t^2/k");
    let mut metrics = Metrics::new("cns-gap", config.seed);
    let mut max_gap = [0.0f64; 2];
    for (i, (name, mix)) in cases.iter().enumerate() {
        for &t in &ts {
            for &x in &xs {
                let gap = cns_gap(mix, &schedule, t, c.k, &[x])?;
                max_gap[i] = max_gap[i].max(gap);
                table.push(vec![cell(name), num(t), num(x), num(gap)]);
            }
        }
        metrics.push(&RunKey::new(name, "cns", "closed-form").k(c.k).sigma(mix.sigma()), "max_gap", max_gap[i]);
    }
    table.write(&dir.join("gap.csv"))?;

    let checks = vec![
        Check::new("standard_normal_vanishes", max_gap[0] < 1e-10, format!("max gap {:.3e} (limit 1e-10)", max_gap[0])),
        Check::new("two_mode_positive", max_gap[1] > 0.05, format!("max gap {:.4} (needs > 0.05)", max_gap[1])),
    ];
    Ok(Outcome { dir: dir.to_path_buf(), files: vec!["gap.csv".into()], checks, metrics })
}

pub fn plot(dir: &Path) -> CliResult<()> {
    let table = ReadTable::read(&dir.join("gap.csv"))?;
    let (case, t, x, gap) = (table.column("case")?, table.column("t")?, table.column("x")?, table.column("gap")?);
    let mut panels = Vec::new();
    for name in ["standard-normal", "two-mode"] {
        let mut series: Vec<Series> = Vec::new();
        for row in table.rows.iter().filter(|r| r[case] == name) {
            let label = format!("t={}", row[t]);
            if series.last().is_none_or(|s| s.label != label) {
                series.push(Series::new(label, Vec::new(), Vec::new(), Mark::Line));
            }
            let s = series.last_mut().expect("series pushed above");
            s.xs.push(table.f64_at(row, x)?);
            s.ys.push(table.f64_at(row, gap)?);
        }
        // Legends stay readable with a handful of curves.
        let stride = series.len().div_ceil(5).max(1);
        let mut panel = Panel::new(name, "x", "gap");
        for s in series.into_iter().step_by(stride) {
            panel = panel.with(s);
        }
        panels.push(panel);
    }
    write_atomic(&dir.join("gap.svg"), plot::render(&panels, 2).as_bytes())
}
