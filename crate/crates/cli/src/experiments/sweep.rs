//! `r_t` curves over the target ratio `k` and the data scale `sigma`.

use std::path::Path;

use tsr_core::rescale::{onset_time, tsr_factor};
use tsr_core::theory::linspace;

use super::{Check, Outcome};
use crate::config::Config;
use crate::error::CliResult;
use crate::output::{cell, num, write_atomic, Metrics, ReadTable, RunKey, Table};
use crate::plot::{self, Mark, Panel, Series};

pub fn run(config: &Config, dir: &Path) -> CliResult<Outcome> {
    let c = &config.sweep;
    let schedule = config.schedule()?;
    let ts = linspace(schedule.t_min(), schedule.t_max(), c.points);
    let etas = ts.iter().map(|&t| schedule.snr(t)).collect::<Result<Vec<_>, _>>()?;

    let mut curves = Table::new("tsr-sweep-curves/1", &["family", "k", "sigma", "t", "r"]);
    let mut push_curve = |family: &str, k: f64, sigma: f64| -> CliResult<()> {
        for (&t, &eta) in ts.iter().zip(&etas) {
            curves.push(vec![cell(family), num(k), num(sigma), num(t), num(tsr_factor(k, sigma, eta)?)]);
        }
        Ok(())
    };
    for &k in &c.ks {
        push_curve("k", k, c.sigma_for_ks)?;
    }
    for &sigma in &c.sigmas {
        push_curve("sigma", c.k_for_sigmas, sigma)?;
    }

    let mut metrics = Metrics::new("sweep", config.seed);
    let eta_clip = schedule.snr(schedule.t_min())?;
    let mut worst_asymptote: f64 = 0.0;
    for &k in &c.ks {
        let r = tsr_factor(k, c.sigma_for_ks, eta_clip)?;
        let rel = (r / k - 1.0).abs();
        worst_asymptote = worst_asymptote.max(rel);
        let key = RunKey::new("k", "tsr", "-").k(k).sigma(c.sigma_for_ks);
        metrics.push(&key, "r_at_t_clip", r);
        metrics.push(&key, "rel_err_to_k", rel);
    }

    let mut onset = Table::new("tsr-sweep-onset/1", &["sigma", "k", "threshold", "t_onset"]);
    let mut sorted = c.sigmas.clone();
    sorted.sort_by(f64::total_cmp);
    let mut onsets = Vec::new();
    for &sigma in &sorted {
        let t = onset_time(&schedule, c.k_for_sigmas, sigma, c.onset_threshold)?.unwrap_or(f64::NAN);
        onsets.push(t);
        onset.push(vec![num(sigma), num(c.k_for_sigmas), num(c.onset_threshold), num(t)]);
        metrics.push(&RunKey::new("sigma", "tsr", "-").k(c.k_for_sigmas).sigma(sigma), "t_onset", t);
    }
    curves.write(&dir.join("curves.csv"))?;
    onset.write(&dir.join("onset.csv"))?;

    let increasing = onsets.windows(2).all(|w| w[1] > w[0]);
    let checks = vec![
        Check::new(
            "asymptote_is_k",
            worst_asymptote < 0.01,
            format!("max |r(t_clip)/k - 1| = {worst_asymptote:.2e} (limit 0.01)"),
        ),
        Check::new("onset_increases_with_sigma", increasing, format!("onset times {onsets:?}")),
    ];
    Ok(Outcome { dir: dir.to_path_buf(), files: vec!["curves.csv".into(), "onset.csv".into()], checks, metrics })
}

pub fn plot(dir: &Path) -> CliResult<()> {
    let table = ReadTable::read(&dir.join("curves.csv"))?;
    let cols = ["family", "k", "sigma", "t", "r"].map(|n| table.column(n));
    let [family, k, sigma, t, r] = cols;
    let (family, k, sigma, t, r) = (family?, k?, sigma?, t?, r?);
    let mut panels = vec![Panel::new("varying k", "t", "r_t"), Panel::new("varying sigma", "t", "r_t")];
    for row in &table.rows {
        let (idx, label) =
            if row[family] == "k" { (0, format!("k={}", row[k])) } else { (1, format!("sigma={}", row[sigma])) };
        let panel = &mut panels[idx];
        if panel.series.last().is_none_or(|s| s.label != label) {
            panel.series.push(Series::new(label, Vec::new(), Vec::new(), Mark::Line));
        }
        let s = panel.series.last_mut().expect("series pushed above");
        s.xs.push(table.f64_at(row, t)?);
        s.ys.push(table.f64_at(row, r)?);
    }
    write_atomic(&dir.join("sweep.svg"), plot::render(&panels, 2).as_bytes())
}
