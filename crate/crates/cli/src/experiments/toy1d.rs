//! Six 1D modes in two classes; compares guidance, constant noise scaling
//! and TSR against exact draws of the sharpened class distribution.

use std::collections::BTreeMap;
use std::path::Path;

use tsr_core::metrics::{assign_modes, wasserstein1, ModeStats};
use tsr_core::rng::derive_seed;
use tsr_core::{run as sample, ClassConditional, GaussianMixture, RescalePolicy, SamplerConfig, SamplerKind};

use super::{Check, Outcome};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{cell, num, Metrics, ReadTable, RunKey, Table};
use crate::plot::{self, histogram, Mark, Panel, Series};

struct Run {
    name: &'static str,
    policy: RescalePolicy,
    /// Sharpening the run aims for; sets the unassigned cutoff.
    k: f64,
    points: Vec<f64>,
}

pub fn run(config: &Config, dir: &Path) -> CliResult<Outcome> {
    let c = &config.toy1d;
    let schedule = config.vp_schedule("toy1d")?;
    let mix = GaussianMixture::uniform(c.means.iter().map(|m| vec![*m]).collect(), c.sigma)?;
    let field = ClassConditional::new(mix, c.classes.clone())?;
    let target = field
        .conditional(c.class)
        .ok_or_else(|| CliError::Config(format!("toy1d.class {} out of range", c.class)))?
        .clone();
    let sampler = SamplerConfig::new(SamplerKind::Ddpm, schedule, c.n, config.seed).with_steps(c.steps);

    let exact_sharp = target.sample(c.k, c.n, derive_seed(config.seed, 1))?;
    let exact_p0 = target.sample(1.0, c.n, derive_seed(config.seed, 2))?;
    let tsr = RescalePolicy::Tsr { k: c.k, sigma: c.tsr_sigma };
    let cns = RescalePolicy::Cns { k: c.k };
    let cfg = RescalePolicy::Cfg { w: c.cfg_w, class: c.class };
    let runs = vec![
        Run { name: "exact", policy: RescalePolicy::None, k: c.k, points: exact_sharp.clone() },
        Run {
            name: "none",
            policy: RescalePolicy::None,
            k: 1.0,
            points: sample(&sampler, &target, &RescalePolicy::None)?.points,
        },
        Run { name: "cfg", policy: cfg, k: 1.0, points: sample(&sampler, &field, &cfg)?.points },
        Run { name: "cns", policy: cns, k: c.k, points: sample(&sampler, &target, &cns)?.points },
        Run { name: "tsr", policy: tsr, k: c.k, points: sample(&sampler, &target, &tsr)?.points },
    ];

    let mut samples = Table::new("tsr-toy1d-samples/1", &["run", "x"]);
    let mut modes = Table::new("tsr-toy1d-modes/1", &["run", "mode", "target_mean", "fraction", "mean", "std"]);
    let mut metrics = Metrics::new("toy1d", config.seed);
    let mut stats: BTreeMap<&str, ModeStats> = BTreeMap::new();
    for r in &runs {
        for x in &r.points {
            samples.push(vec![cell(r.name), num(*x)]);
        }
        let st = assign_modes(&r.points, 1, &target, r.k, c.cutoff_multiplier)?;
        let key = run_key(r, &sampler);
        for (m, s) in st.modes.iter().enumerate() {
            modes.push(vec![
                cell(r.name),
                cell(m),
                num(target.means()[m][0]),
                num(s.fraction),
                num(s.mean[0]),
                num(s.std),
            ]);
            metrics.push(&key, &format!("fraction_{m}"), s.fraction);
            metrics.push(&key, &format!("std_{m}"), s.std);
        }
        metrics.push(&key, "unassigned", st.unassigned);
        metrics.push(&key, "spread", st.spread());
        metrics.push(&key, "w1_vs_exact_sharpened", wasserstein1(&r.points, &exact_sharp)?);
        if r.name == "none" {
            metrics.push(&key, "w1_vs_exact_p0", wasserstein1(&r.points, &exact_p0)?);
        }
        stats.insert(r.name, st);
    }

    let share = 1.0 / target.len() as f64;
    let tsr_stats = &stats["tsr"];
    let worst = tsr_stats.modes.iter().map(|m| (m.fraction - share).abs()).fold(0.0, f64::max);
    let none_w1 = wasserstein1(&runs[1].points, &exact_p0)?;
    let checks = vec![
        Check::new(
            "tsr_modes_uniform",
            worst <= 0.03,
            format!("max |fraction - {share:.4}| = {worst:.4} (limit 0.03)"),
        ),
        Check::new(
            "cns_spread_exceeds_tsr",
            stats["cns"].spread() > tsr_stats.spread(),
            format!("cns spread {:.4} vs tsr {:.4}", stats["cns"].spread(), tsr_stats.spread()),
        ),
        Check::new("none_matches_p0", none_w1 < 0.05, format!("W1 = {none_w1:.4} (limit 0.05)")),
    ];

    samples.write(&dir.join("samples.csv"))?;
    modes.write(&dir.join("modes.csv"))?;
    Ok(Outcome { dir: dir.to_path_buf(), files: vec!["samples.csv".into(), "modes.csv".into()], checks, metrics })
}

fn run_key(r: &Run, sampler: &SamplerConfig) -> RunKey {
    let kind = if r.name == "exact" { "exact" } else { sampler.kind.name() };
    let key = RunKey::new(r.name, r.policy.name(), kind);
    match r.policy {
        RescalePolicy::Tsr { k, sigma } => key.k(k).sigma(sigma),
        RescalePolicy::Cns { k } => key.k(k),
        RescalePolicy::Cfg { w, .. } => key.k(w),
        RescalePolicy::None if r.name == "exact" => key.k(r.k),
        RescalePolicy::None => key,
    }
}

pub fn plot(dir: &Path) -> CliResult<()> {
    let table = ReadTable::read(&dir.join("samples.csv"))?;
    let (run_col, x_col) = (table.column("run")?, table.column("x")?);
    let mut by_run: Vec<(String, Vec<f64>)> = Vec::new();
    for row in &table.rows {
        let x = table.f64_at(row, x_col)?;
        match by_run.iter_mut().find(|(n, _)| *n == row[run_col]) {
            Some((_, v)) => v.push(x),
            None => by_run.push((row[run_col].clone(), vec![x])),
        }
    }
    let finite = || by_run.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let lo = finite().fold(f64::INFINITY, f64::min).max(-50.0).floor() - 0.5;
    let hi = finite().fold(f64::NEG_INFINITY, f64::max).min(50.0).ceil() + 0.5;
    let panels: Vec<Panel> = by_run
        .iter()
        .map(|(name, xs)| {
            let (c, d) = histogram(xs, lo, hi, 200);
            Panel::new(name.clone(), "x", "density").with(Series::new(name.clone(), c, d, Mark::Bars)).x_range(lo, hi)
        })
        .collect();
    crate::output::write_atomic(&dir.join("histogram.svg"), plot::render(&panels, 3).as_bytes())
}
