//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero on an unexpected result.
//!
//! Criteria listed in `KNOWN_FAILURES` are expected to fail at the stated
//! tolerance. They are still run and reported; the suite fails if one of them
//! starts passing, so the list cannot silently go stale.

use std::path::Path;
use std::time::Instant;

use clap::Parser;
use rand::Rng;
use tsr_cli::config::{Config, Dataset, PolicyName};
use tsr_cli::{load_manifest, Cli, Experiment};
use tsr_core::metrics::{assign_modes, grid_coverage};
use tsr_core::rescale::{
    onset_time, rescale_epsilon, rescale_score, rescale_velocity, score_to_velocity, tsr_factor, velocity_to_score,
};
use tsr_core::rng::stream_rng;
use tsr_core::scorefield::{make_checkerboard_with, CheckerboardParams};
use tsr_core::theory::{cns_gap, error_mc, linspace, validate_bounds};
use tsr_core::{
    run, CellGrid, GaussianMixture, RescalePolicy, SampleBatch, SamplerConfig, SamplerKind, Schedule, ScoreField,
};

/// `(criterion, part)` pairs that miss their tolerance; see the README.
const KNOWN_FAILURES: &[(u32, &str)] = &[(3, "ddim-50")];

struct Part {
    name: String,
    passed: bool,
    detail: String,
}

fn part(name: &str, passed: bool, detail: String) -> Part {
    Part { name: name.into(), passed, detail }
}

type Criterion = fn() -> Vec<Part>;

fn main() {
    let criteria: [(u32, &str, Criterion); 9] = [
        (1, "score ratio is exact on a single Gaussian", score_ratio),
        (2, "score, noise and velocity rescaling commute", parameterizations),
        (3, "samplers reach the sharpened variance", variance_law),
        (4, "TSR keeps every 1D mode", mode_preservation),
        (5, "checkerboard coverage", coverage_2d),
        (6, "score error stays under the bounds", error_bounds),
        (7, "constant noise scaling score gap", noise_scaling_gap),
        (8, "r_t asymptote and onset", curves),
        (9, "manifest reruns are byte-identical", determinism),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());

    let mut unexpected = Vec::new();
    for (id, title, f) in criteria {
        if filter.is_some_and(|only| only != id) {
            continue;
        }
        let start = Instant::now();
        let parts = f();
        let elapsed = start.elapsed().as_secs_f64();
        let mut all = true;
        let mut known = true;
        for p in &parts {
            let expected_fail = KNOWN_FAILURES.contains(&(id, p.name.as_str()));
            let mark = match (p.passed, expected_fail) {
                (true, false) => "ok",
                (false, true) => "known-fail",
                (false, false) => "FAIL",
                (true, true) => "unexpected-pass",
            };
            println!("    {mark:>15} {}: {}", p.name, p.detail);
            all &= p.passed;
            known &= p.passed != expected_fail;
        }
        let status = if all { "PASS" } else { "FAIL" };
        let note = if !all && known { " (known failure)" } else { "" };
        println!("criterion {id}: {status}{note} - {title} [{elapsed:.1}s]");
        if !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected results in criteria {unexpected:?}");
        std::process::exit(1);
    }
}

fn schedules() -> [(&'static str, Schedule); 2] {
    [("vp", Schedule::vp()), ("flow", Schedule::flow())]
}

fn score_ratio() -> Vec<Part> {
    let mix = GaussianMixture::gaussian(vec![2.0], 0.5).unwrap();
    let mut rng = stream_rng(11, 0);
    schedules()
        .into_iter()
        .map(|(name, s)| {
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let t = rng.random_range(s.t_min()..=s.t_max());
                let x = [rng.random_range(-6.0..6.0)];
                let k = rng.random_range(0.25..12.0);
                let r = tsr_factor(k, mix.sigma(), s.snr(t).unwrap()).unwrap();
                let plain = mix.score(&x, &s, t, 1.0).unwrap()[0];
                let sharp = mix.score(&x, &s, t, k).unwrap()[0];
                worst = worst.max((r * plain - sharp).abs());
            }
            part(name, worst < 1e-10, format!("max |r s - s_k| = {worst:.2e} over 200 (x, t, k)"))
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn parameterizations() -> Vec<Part> {
    let mut rng = stream_rng(12, 0);
    let mut parts = Vec::new();
    for (name, s) in schedules() {
        let (mut via_score, mut via_eps) = (0.0f64, 0.0f64);
        for _ in 0..500 {
            let t = rng.random_range(s.t_min()..=s.t_max());
            let policy = RescalePolicy::Tsr { k: rng.random_range(0.25..12.0), sigma: rng.random_range(0.05..3.0) };
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let direct = rescale_velocity(&policy, &v, &x, &s, t).unwrap();
            let score = velocity_to_score(&v, &x, &s, t).unwrap();
            let through = score_to_velocity(&rescale_score(&policy, &score, &s, t).unwrap(), &x, &s, t).unwrap();
            via_score = via_score.max(max_abs_diff(&direct, &through));

            let sigma_t = s.alpha_sigma(t).unwrap().1;
            let eps: Vec<f64> = score.iter().map(|v| -sigma_t * v).collect();
            let eps_scaled = rescale_epsilon(&policy, &eps, &s, t).unwrap();
            let back: Vec<f64> = eps_scaled.iter().map(|e| -e / sigma_t).collect();
            let through = score_to_velocity(&back, &x, &s, t).unwrap();
            via_eps = via_eps.max(max_abs_diff(&direct, &through));
        }
        parts.push(part(&format!("{name}/score"), via_score < 1e-9, format!("max diff {via_score:.2e}")));
        parts.push(part(&format!("{name}/eps"), via_eps < 1e-9, format!("max diff {via_eps:.2e}")));
    }
    parts
}

fn mean_std(points: &[f64]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean = points.iter().sum::<f64>() / n;
    let var = points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn variance_law() -> Vec<Part> {
    let mix = GaussianMixture::gaussian(vec![2.0], 0.5).unwrap();
    let policy = RescalePolicy::Tsr { k: 4.0, sigma: 0.5 };
    let runs = [
        ("ddpm-1000", SamplerKind::Ddpm, Schedule::vp(), 1000),
        ("ddim-50", SamplerKind::Ddim, Schedule::vp(), 50),
        ("euler-ode-100", SamplerKind::EulerOde, Schedule::flow(), 100),
        ("euler-sde-500", SamplerKind::EulerSde, Schedule::vp(), 500),
    ];
    runs.into_iter()
        .enumerate()
        .map(|(i, (name, kind, schedule, steps))| {
            let config = SamplerConfig::new(kind, schedule, 20000, 300 + i as u64).with_steps(steps);
            let batch = run(&config, &mix, &policy).unwrap();
            let (mean, std) = mean_std(&batch.points);
            let rel = (std / 0.25 - 1.0).abs();
            let ok = rel <= 0.03 && (mean - 2.0).abs() <= 0.02;
            part(name, ok, format!("std {std:.4} (rel err {rel:.3}, limit 0.03), mean {mean:.4}"))
        })
        .collect()
}

fn six_modes() -> GaussianMixture {
    GaussianMixture::uniform([-5.0, -3.0, -1.0, 1.0, 3.0, 5.0].map(|m| vec![m]).to_vec(), 0.1).unwrap()
}

fn ddpm(field: &dyn ScoreField, policy: RescalePolicy, n: usize, steps: usize, seed: u64) -> SampleBatch {
    let config = SamplerConfig::new(SamplerKind::Ddpm, Schedule::vp(), n, seed).with_steps(steps);
    run(&config, field, &policy).unwrap()
}

fn mode_preservation() -> Vec<Part> {
    let mix = six_modes();
    let k = 10.0;
    let tsr = ddpm(&mix, RescalePolicy::Tsr { k, sigma: 0.1 }, 30000, 1000, 400);
    let cns = ddpm(&mix, RescalePolicy::Cns { k }, 30000, 1000, 400);
    let tsr_stats = assign_modes(&tsr.points, 1, &mix, k, 5.0).unwrap();
    let cns_stats = assign_modes(&cns.points, 1, &mix, k, 5.0).unwrap();

    let target_std = 0.1 / k.sqrt();
    let worst_frac = tsr_stats.modes.iter().map(|m| (m.fraction - 1.0 / 6.0).abs()).fold(0.0, f64::max);
    let worst_std = tsr_stats.modes.iter().map(|m| (m.std / target_std - 1.0).abs()).fold(0.0, f64::max);
    let (tsr_spread, cns_spread) = (tsr_stats.spread(), cns_stats.spread());
    vec![
        part("fractions", worst_frac <= 0.02, format!("max |fraction - 1/6| = {worst_frac:.4} (limit 0.02)")),
        part("mode-std", worst_std <= 0.15, format!("max rel std err {worst_std:.3} (limit 0.15)")),
        part("cns-spread", cns_spread > tsr_spread, format!("spread cns {cns_spread:.4} vs tsr {tsr_spread:.4}")),
    ]
}

fn coverage_2d() -> Vec<Part> {
    // Reduced dataset and step count keep the exact empirical score within
    // the runtime budget on one core.
    let params = CheckerboardParams::default();
    let data = make_checkerboard_with(&params, 4000, 500).unwrap();
    let grid = CellGrid::checkerboard(&params);
    let k = 4.0;
    let tsr = ddpm(&data, RescalePolicy::Tsr { k, sigma: 0.3 }, 2000, 200, 501);
    let cns = ddpm(&data, RescalePolicy::Cns { k }, 2000, 200, 501);
    let tsr_cov = grid_coverage(&tsr.points, 2, &grid).unwrap();
    let cns_cov = grid_coverage(&cns.points, 2, &grid).unwrap();
    let corner = grid.corner_cells().iter().map(|&j| cns_cov.cells[j]).fold(f64::INFINITY, f64::min);
    vec![
        part(
            "tsr-all-cells",
            tsr_cov.min_cell() >= 0.075,
            format!("min cell {:.4} over {} cells (floor 0.075)", tsr_cov.min_cell(), tsr_cov.cells.len()),
        ),
        part("cns-corner", corner < 0.075, format!("min corner {corner:.4} (needs < 0.075)")),
    ]
}

fn error_bounds() -> Vec<Part> {
    let s = Schedule::vp();
    let mix = GaussianMixture::uniform(vec![vec![-5.0], vec![5.0]], 0.1).unwrap();
    let reports = validate_bounds(&mix, &s, 4.0, &linspace(0.05, 0.95, 20), 20000, 600).unwrap();
    let held = reports.iter().filter(|r| r.satisfied).count();
    let worst = reports.iter().map(|r| r.error_mc / (r.bound() * 1.05 + 3.0 * r.mc_stderr)).fold(0.0, f64::max);

    let single = GaussianMixture::gaussian(vec![1.0], 0.3).unwrap();
    let mut zeros = Vec::new();
    for t in [0.1, 0.5, 0.9] {
        zeros.push(error_mc(&mix, &s, t, 1.0, 1000, 601).unwrap().0);
        zeros.push(error_mc(&single, &s, t, 4.0, 1000, 602).unwrap().0);
    }
    vec![
        part(
            "two-mode",
            held == reports.len(),
            format!("{held}/{} grid points, max error / allowance {worst:.3}", reports.len()),
        ),
        part("trivial-zero", zeros.iter().all(|&e| e == 0.0), format!("k=1 and single-component errors {zeros:?}")),
    ]
}

fn noise_scaling_gap() -> Vec<Part> {
    let s = Schedule::vp();
    let ts = linspace(0.05, 0.95, 10);
    let xs = linspace(-3.0, 3.0, 10);
    let max_gap = |mix: &GaussianMixture| {
        let mut worst: f64 = 0.0;
        for &t in &ts {
            for &x in &xs {
                worst = worst.max(cns_gap(mix, &s, t, 4.0, &[x]).unwrap());
            }
        }
        worst
    };
    let standard = max_gap(&GaussianMixture::gaussian(vec![0.0], 1.0).unwrap());
    let two = max_gap(&GaussianMixture::uniform(vec![vec![-2.0], vec![2.0]], 0.5).unwrap());
    vec![
        part("standard-normal", standard < 1e-10, format!("max gap {standard:.2e} over 100 probes")),
        part("two-mode", two > 0.05, format!("max gap {two:.4} over 100 probes")),
    ]
}

fn curves() -> Vec<Part> {
    let s = Schedule::vp();
    let eta = s.snr(s.t_min()).unwrap();
    let worst = [0.5, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|k| (tsr_factor(k, 1.0, eta).unwrap() / k - 1.0).abs())
        .fold(0.0, f64::max);
    let onsets: Vec<f64> = [0.25, 0.5, 1.0, 3.0]
        .into_iter()
        .map(|sigma| onset_time(&s, 2.0, sigma, 1.5).unwrap().unwrap_or(f64::NAN))
        .collect();
    vec![
        part("asymptote", worst < 0.01, format!("max |r(t_clip)/k - 1| = {worst:.2e}")),
        part("onset", onsets.windows(2).all(|w| w[1] > w[0]), format!("onset times {onsets:.4?}")),
    ]
}

fn small_config() -> Config {
    let mut c = Config { seed: 900, ..Config::default() };
    c.toy1d.n = 2000;
    c.toy1d.steps = 200;
    c.toy2d.datasets = vec![Dataset::Checkerboard, Dataset::Swissroll];
    c.toy2d.dataset_size = 400;
    c.toy2d.n = 200;
    c.toy2d.ddpm_steps = 40;
    c.toy2d.ddim_steps = 20;
    c.bounds.points = 4;
    c.bounds.n = 2000;
    c.sample.n = 500;
    c.sample.policy = PolicyName::Tsr;
    c
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Vec<Part> {
    let root = tempfile::tempdir().unwrap();
    let (first, second) = (root.path().join("first"), root.path().join("second"));
    let config = small_config();
    let mut parts = Vec::new();
    for e in Experiment::ALL {
        e.run(&config, &first).unwrap();
        let (recorded, reloaded) = load_manifest(&first.join(e.name()).join("manifest.toml")).unwrap();
        recorded.run(&reloaded, &second).unwrap();
        let (a, b) = (csv_files(&first.join(e.name())), csv_files(&second.join(e.name())));
        let same = !a.is_empty() && a == b;
        parts.push(part(e.name(), same, format!("{} CSV files compared", a.len())));
    }

    let batch = root.path().join("batch.csv");
    let config = root.path().join("config.toml");
    std::fs::write(&config, small_config().to_toml_string()).unwrap();
    let sample = |args: &[&str]| {
        let mut argv = vec!["tsr", "sample"];
        argv.extend_from_slice(args);
        tsr_cli::execute(Cli::try_parse_from(argv).unwrap()).unwrap();
    };
    sample(&[
        "--config",
        config.to_str().unwrap(),
        "--sampler",
        "ddpm",
        "--steps",
        "100",
        "--out",
        batch.to_str().unwrap(),
    ]);
    let rerun = root.path().join("rerun.csv");
    let sidecar = batch.with_extension("json");
    sample(&["--config", sidecar.to_str().unwrap(), "--out", rerun.to_str().unwrap()]);
    let same = std::fs::read(&batch).unwrap() == std::fs::read(&rerun).unwrap();
    parts.push(part("sample-sidecar", same, "batch rerun from its JSON sidecar".into()));
    parts
}
