//! Single sampler run on the configured mixture, written as a CSV plus a
//! JSON sidecar that reproduces it.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tsr_core::{run, SampleBatch, SampleMeta, SamplerConfig};

use crate::config::Config;
use crate::error::CliResult;
use crate::output::{num, write_atomic, Table};

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a Config,
    meta: &'a SampleMeta,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn run_sample(config: &Config, out: &Path) -> CliResult<SampleBatch> {
    let c = &config.sample;
    let mixture = config.mixture()?;
    let policy = c.policy(&mixture);
    let mut sampler = SamplerConfig::new(c.sampler, config.schedule()?, c.n, config.seed);
    if let Some(steps) = c.steps {
        sampler = sampler.with_steps(steps);
    }
    let batch = run(&sampler, &mixture, &policy)?;

    let header: Vec<String> = (0..batch.dim).map(|j| format!("x{j}")).collect();
    let mut table = Table::new("tsr-samples/1", &header.iter().map(String::as_str).collect::<Vec<_>>());
    for row in batch.rows() {
        table.push(row.iter().map(|v| num(*v)).collect());
    }
    table.write(out)?;
    let sidecar = Sidecar { config, meta: &batch.meta };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes to JSON");
    write_atomic(&sidecar_path(out), json.as_bytes())?;
    Ok(batch)
}
