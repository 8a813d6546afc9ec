//! Artifact writing: schema-tagged CSV tables, manifests and atomic file
//! replacement.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const SCHEMA_PREFIX: &str = "# schema=";

/// Writes `bytes` to `path` via a temporary file in the same directory and a
/// rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// An in-memory CSV table whose first line names its schema.
pub struct Table {
    schema: String,
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        Table {
            schema: schema.to_string(),
            comments: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Extra `# ` line written after the schema line.
    pub fn comment(&mut self, text: impl Into<String>) {
        self.comments.push(text.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{SCHEMA_PREFIX}{}\n", self.schema).into_bytes();
        for c in &self.comments {
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.to_bytes())
    }
}

/// Shortest round-trip decimal form, so rewritten values are bit-exact.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn cell(v: impl Display) -> String {
    v.to_string()
}

/// A parsed CSV table (schema line and comments stripped).
pub struct ReadTable {
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReadTable {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let schema = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix(SCHEMA_PREFIX))
            .ok_or_else(|| CliError::Config(format!("{} has no schema line", path.display())))?
            .to_string();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let bad = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
        let header = reader.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(bad)?;
        Ok(ReadTable { schema, header, rows })
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("table {} has no column `{name}`", self.schema)))
    }

    pub fn f64_at(&self, row: &[String], col: usize) -> CliResult<f64> {
        row[col].parse().map_err(|_| CliError::Config(format!("table {}: `{}` is not a number", self.schema, row[col])))
    }
}

/// Long-format metrics keyed by experiment, run and method parameters.
pub struct Metrics {
    experiment: String,
    seed: u64,
    table: Table,
}

/// Method description attached to each metric row.
#[derive(Debug, Clone, Default)]
pub struct RunKey {
    pub run: String,
    pub policy: String,
    pub k: Option<f64>,
    pub sigma: Option<f64>,
    pub sampler: String,
}

impl RunKey {
    pub fn new(run: &str, policy: &str, sampler: &str) -> Self {
        RunKey { run: run.into(), policy: policy.into(), sampler: sampler.into(), ..RunKey::default() }
    }

    pub fn k(mut self, k: f64) -> Self {
        self.k = Some(k);
        self
    }

    pub fn sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }
}

impl Metrics {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Metrics {
            experiment: experiment.to_string(),
            seed,
            table: Table::new(
                "tsr-metrics/1",
                &["experiment", "run", "policy", "k", "sigma", "sampler", "seed", "metric", "value"],
            ),
        }
    }

    pub fn push(&mut self, key: &RunKey, metric: &str, value: f64) {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        self.table.push(vec![
            self.experiment.clone(),
            key.run.clone(),
            key.policy.clone(),
            opt(key.k),
            opt(key.sigma),
            key.sampler.clone(),
            cell(self.seed),
            metric.to_string(),
            num(value),
        ]);
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        self.table.write(path)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    version: &'a str,
    files: Vec<String>,
    config: &'a Config,
}

/// Records the fully resolved config; passing the manifest back through
/// `--config` reruns the experiment with identical data outputs.
pub fn write_manifest(dir: &Path, experiment: &str, config: &Config, files: &[String]) -> CliResult<()> {
    let manifest = Manifest { experiment, version: env!("CARGO_PKG_VERSION"), files: files.to_vec(), config };
    let text = toml::to_string(&manifest).expect("manifest serializes to TOML");
    write_atomic(&dir.join("manifest.toml"), text.as_bytes())
}

/// Experiment name recorded in a manifest.
pub fn manifest_experiment(path: &Path) -> CliResult<String> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    value
        .get("experiment")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Config(format!("{} is not a manifest", path.display())))
}
