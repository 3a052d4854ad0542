//! Result files. CSV outputs open with `#` manifest lines; JSONL outputs
//! open with a manifest record. Everything after the manifest is the
//! result body, which depends only on the configuration and seed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use tracerflow_core::rng::derive_seed;

use crate::config::ExperimentConfig;

/// Provenance of one invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub derived_seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub notes: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, runs: usize, started_unix: u64) -> Self {
        let seed = cfg.seed();
        Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            derived_seeds: (0..runs as u64).map(|i| derive_seed(seed, i)).collect(),
            started_unix,
            finished_unix: unix_now(),
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    fn csv_header(&self) -> String {
        let seeds: Vec<String> = self.derived_seeds.iter().map(u64::to_string).collect();
        let mut out = format!(
            "# tracerflow {} {}\n# config_hash {}\n# seed {}\n# derived_seeds {}\n# started_unix {}\n# finished_unix {}\n",
            self.version,
            self.command,
            self.config_hash,
            self.seed,
            seeds.join(" "),
            self.started_unix,
            self.finished_unix,
        );
        for note in &self.notes {
            out.push_str(&format!("# {note}\n"));
        }
        out
    }
}

/// One JSONL probe record.
pub fn record(probe: &str, params: Value, estimate: Value, stderr: Value, manifest: &RunManifest) -> Value {
    json!({
        "probe": probe,
        "params": params,
        "estimate": estimate,
        "stderr": stderr,
        "seed": manifest.seed,
        "config_hash": manifest.config_hash,
    })
}

/// Destination: a file, or standard output when no path was given.
pub enum Sink {
    File(BufWriter<File>),
    Stdout(io::Stdout),
}

impl Sink {
    pub fn open(path: Option<&Path>) -> io::Result<Self> {
        Ok(match path {
            Some(p) => Sink::File(BufWriter::new(File::create(p)?)),
            None => Sink::Stdout(io::stdout()),
        })
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::File(f) => f.write(buf),
            Sink::Stdout(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::File(f) => f.flush(),
            Sink::Stdout(s) => s.flush(),
        }
    }
}

pub fn write_jsonl(path: Option<&Path>, manifest: &RunManifest, records: &[Value]) -> io::Result<()> {
    let mut out = Sink::open(path)?;
    let head = record("manifest", serde_json::to_value(manifest)?, Value::Null, Value::Null, manifest);
    writeln!(out, "{head}")?;
    for r in records {
        writeln!(out, "{r}")?;
    }
    out.flush()
}

pub fn write_csv(path: Option<&Path>, manifest: &RunManifest, body: &[u8]) -> io::Result<()> {
    let mut out = Sink::open(path)?;
    out.write_all(manifest.csv_header().as_bytes())?;
    out.write_all(body)?;
    out.flush()
}

/// `<path><suffix>`, e.g. `runs.csv` → `runs.csv.drift.jsonl`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Result body of an output file: lines after the manifest.
pub fn body_of(text: &str) -> String {
    let mut lines = text.lines();
    if text.starts_with('{') {
        lines.next();
    }
    lines
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
