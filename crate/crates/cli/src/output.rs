//! Run artifacts: report.json, cells.csv, paths.csv, summary.txt, plot.svg and
//! the MANIFEST marker that brackets them.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::catalog;
use crate::config::ResolvedConfig;
use crate::experiments::{CellRow, Outcome, PathDump};
use crate::svg;

pub const ARTIFACT: &str = "fermatlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "MANIFEST";

/// Header of cells.csv.
pub const CELL_COLUMNS: [&str; 9] =
    ["experiment", "direction", "mode", "seed", "epsilon", "grid", "T", "dTde_2pt", "dTde_4pt"];

/// Marks a directory as being written; finalized as complete or failed.
pub struct Manifest {
    dir: PathBuf,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

impl Manifest {
    pub fn begin(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let m = Self { dir: dir.to_path_buf() };
        m.write(&json!({ "artifact": ARTIFACT, "version": VERSION, "status": "in_progress" }))?;
        Ok(m)
    }

    fn write(&self, v: &Value) -> io::Result<()> {
        let tmp = self.dir.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(v)? + "\n")?;
        fs::rename(tmp, self.dir.join(MANIFEST))
    }

    /// Records every listed file with its size and SHA-256.
    pub fn complete(self, files: &[String]) -> io::Result<()> {
        let mut entries = Vec::with_capacity(files.len());
        for name in files {
            let bytes = fs::read(self.dir.join(name))?;
            entries.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        self.write(&json!({ "artifact": ARTIFACT, "version": VERSION, "status": "complete", "files": entries }))
    }

    pub fn fail(self, error: &str) -> io::Result<()> {
        self.write(&json!({ "artifact": ARTIFACT, "version": VERSION, "status": "failed", "error": error }))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The deterministic report document; the embedded config omits the output
/// directory so reports written to different places compare byte for byte.
pub fn report(cfg: &ResolvedConfig, outcome: &Outcome) -> Value {
    let mut config = serde_json::to_value(cfg).unwrap_or(Value::Null);
    if let Some(map) = config.as_object_mut() {
        map.remove("output_dir");
    }
    json!({
        "artifact": ARTIFACT,
        "version": VERSION,
        "experiment": cfg.experiment.name(),
        "anchor": catalog::anchor(cfg.experiment),
        "config": config,
        "status": if outcome.agrees() { "agree" } else { "disagree" },
        "checks": outcome.checks,
        "results": outcome.results,
    })
}

pub fn write_json(path: &Path, v: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn write_cells(path: &Path, cells: &[CellRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CELL_COLUMNS)?;
    for c in cells {
        w.write_record([
            c.experiment.clone(),
            c.direction.to_string(),
            c.mode.to_string(),
            c.seed.to_string(),
            fmt_f64(c.epsilon),
            c.grid.to_string(),
            fmt_f64(c.value),
            fmt_f64(c.central),
            fmt_f64(c.four_point),
        ])?;
    }
    w.flush()
}

/// Per-node dump of every path: `path,node,tau,<coordinates>`; rows of paths
/// with fewer coordinates than the widest one are padded with empty fields.
pub fn write_paths(path: &Path, dumps: &[PathDump]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let widest = dumps.iter().max_by_key(|d| d.columns.len());
    let columns = widest.map(|d| d.columns.clone()).unwrap_or_default();
    let header: Vec<String> =
        ["path", "node", "tau"].iter().map(|s| s.to_string()).chain(columns.iter().cloned()).collect();
    w.write_record(&header)?;
    for d in dumps {
        for (k, (tau, row)) in d.taus.iter().zip(&d.rows).enumerate() {
            let mut rec = vec![d.label.clone(), k.to_string(), fmt_f64(*tau)];
            rec.extend(row.iter().map(|x| fmt_f64(*x)));
            rec.resize(header.len(), String::new());
            w.write_record(&rec)?;
        }
    }
    w.flush()
}

/// Shortest round-trip representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Human-readable summary; the only file carrying timings and a timestamp.
pub fn summary(cfg: &ResolvedConfig, outcome: &Outcome, seconds: f64, threads: usize) -> String {
    let mut s = format!(
        "experiment: {}\nanchor: {}\nsystem: {}\nversion: {VERSION}\nthreads: {threads}\nwall_seconds: {seconds:.3}\nfinished_unix: {}\n\nchecks:\n",
        cfg.experiment,
        catalog::anchor(cfg.experiment),
        cfg.system.kind.name(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    );
    for c in &outcome.checks {
        let mark = match c.agrees {
            Some(true) => "ok",
            Some(false) => "DISAGREE",
            None => "recorded",
        };
        s += &format!(
            "  [{mark}] {}: observed {}{}",
            c.name,
            c.observed,
            c.expected.as_ref().map_or(String::new(), |e| format!(", expected {e}"))
        );
        let metrics: Vec<String> = c.metrics.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
        if !metrics.is_empty() {
            s += &format!(" ({})", metrics.join(", "));
        }
        s.push('\n');
    }
    s += &format!("\nstatus: {}\n", if outcome.agrees() { "agree" } else { "disagree" });
    s
}

/// Writes every artifact of a finished run; returns the file names written.
pub fn write_run(
    dir: &Path,
    cfg: &ResolvedConfig,
    outcome: &Outcome,
    seconds: f64,
    threads: usize,
    plot: bool,
) -> io::Result<Vec<String>> {
    write_json(&dir.join("report.json"), &report(cfg, outcome))?;
    write_cells(&dir.join("cells.csv"), &outcome.cells)?;
    write_paths(&dir.join("paths.csv"), &outcome.paths)?;
    fs::File::create(dir.join("summary.txt"))?.write_all(summary(cfg, outcome, seconds, threads).as_bytes())?;
    let mut files: Vec<String> = ["report.json", "cells.csv", "paths.csv", "summary.txt"].map(String::from).to_vec();
    if plot && !outcome.plots.is_empty() {
        fs::write(dir.join("plot.svg"), svg::render(&outcome.plots))?;
        files.push("plot.svg".into());
    }
    Ok(files)
}
