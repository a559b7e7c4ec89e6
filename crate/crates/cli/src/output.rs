//! Deterministic output writers: series files with `index,value` columns,
//! key-value report files, and the run manifest. Machine outputs store
//! fees as integer wei; human-facing summaries print Gwei with three
//! decimals. Nothing here embeds a timestamp, so identical inputs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use feesim_core::{Height, Wei};

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

pub fn series_file_wei(dir: &Path, name: &str, points: impl Iterator<Item = (Height, Wei)>) -> CliResult<PathBuf> {
    let mut out = String::from("index,value\n");
    for (i, v) in points {
        writeln!(out, "{i},{v}").expect("string write");
    }
    let path = dir.join(name);
    write_file(&path, &out)?;
    Ok(path)
}

pub fn series_file_f64(dir: &Path, name: &str, points: impl Iterator<Item = (Height, f64)>) -> CliResult<PathBuf> {
    let mut out = String::from("index,value\n");
    for (i, v) in points {
        writeln!(out, "{i},{v:.9}").expect("string write");
    }
    let path = dir.join(name);
    write_file(&path, &out)?;
    Ok(path)
}

/// A `key = value` report file.
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self { lines: Vec::new() }
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.lines.push((key.to_string(), format!("{value:.6}")));
    }

    pub fn push_opt_f64(&mut self, key: &str, value: Option<f64>) {
        match value {
            Some(v) => self.push_f64(key, v),
            None => self.push(key, "n/a"),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    pub fn write(&self, dir: &Path, name: &str) -> CliResult<PathBuf> {
        let path = dir.join(name);
        write_file(&path, &self.render())?;
        Ok(path)
    }
}

impl Default for Report {
    fn default() -> Self {
        Self::new()
    }
}

/// Formats wei as Gwei with three decimals for human-facing summaries.
pub fn gwei3(wei: Wei) -> String {
    let whole = wei / 1_000_000_000;
    let frac = (wei % 1_000_000_000) / 1_000_000; // three decimals
    format!("{whole}.{frac:03}")
}

/// Formats wei as ETH with three decimals.
pub fn eth3(wei: Wei) -> String {
    let whole = wei / 1_000_000_000_000_000_000;
    let frac = (wei % 1_000_000_000_000_000_000) / 1_000_000_000_000_000;
    format!("{whole}.{frac:03}")
}

/// FNV-1a over file bytes; enough to pin down which inputs a run saw.
pub fn fnv1a_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::internal(format!("cannot hash {}: {e}", path.display())))?;
    Ok(format!("{:016x}", fnv1a(&bytes)))
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Writes the manifest that makes a run reproducible: the inputs (with
/// content hashes), the configuration, and the seed.
pub struct Manifest {
    report: Report,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut report = Report::new();
        report.push("tool", format!("feesim {}", env!("CARGO_PKG_VERSION")));
        report.push("command", command);
        Self { report }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> CliResult<()> {
        self.report.push(&format!("input.{label}"), path.display());
        self.report.push(&format!("input.{label}.fnv1a"), fnv1a_file(path)?);
        Ok(())
    }

    pub fn entry(&mut self, key: &str, value: impl std::fmt::Display) {
        self.report.push(key, value);
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        self.report.write(dir, "manifest.txt")
    }
}
