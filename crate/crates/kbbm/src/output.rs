//! Result files. Everything is written to a temporary file in the target
//! directory and renamed into place, so a crash never leaves a truncated file.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Settings;

/// Writes `bytes` to `path` via a same-directory temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// `time,particle_index,position`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PositionRow {
    pub time: f64,
    pub particle_index: usize,
    pub position: f64,
}

/// `k,theta,r_n,value`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesRow {
    pub k: usize,
    pub theta: f64,
    pub r_n: f64,
    pub value: f64,
}

/// Record of one invocation, enough to rerun it.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub settings: Settings,
    pub seed: u64,
    pub version: &'static str,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
    /// Set when a population cap cut the run short.
    pub partial: bool,
    pub verdict: Option<bool>,
}

/// Files produced by a command, collected as they are written.
#[derive(Debug, Default)]
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.dir.join(name);
        write_csv(&path, rows)?;
        self.files.push(path);
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
