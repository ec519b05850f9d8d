//! Artifact writing. Every file is written to a temporary sibling and
//! renamed into place, so readers never see a partial file.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Destination directory for one experiment; `None` discards output.
#[derive(Clone, Debug)]
pub struct Artifacts {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir, written: Vec::new() })
    }

    pub fn discard() -> Self {
        Self { dir: None, written: Vec::new() }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let target = dir.join(name);
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target).with_context(|| format!("renaming into {}", target.display()))?;
        self.written.push(target);
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV with a header row, LF line endings and shortest round-trip
    /// float formatting.
    pub fn write_csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        self.write_bytes(name, &csv_bytes(rows)?)
    }

    /// Point cloud with columns `x0, x1, …`.
    pub fn write_cloud(&mut self, name: &str, dim: usize, flat: &[f64]) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut w = csv_writer();
        w.write_record((0..dim).map(|i| format!("x{i}")))?;
        for p in flat.chunks(dim) {
            w.serialize(p)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.write_bytes(name, &bytes)
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

pub fn csv_bytes<S: Serialize>(rows: &[S]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}
