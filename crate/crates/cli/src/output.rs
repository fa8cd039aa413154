use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Output directory; every file lands there via write-temp-then-rename.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `name` atomically with the bytes produced by `fill`.
    pub fn write_with(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> ple_core::Result<()>) -> Result<PathBuf, CliError> {
        let target = self.path(name);
        let io = |e: std::io::Error| CliError::Config(format!("writing {}: {e}", target.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        fill(tmp.as_file_mut()).map_err(CliError::from)?;
        tmp.as_file_mut().flush().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        log::info!("wrote {}", target.display());
        Ok(target)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(&table.header)?;
            for row in &table.rows {
                wtr.write_record(row)?;
            }
            wtr.flush()?;
            Ok(())
        })
    }

    /// Writes a report as `<stem>.json` or `<stem>.csv`.
    pub fn write_report<T: Serialize>(
        &self,
        stem: &str,
        format: Format,
        value: &T,
        table: impl FnOnce() -> Table,
    ) -> Result<PathBuf, CliError> {
        match format {
            Format::Json => self.write_json(&format!("{stem}.json"), value),
            Format::Csv => self.write_table(&format!("{stem}.csv"), &table()),
        }
    }
}

/// Flat CSV view of a report.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Two-column `key,value` table.
    pub fn key_value(pairs: Vec<(&str, String)>) -> Self {
        let mut t = Table::new(&["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.to_string(), v]);
        }
        t
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
