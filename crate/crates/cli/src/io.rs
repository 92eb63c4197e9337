//! File handling, number formatting, and exit codes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use pmd::spm::DEFAULT_ROW_TOL;
use pmd::{PmdError, Spm};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Pmd(PmdError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 usage or format, 3 infeasible, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Pmd(e) => match e {
                PmdError::MemoryCap { .. } | PmdError::EnumerationCap { .. } => 3,
                PmdError::Numerical(_) | PmdError::Covariance(_) => 4,
                _ => 2,
            },
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Pmd(PmdError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Pmd(PmdError::Json(e))
    }
}

/// Shortest decimal that reads back to the same `f64` (at most 17
/// significant digits).
pub fn num(v: f64) -> String {
    if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Reads an SPM CSV, treating a first line that is not all numbers as a
/// header.
pub fn read_spm(path: &Path) -> Result<Spm, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let has_header = first.split(',').any(|f| f.trim().parse::<f64>().is_err());
    Ok(Spm::from_csv_reader(text.as_bytes(), has_header, DEFAULT_ROW_TOL)?)
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json(path: Option<&Path>, doc: &serde_json::Value) -> Result<(), CliError> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn print_json(doc: &serde_json::Value) -> Result<(), CliError> {
    write_json(None, doc)
}
