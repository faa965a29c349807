//! Run reports and data streams.
//!
//! The report is a JSON document carrying the echoed (resolved)
//! configuration, one line per certificate, the wall time, and the library
//! version. Data streams are plain delimited text tables with a header row;
//! they contain no timing, so identical configurations produce byte-identical
//! streams.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CertificateLine {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    /// "<=" means measured must not exceed the threshold, ">" the opposite,
    /// "==" exact equality.
    pub comparison: String,
    pub pass: bool,
}

impl CertificateLine {
    pub fn le(name: &str, measured: f64, threshold: f64) -> Self {
        CertificateLine {
            name: name.to_string(),
            measured,
            threshold,
            comparison: "<=".to_string(),
            pass: measured <= threshold,
        }
    }

    pub fn gt(name: &str, measured: f64, threshold: f64) -> Self {
        CertificateLine {
            name: name.to_string(),
            measured,
            threshold,
            comparison: ">".to_string(),
            pass: measured > threshold,
        }
    }

    pub fn exact_zero(name: &str, measured: f64) -> Self {
        CertificateLine {
            name: name.to_string(),
            measured,
            threshold: 0.0,
            comparison: "==".to_string(),
            pass: measured == 0.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub experiment: String,
    /// Resolved configuration (defaults filled in), re-runnable as the
    /// `parameters` table of a config file.
    pub parameters: serde_json::Value,
    pub library_version: String,
    pub certificates: Vec<CertificateLine>,
    pub streams: Vec<String>,
    pub wall_time_seconds: f64,
    pub pass: bool,
}

impl RunReport {
    pub fn new<P: Serialize>(experiment: &str, parameters: &P) -> Self {
        RunReport {
            experiment: experiment.to_string(),
            parameters: serde_json::to_value(parameters).expect("parameters serialize"),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            certificates: Vec::new(),
            streams: Vec::new(),
            wall_time_seconds: 0.0,
            pass: true,
        }
    }

    pub fn push(&mut self, line: CertificateLine) {
        self.pass &= line.pass;
        self.certificates.push(line);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir {}", dir.display()))?;
        let path = dir.join("report.json");
        let mut file = std::fs::File::create(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(path)
    }

    pub fn print_summary(&self) {
        for line in &self.certificates {
            println!(
                "[{}] {}: measured {:e} {} {:e}",
                if line.pass { "PASS" } else { "FAIL" },
                line.name,
                line.measured,
                line.comparison,
                line.threshold,
            );
        }
    }
}

/// Write a delimited text table with a fixed header; the writer is the only
/// one touching the file and rows are appended in order.
pub fn write_stream<I>(dir: &Path, name: &str, header: &str, rows: I) -> Result<String>
where
    I: IntoIterator<Item = String>,
{
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;
    let path = dir.join(name);
    let mut file =
        std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(name.to_string())
}

/// Deterministic shortest-round-trip formatting for stream values.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Coordinates joined with ';' so they fit one CSV cell.
pub fn fmt_point(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";")
}
