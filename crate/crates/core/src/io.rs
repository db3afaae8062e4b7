//! Numeric CSV with `#`-prefixed metadata lines, and run provenance.
//!
//! Files look like
//!
//! ```text
//! # spinpulse: 0.1.0
//! # current_A: 0.5
//! time_us,signal
//! 0,0.12
//! ```
//!
//! Metadata lines of the form `# key: value` are collected; other comment
//! lines are ignored. Floats are written in Rust's shortest round-trip form,
//! so a write/read cycle is lossless.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// 1-based source line of each row.
    pub lines: Vec<usize>,
}

impl CsvTable {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parses a metadata entry as `f64`, reporting the metadata line on error.
    pub fn meta_f64(&self, key: &str, text: &str) -> Result<f64> {
        let line = text
            .lines()
            .position(|l| meta_entry(l).is_some_and(|(k, _)| k == key))
            .map_or(1, |i| i + 1);
        let value = self
            .meta_value(key)
            .ok_or_else(|| Error::parse(1, format!("missing '# {key}: <value>' header line")))?;
        value
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("'{key}' is not a number: {value:?}")))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn meta_entry(line: &str) -> Option<(String, String)> {
    let body = line.trim_start().strip_prefix('#')?;
    let (k, v) = body.split_once(':')?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

/// Parses a numeric CSV; every data cell must be a float.
pub fn read_csv(text: &str, expected_columns: usize) -> Result<CsvTable> {
    let meta = text.lines().filter_map(meta_entry).collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(csv_line(&e), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.len() != expected_columns {
        let header_line = text
            .lines()
            .position(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
            .map_or(1, |i| i + 1);
        return Err(Error::parse(
            header_line,
            format!("expected {expected_columns} columns in header, found {}", columns.len()),
        ));
    }
    // The csv reader skips blank lines when counting, so line numbers come
    // from the source text instead.
    let mut data_lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, _)| i + 1)
        .skip(1);
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let line = data_lines.next().unwrap_or(0);
        let record = record.map_err(|e| Error::parse(line.max(csv_line(&e)), e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != expected_columns {
            return Err(Error::parse(
                line,
                format!("expected {expected_columns} fields, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("not a number: {cell:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
        lines.push(line);
    }
    Ok(CsvTable {
        meta,
        columns,
        rows,
        lines,
    })
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

/// Writes metadata lines, a header row, and numeric rows.
pub fn write_csv<W: Write>(
    out: W,
    meta: &[(String, String)],
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(columns).map_err(csv_io)?;
    for row in rows {
        writer
            .write_record(row.iter().map(|x| format!("{x}")))
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Deserializes TOML, reporting syntax and schema errors with a 1-based line.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
        Error::parse(line, e.message())
    })
}

/// Stamp carried by every CLI artifact so reruns can be matched to inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            tool: "spinpulse".to_string(),
            version: crate::VERSION.to_string(),
            config_sha256,
            seed,
        }
    }

    pub fn csv_meta(&self) -> Vec<(String, String)> {
        vec![
            (self.tool.clone(), self.version.clone()),
            ("config_sha256".to_string(), self.config_sha256.clone()),
            ("seed".to_string(), self.seed.to_string()),
        ]
    }
}
