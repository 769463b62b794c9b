//! Versioned CSV tables. Every file starts with a `#schema=<name>/<version>`
//! line followed by a header row; readers refuse any other name or version.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::error::{RunError, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub name: &'static str,
    pub version: u32,
}

pub const GRID: Schema = Schema { name: "grid", version: 1 };
pub const FRONTIER: Schema = Schema { name: "frontier", version: 1 };
pub const BAYES: Schema = Schema { name: "bayes-history", version: 1 };
pub const BAYES_BEST: Schema = Schema { name: "bayes-best", version: 1 };
pub const TRAIN_LOG: Schema = Schema { name: "train-log", version: 1 };
pub const EVAL: Schema = Schema { name: "ppo-eval", version: 1 };
pub const COMPARE: Schema = Schema { name: "comparison", version: 1 };
pub const SCATTER: Schema = Schema { name: "scatter", version: 1 };
pub const POWER_PROFILE: Schema = Schema { name: "power-profile", version: 1 };

impl Schema {
    pub fn line(&self) -> String {
        format!("#schema={}/{}", self.name, self.version)
    }
}

/// Parsed body of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> RunResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunError::runtime(format!("missing column `{name}`")))
    }
}

/// Serializes a whole table.
pub fn to_bytes(schema: Schema, header: &[String], rows: &[Vec<String>]) -> RunResult<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "{}", schema.line())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| RunError::runtime(format!("csv flush: {e}")))
}

/// Parses a table, checking the schema line and, when given, the header.
pub fn parse(text: &str, schema: Schema, expected_header: Option<&[String]>) -> RunResult<Table> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let tag = first
        .trim_end_matches('\r')
        .strip_prefix("#schema=")
        .ok_or_else(|| RunError::runtime("missing schema line"))?;
    let (name, version) = tag
        .rsplit_once('/')
        .ok_or_else(|| RunError::runtime(format!("malformed schema tag `{tag}`")))?;
    if name != schema.name {
        return Err(RunError::runtime(format!("expected a `{}` table, found `{name}`", schema.name)));
    }
    if version.parse::<u32>().ok() != Some(schema.version) {
        return Err(RunError::runtime(format!(
            "unsupported `{name}` schema version `{version}` (this build reads version {})",
            schema.version
        )));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if let Some(expected) = expected_header {
        if header != expected {
            return Err(RunError::runtime(format!("unexpected `{name}` header: {}", header.join(","))));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

pub fn read(path: &Path, schema: Schema, expected_header: Option<&[String]>) -> RunResult<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::runtime(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, schema, expected_header).map_err(|e| RunError::runtime(format!("{}: {e}", path.display())))
}

/// Row-at-a-time writer for long sweeps; flushes after every row so a killed
/// run loses at most the row being written.
pub struct TableWriter {
    inner: csv::Writer<File>,
}

impl TableWriter {
    pub fn create(path: &Path, schema: Schema, header: &[String]) -> RunResult<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{}", schema.line())?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    /// Continues a file whose content is known to end at a row boundary.
    pub fn append(path: &Path) -> RunResult<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { inner: csv::WriterBuilder::new().has_headers(false).from_writer(file) })
    }

    pub fn write_row(&mut self, row: &[String]) -> RunResult<()> {
        self.inner.write_record(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn num(s: &str) -> RunResult<f64> {
    s.trim().parse().map_err(|_| RunError::runtime(format!("not a number: `{s}`")))
}

pub fn opt_num(s: &str) -> RunResult<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        num(s).map(Some)
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
