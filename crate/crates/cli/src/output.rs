//! Versioned CSV and JSON tables, written row by row and read back for resume.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Format;
use crate::CliError;

pub const SCHEMA: &str = "hpchain/1";
pub const STATUS_OK: &str = "ok";

/// Everything in a table except its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub mode: String,
    /// Compact JSON of the effective configuration.
    pub config: String,
    pub notes: Vec<String>,
    pub columns: Vec<String>,
}

/// A number cell, with non-finite values spelled out since JSON has none.
pub fn num(x: f64) -> Value {
    match serde_json::Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None if x.is_nan() => Value::String("NaN".into()),
        None if x > 0.0 => Value::String("inf".into()),
        None => Value::String("-inf".into()),
    }
}

pub fn render_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Inverse of [`render_cell`] on everything it produces.
pub fn parse_cell(s: &str) -> Value {
    if s.is_empty() {
        return Value::Null;
    }
    if let Ok(u) = s.parse::<u64>() {
        return Value::from(u);
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    if s.bytes().any(|b| b.is_ascii_digit()) {
        if let Ok(x) = s.parse::<f64>() {
            if x.is_finite() {
                return num(x);
            }
        }
    }
    Value::String(s.to_string())
}

fn io_err(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    match path {
        Some(p) => CliError::Io(format!("{}: {e}", p.display())),
        None => CliError::Io(e.to_string()),
    }
}

fn csv_line(fields: &[String]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields).map_err(|e| io_err(None, e))?;
    w.into_inner().map_err(|e| io_err(None, e.error()))
}

/// Writes rows as they arrive. CSV goes out immediately; JSON is buffered
/// until [`TableWriter::finish`].
pub struct TableWriter {
    format: Format,
    header: Header,
    out: Box<dyn Write>,
    json_rows: Vec<Vec<Value>>,
}

impl TableWriter {
    pub fn new(format: Format, header: Header, out: Box<dyn Write>) -> Result<Self, CliError> {
        let mut w = TableWriter {
            format,
            header,
            out,
            json_rows: Vec::new(),
        };
        if format == Format::Csv {
            let h = &w.header;
            let mut text = format!("#schema={SCHEMA}\n#mode={}\n#config={}\n", h.mode, h.config).into_bytes();
            for n in &h.notes {
                text.extend_from_slice(format!("#note={n}\n").as_bytes());
            }
            text.extend(csv_line(&h.columns)?);
            w.emit(&text)?;
        }
        Ok(w)
    }

    fn emit(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        self.out.write_all(bytes).map_err(|e| io_err(None, e))?;
        self.out.flush().map_err(|e| io_err(None, e))
    }

    pub fn row(&mut self, cells: &[Value]) -> Result<(), CliError> {
        debug_assert_eq!(cells.len(), self.header.columns.len());
        match self.format {
            Format::Csv => {
                let rec: Vec<String> = cells.iter().map(render_cell).collect();
                let line = csv_line(&rec)?;
                self.emit(&line)
            }
            Format::Json => {
                self.json_rows.push(cells.to_vec());
                Ok(())
            }
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        if self.format == Format::Json {
            let doc = JsonTable {
                schema: SCHEMA.into(),
                mode: self.header.mode.clone(),
                config: serde_json::from_str(&self.header.config).map_err(|e| io_err(None, e))?,
                notes: self.header.notes.clone(),
                columns: self.header.columns.clone(),
                rows: std::mem::take(&mut self.json_rows),
            };
            let mut text = serde_json::to_string_pretty(&doc).map_err(|e| io_err(None, e))?;
            text.push('\n');
            self.emit(text.as_bytes())?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    schema: String,
    mode: String,
    config: Value,
    notes: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

/// A table read back from disk, cells kept in rendered form.
#[derive(Debug, Clone)]
pub struct Existing {
    pub header: Header,
    pub rows: Vec<Vec<String>>,
}

impl Existing {
    /// Completed rows keyed by their first `key_len` rendered cells.
    pub fn completed(&self, key_len: usize) -> HashMap<Vec<String>, Vec<Value>> {
        let Some(status) = self.header.columns.iter().position(|c| c == "status") else {
            return HashMap::new();
        };
        self.rows
            .iter()
            .filter(|r| r.len() == self.header.columns.len() && r[status] == STATUS_OK)
            .map(|r| (r[..key_len].to_vec(), r.iter().map(|c| parse_cell(c)).collect()))
            .collect()
    }
}

/// Reads a table written by [`TableWriter`]. A missing or empty file gives
/// `None`; a file that is not a table is an error.
pub fn read_table(path: &Path) -> Result<Option<Existing>, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(Some(path), e)),
    };
    if text.trim().is_empty() {
        return Ok(None);
    }
    let not_table = || CliError::Usage(format!("{} exists but is not an hpchain/1 table", path.display()));
    if text.starts_with('{') {
        let doc: JsonTable = serde_json::from_str(&text).map_err(|_| not_table())?;
        if doc.schema != SCHEMA {
            return Err(not_table());
        }
        return Ok(Some(Existing {
            header: Header {
                mode: doc.mode,
                config: doc.config.to_string(),
                notes: doc.notes,
                columns: doc.columns,
            },
            rows: doc.rows.iter().map(|r| r.iter().map(render_cell).collect()).collect(),
        }));
    }
    let mut lines = text.lines();
    if lines.next() != Some(&format!("#schema={SCHEMA}")) {
        return Err(not_table());
    }
    let mut header = Header {
        mode: String::new(),
        config: String::new(),
        notes: Vec::new(),
        columns: Vec::new(),
    };
    let mut body = String::new();
    for line in lines {
        if let Some(m) = line.strip_prefix("#mode=") {
            header.mode = m.to_string();
        } else if let Some(c) = line.strip_prefix("#config=") {
            header.config = c.to_string();
        } else if let Some(n) = line.strip_prefix("#note=") {
            header.notes.push(n.to_string());
        } else if !line.starts_with('#') {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body.as_bytes());
    header.columns = reader
        .headers()
        .map_err(|_| not_table())?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        // A torn last line from an interrupted run is simply dropped.
        let Ok(rec) = rec else { break };
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Some(Existing { header, rows }))
}
