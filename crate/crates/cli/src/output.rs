//! Rendering of one result record as JSON or CSV.
//!
//! Every command produces a single [`OutputRecord`]; the renderers are
//! deterministic byte-for-byte, so identical inputs give identical output
//! regardless of worker count or destination.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// A parameter echo or a table cell.
#[derive(Debug, Clone)]
pub enum Value {
    U64(u64),
    F64(f64),
    Text(String),
}

/// The full result of one invocation: the command name, the effective
/// input parameters, and a table of named numeric columns.
#[derive(Debug, Clone)]
pub struct OutputRecord {
    pub command: &'static str,
    pub parameters: Vec<(&'static str, Value)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl OutputRecord {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.json(),
            Format::Csv => self.csv(),
        }
    }

    /// One top-level object {command, parameters, rows}; rows are objects
    /// keyed by column name so they stay self-describing.
    fn json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        writeln!(out, "  \"command\": {},", json_string(self.command)).unwrap();
        out.push_str("  \"parameters\": {");
        for (i, (key, value)) in self.parameters.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "\n    {}: {}", json_string(key), json_value(value)).unwrap();
        }
        if !self.parameters.is_empty() {
            out.push_str("\n  ");
        }
        out.push_str("},\n  \"rows\": [");
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str("\n    {");
            for (j, (name, cell)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                write!(out, "{}: {}", json_string(name), json_value(cell)).unwrap();
            }
            out.push('}');
        }
        if !self.rows.is_empty() {
            out.push_str("\n  ");
        }
        out.push_str("]\n}\n");
        out
    }

    /// Header row plus data rows; the parameters are not echoed, keeping
    /// the file a plain machine-readable table.
    fn csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&csv_value(cell));
            }
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits: enough to round-trip any f64 exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Finite numbers stay JSON numbers; the divergence tables are the whole
/// point of the tool, so infinities must survive as the strings "inf"/"nan"
/// rather than dying in serialization.
fn json_value(value: &Value) -> String {
    match value {
        Value::U64(u) => u.to_string(),
        Value::F64(x) if x.is_finite() => fmt_f64(*x),
        Value::F64(x) if x.is_nan() => "\"nan\"".into(),
        Value::F64(x) if *x > 0.0 => "\"inf\"".into(),
        Value::F64(_) => "\"-inf\"".into(),
        Value::Text(s) => json_string(s),
    }
}

fn csv_value(value: &Value) -> String {
    match value {
        Value::U64(u) => u.to_string(),
        Value::F64(x) if x.is_finite() => fmt_f64(*x),
        Value::F64(x) if x.is_nan() => "nan".into(),
        Value::F64(x) if *x > 0.0 => "inf".into(),
        Value::F64(_) => "-inf".into(),
        Value::Text(s) if s.contains([',', '"', '\n']) => {
            format!("\"{}\"", s.replace('"', "\"\""))
        }
        Value::Text(s) => s.clone(),
    }
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => write!(out, "\\u{:04x}", c as u32).unwrap(),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
