//! Deterministic text reports.
//!
//! A report is a `report <kind>` line followed by `[section]` blocks of
//! `key field...` records. Floats always carry nine significant digits, so
//! emitting, parsing and emitting again reproduces the same bytes.

use std::fmt::{self, Write as _};
use std::path::Path;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<u32> for Field {
    fn from(v: u32) -> Self {
        Field::Int(v as i64)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Bool(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Int(v) => write!(f, "{v}"),
            Field::Float(v) => f.write_str(&format_decimal(*v)),
            Field::Bool(v) => write!(f, "{v}"),
            Field::Text(v) => f.write_str(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub key: String,
    pub fields: Vec<Field>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub records: Vec<Record>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, fields: Vec<Field>) -> &mut Self {
        self.records.push(Record {
            key: key.into(),
            fields,
        });
        self
    }

    pub fn get(&self, key: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.key == key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub kind: String,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(kind: impl Into<String>) -> Self {
        Report {
            kind: kind.into(),
            sections: Vec::new(),
        }
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Appends all sections of `other`, prefixing their names.
    pub fn extend_prefixed(&mut self, prefix: &str, other: Report) {
        for mut s in other.sections {
            s.name = format!("{prefix}.{}", s.name);
            self.sections.push(s);
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report {}", self.kind);
        for s in &self.sections {
            let _ = writeln!(out, "\n[{}]", s.name);
            for r in &s.records {
                out.push_str(&r.key);
                for f in &r.fields {
                    out.push(' ');
                    let _ = write!(out, "{f}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Anything that can be emitted as a report file.
pub trait ToReport {
    fn to_report(&self) -> Report;
}

/// Nine significant digits, fixed notation for magnitudes in `[1e-6, 1e9)`
/// and scientific notation otherwise. Zero renders as `0.000000000`.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let exponent: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    if !(-6..9).contains(&exponent) {
        return sci;
    }
    let decimals = (8 - exponent) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn parse_field(token: &str) -> Field {
    match token {
        "true" => return Field::Bool(true),
        "false" => return Field::Bool(false),
        "nan" => return Field::Float(f64::NAN),
        "inf" => return Field::Float(f64::INFINITY),
        "-inf" => return Field::Float(f64::NEG_INFINITY),
        _ => {}
    }
    let numeric_shape = token
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e'));
    if numeric_shape {
        if !token.contains(['.', 'e']) {
            if let Ok(v) = token.parse::<i64>() {
                return Field::Int(v);
            }
        } else if let Ok(v) = token.parse::<f64>() {
            return Field::Float(v);
        }
    }
    Field::Text(token.to_string())
}

/// Inverse of [`Report::render`].
pub fn parse_report(text: &str) -> Result<Report, ReportError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: &str| ReportError::Parse {
        line: line + 1,
        message: message.to_string(),
    };
    let (first, header) = lines.next().ok_or_else(|| err(0, "empty report"))?;
    let kind = header
        .strip_prefix("report ")
        .ok_or_else(|| err(first, "expected 'report <kind>'"))?;
    let mut report = Report::new(kind.trim());
    for (i, line) in lines {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            report.sections.push(Section::new(name));
            continue;
        }
        let section = report
            .sections
            .last_mut()
            .ok_or_else(|| err(i, "record before first section"))?;
        let mut tokens = line.split_whitespace();
        let key = tokens.next().ok_or_else(|| err(i, "empty record"))?;
        section.push(key, tokens.map(parse_field).collect());
    }
    Ok(report)
}

/// Writes `report` to `path`; the bytes depend only on the report.
pub fn write_report(report: &impl ToReport, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    std::fs::write(path, report.to_report().render()).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}
