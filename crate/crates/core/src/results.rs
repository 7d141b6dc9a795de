//! Result tables and their CSV / JSON encodings.
//!
//! CSV: header row, `.` decimal separator, `\n` line endings, probabilities
//! at 9 significant digits, other reals in shortest round-trip form.
//! JSON: `{"metadata": {...}, "columns": {"name": [...], ...}}` with every
//! number at full precision. Both encodings are byte-identical for identical
//! tables.

use serde_json::{Map, Value as Json};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("unsupported output format `{0}` (expected csv or json)")]
    UnsupportedFormat(String),
    #[error("row has {got} cells, table has {expected} columns")]
    RowWidth { expected: usize, got: usize },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = ResultsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(ResultsError::UnsupportedFormat(s.to_owned())),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    /// Written with 9 significant digits in CSV.
    Prob(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn csv_field(&self) -> String {
        match self {
            Self::Int(v) => v.to_string(),
            Self::Real(v) => format!("{v}"),
            Self::Prob(v) => significant(*v, 9),
            Self::Text(s) => s.clone(),
            Self::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Self::Int(v) => Json::from(*v),
            Self::Real(v) | Self::Prob(v) => {
                serde_json::Number::from_f64(*v).map_or(Json::Null, Json::Number)
            }
            Self::Text(s) => Json::String(s.clone()),
            Self::Bool(b) => Json::Bool(*b),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Int(v) => Some(*v as f64),
            Self::Real(v) | Self::Prob(v) => Some(*v),
            _ => None,
        }
    }
}

/// `digits` significant digits; plain notation for moderate magnitudes,
/// scientific below 1e-4.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let magnitude = x.abs().log10().floor() as i32;
    if magnitude < -4 {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub scenario: String,
    pub seed: u64,
    pub n: u64,
    pub version: String,
    /// Extra key/value pairs, written after the fixed keys in this order.
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(scenario: impl Into<String>, seed: u64, n: u64) -> Self {
        Self {
            scenario: scenario.into(),
            seed,
            n,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl fmt::Display) -> Self {
        self.extra.push((key.into(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    pub metadata: Metadata,
}

impl ResultTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>, metadata: Metadata) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            metadata,
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<(), ResultsError> {
        if row.len() != self.columns.len() {
            return Err(ResultsError::RowWidth {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = &Cell>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(move |r| &r[idx]))
    }
}

pub fn write_results(table: &ResultTable, format: OutputFormat) -> Result<Vec<u8>, ResultsError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::csv_field))?;
            }
            w.into_inner()
                .map_err(|e| ResultsError::Csv(e.into_error().into()))
        }
        OutputFormat::Json => {
            let m = &table.metadata;
            let mut meta = Map::new();
            meta.insert("scenario".into(), Json::String(m.scenario.clone()));
            meta.insert("seed".into(), Json::from(m.seed));
            meta.insert("n".into(), Json::from(m.n));
            meta.insert("version".into(), Json::String(m.version.clone()));
            for (k, v) in &m.extra {
                meta.insert(k.clone(), Json::String(v.clone()));
            }
            let mut cols = Map::new();
            for (i, name) in table.columns.iter().enumerate() {
                let values = table.rows.iter().map(|r| r[i].json()).collect();
                cols.insert(name.clone(), Json::Array(values));
            }
            let mut root = Map::new();
            root.insert("metadata".into(), Json::Object(meta));
            root.insert("columns".into(), Json::Object(cols));
            let mut out = serde_json::to_vec_pretty(&Json::Object(root))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}
