//! CSV input and output of single price columns.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Which CSV column holds the prices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSelector {
    /// Zero-based position.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
    /// Rightmost column of each row.
    Last,
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(n) => f.write_str(n),
            ColumnSelector::Last => f.write_str("last"),
        }
    }
}

impl FromStr for ColumnSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty column selector".into()));
        }
        Ok(match s {
            "last" => ColumnSelector::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => ColumnSelector::Index(i),
                Err(_) => ColumnSelector::Name(s.to_string()),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderMode {
    /// Treat the first row as a header when its selected cell is not a
    /// number.
    Auto,
    Present,
    Absent,
}

impl HeaderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HeaderMode::Auto => "auto",
            HeaderMode::Present => "yes",
            HeaderMode::Absent => "no",
        }
    }
}

impl FromStr for HeaderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(HeaderMode::Auto),
            "yes" | "true" | "present" => Ok(HeaderMode::Present),
            "no" | "false" | "absent" => Ok(HeaderMode::Absent),
            other => Err(Error::Config(format!("invalid header mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub column: ColumnSelector,
    pub delimiter: u8,
    pub header: HeaderMode,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            column: ColumnSelector::Last,
            delimiter: b',',
            header: HeaderMode::Auto,
        }
    }
}

fn cell_index(selector: &ColumnSelector, record: &csv::StringRecord) -> Option<usize> {
    match selector {
        ColumnSelector::Index(i) => (*i < record.len()).then_some(*i),
        ColumnSelector::Last => record.len().checked_sub(1),
        ColumnSelector::Name(_) => None,
    }
}

/// Reads one numeric column. Rows are taken in file order; errors report
/// the 1-based line number in the file.
pub fn ingest_csv(path: &Path, opts: &CsvOptions) -> Result<TimeSeries> {
    if !path.is_file() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;

    let parse_error = |row: usize, column: String, message: String| Error::ParseError { row, column, message };
    let mut records = reader.records();
    let mut values = Vec::new();
    let mut named: Option<(usize, String)> = None;
    let mut first = true;

    for record in records.by_ref() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_error(row, opts.column.to_string(), e.to_string())
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);

        if first {
            first = false;
            let is_header = match (&opts.header, &opts.column) {
                (HeaderMode::Present, _) => true,
                (HeaderMode::Absent, ColumnSelector::Name(n)) => {
                    return Err(Error::Config(format!("column '{n}' selected by name but header = no")))
                }
                (HeaderMode::Absent, _) => false,
                (HeaderMode::Auto, ColumnSelector::Name(_)) => true,
                (HeaderMode::Auto, sel) => match cell_index(sel, &record) {
                    Some(i) => record[i].parse::<f64>().is_err(),
                    None => true,
                },
            };
            if is_header {
                if let ColumnSelector::Name(n) = &opts.column {
                    let i = record
                        .iter()
                        .position(|h| h == n)
                        .ok_or_else(|| Error::Config(format!("no column named '{n}' in header")))?;
                    named = Some((i, n.clone()));
                }
                continue;
            }
        }

        let (idx, column) = match &named {
            Some((i, n)) => (Some(*i).filter(|i| *i < record.len()), n.clone()),
            None => (cell_index(&opts.column, &record), opts.column.to_string()),
        };
        let cell = idx
            .map(|i| &record[i])
            .ok_or_else(|| parse_error(row, column.clone(), "missing field".into()))?;
        if cell.is_empty() {
            return Err(parse_error(row, column, "empty cell".into()));
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| parse_error(row, column.clone(), format!("'{cell}' is not a number")))?;
        if !v.is_finite() {
            return Err(parse_error(row, column, format!("'{cell}' is not finite")));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    TimeSeries::raw(values, path.display().to_string())
}

/// Writes named columns of equal length with a header row. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_columns(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let wrap = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(columns.iter().map(|(n, _)| *n)).map_err(wrap)?;
    let rows = columns.first().map(|(_, v)| v.len()).unwrap_or(0);
    for r in 0..rows {
        w.write_record(columns.iter().map(|(_, v)| v[r].to_string())).map_err(wrap)?;
    }
    w.flush()?;
    Ok(())
}
