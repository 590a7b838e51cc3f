//! Daily closing-price series: CSV ingestion, validation, slicing and returns.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Dated daily closes for one instrument.
///
/// Dates are strictly increasing and every close is finite and positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::InvalidSeries(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        for pair in dates.windows(2) {
            if pair[1] == pair[0] {
                return Err(Error::DuplicateDate(pair[0]));
            }
            if pair[1] < pair[0] {
                return Err(Error::InvalidSeries(format!(
                    "dates not increasing at {}",
                    pair[1]
                )));
            }
        }
        if let Some((i, c)) = closes
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::InvalidSeries(format!(
                "close {c} on {} is not a positive number",
                dates[i]
            )));
        }
        Ok(Self {
            ticker: ticker.into(),
            dates,
            closes,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn with_ticker(mut self, ticker: impl Into<String>) -> Self {
        self.ticker = ticker.into();
        self
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Position of `date` among the trading days, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub(crate) fn require_len(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            return Err(Error::TooShort {
                needed,
                got: self.len(),
            });
        }
        Ok(())
    }

    /// All observations with `start <= date <= end`.
    pub fn slice(&self, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!(
                "window start {start} is after end {end}"
            )));
        }
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        if lo >= hi {
            return Err(Error::EmptyWindow { start, end });
        }
        Ok(Self {
            ticker: self.ticker.clone(),
            dates: self.dates[lo..hi].to_vec(),
            closes: self.closes[lo..hi].to_vec(),
        })
    }

    pub fn slice_range(&self, range: DateRange) -> Result<Self> {
        self.slice(range.start, range.end)
    }

    /// Base-10 log returns, one per day after the first.
    pub fn log_returns(&self) -> Result<ReturnSeries> {
        self.require_len(2)?;
        let values = self
            .closes
            .windows(2)
            .map(|w| (w[1] / w[0]).log10())
            .collect();
        Ok(ReturnSeries {
            dates: self.dates[1..].to_vec(),
            values,
        })
    }

    /// Writes the canonical `date,close` format. Closes use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.len() * 24 + 16);
        buf.push_str("date,close\n");
        for (d, c) in self.dates.iter().zip(&self.closes) {
            buf.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), c));
        }
        out.write_all(buf.as_bytes())
            .map_err(|e| Error::io("<output>", e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Base-10 log returns aligned to the later day of each pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rebuilds closes from the first close by compounding the returns.
    pub fn reconstruct(&self, first_close: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        out.push(first_close);
        let mut log_level = first_close.log10();
        for r in &self.values {
            log_level += r;
            out.push(10f64.powf(log_level));
        }
        out
    }
}

/// Maps CSV columns onto the date and close fields. Header matching ignores
/// case and surrounding whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date_column: String,
    pub close_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            close_column: "close".into(),
        }
    }
}

impl CsvSchema {
    /// Yahoo Finance export layout, reading the raw `Close` column.
    pub fn yahoo() -> Self {
        Self {
            date_column: "Date".into(),
            close_column: "Close".into(),
        }
    }
}

impl FromStr for CsvSchema {
    type Err = Error;

    /// Parses `date=<col>,close=<col>`; either key may be omitted.
    fn from_str(s: &str) -> Result<Self> {
        let mut schema = CsvSchema::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("schema entry `{part}` is not key=column"))
            })?;
            let value = value.trim().to_string();
            match key.trim() {
                "date" => schema.date_column = value,
                "close" => schema.close_column = value,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown schema key `{other}` (expected date or close)"
                    )))
                }
            }
        }
        Ok(schema)
    }
}

/// Inclusive calendar-date range, written `YYYY-MM-DD:YYYY-MM-DD`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!(
                "range start {start} is after end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

impl FromStr for DateRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("range `{s}` is not start:end")))?;
        DateRange::new(parse_date(a)?, parse_date(b)?)
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| Error::InvalidArgument(format!("bad date `{s}`: {e}")))
}

/// A loaded series and the number of rows skipped for an unusable date or close.
#[derive(Clone, Debug)]
pub struct LoadedSeries {
    pub series: PriceSeries,
    pub dropped_rows: usize,
}

/// Loads a price series from a CSV file. The ticker is the file stem.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, ticker, schema).map_err(|e| match e {
        Error::NoRows(_) => Error::NoRows(path.display().to_string()),
        other => other,
    })
}

/// Reads a price series from any CSV source. Rows whose date does not parse
/// or whose close is missing, non-numeric, zero or negative are dropped and
/// counted. Rows are sorted by date; a repeated date is an error.
pub fn read_csv<R: Read>(
    source: R,
    ticker: impl Into<String>,
    schema: &CsvSchema,
) -> Result<LoadedSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_col = find(&schema.date_column)?;
    let close_col = find(&schema.close_column)?;

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        let date = record
            .get(date_col)
            .and_then(|s| NaiveDate::parse_from_str(s, DATE_FORMAT).ok());
        let close = record
            .get(close_col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|c| c.is_finite() && *c > 0.0);
        match (date, close) {
            (Some(d), Some(c)) => rows.push((d, c)),
            _ => dropped += 1,
        }
    }
    let ticker = ticker.into();
    if rows.is_empty() {
        return Err(Error::NoRows(ticker));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(pair) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(pair[0].0));
    }
    let (dates, closes) = rows.into_iter().unzip();
    Ok(LoadedSeries {
        series: PriceSeries::new(ticker, dates, closes)?,
        dropped_rows: dropped,
    })
}
