use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no parseable rows in {0}")]
    NoRows(String),
    #[error("duplicate date {0} in input")]
    DuplicateDate(NaiveDate),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no observations between {start} and {end}")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },
    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("no shocks found")]
    NoShocks,
    #[error("infeasible break estimation: {m} breaks with minimum segment length {h_min} need {needed} observations, got {n}")]
    InfeasibleBreaks {
        n: usize,
        m: usize,
        h_min: usize,
        needed: usize,
    },
    #[error("nearest structural break is {distance} observations from the mainshock (limit {limit}); widen the data range")]
    NoBreakNearMainshock { distance: usize, limit: usize },
    #[error("a decline of magnitude {found} inside the influence window exceeds the mainshock magnitude {mainshock}")]
    MainshockExceeded { mainshock: f64, found: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("exhaustive partition search limited to {max} observations, got {n}")]
    TooLargeForBruteForce { n: usize, max: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the input was readable but the analysis cannot be carried out
    /// on it (too little data, no declines, no usable break structure).
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::TooShort { .. }
                | Error::NoShocks
                | Error::InfeasibleBreaks { .. }
                | Error::NoBreakNearMainshock { .. }
                | Error::MainshockExceeded { .. }
                | Error::DegenerateFit(_)
        )
    }
}
