//! End-to-end crisis analysis, batch runs over a manifest, and the report
//! and plot-data files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breakpoints::{influence_window, BreakResult, InfluenceWindow, MAX_BREAKS};
use crate::error::{Error, Result};
use crate::market_data::{load_csv, parse_date, CsvSchema, DateRange, PriceSeries};
use crate::powerlaw::{
    cumulative_counts, fit_gr, per_event_counts, temporal_rate, FitFlag, GrFit, GrPoint,
    RateSeries, RateTrend,
};
use crate::shocks::{detect_shocks, filter_aftershocks, identify_mainshock, CrisisWindow, Shock};

/// Tolerance of the `pct_fall = 1 - 10^-M` identity check.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

/// Every tunable of the pipeline. Reports echo the full config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Aftershocks need at least this fraction of the mainshock magnitude.
    pub threshold_ratio: f64,
    /// Number of structural breaks estimated.
    pub breaks: usize,
    /// Minimum segment length as a fraction of the sample (floor 2).
    pub h_min_fraction: f64,
    /// Trading days per aftershock-rate bin.
    pub bin_width_days: usize,
    /// Fit one point per event instead of one per distinct magnitude.
    pub per_event_points: bool,
    /// Add the mainshock to the fitted magnitudes.
    pub include_mainshock: bool,
    /// Estimate breaks on log10 closes instead of closes.
    pub log_price_breaks: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            threshold_ratio: 0.07,
            breaks: 3,
            h_min_fraction: 0.10,
            bin_width_days: 20,
            per_event_points: false,
            include_mainshock: false,
            log_price_breaks: false,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.threshold_ratio > 0.0 && self.threshold_ratio < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold_ratio));
        }
        if self.breaks == 0 || self.breaks > MAX_BREAKS {
            return bad(format!("breaks {} outside 1..={MAX_BREAKS}", self.breaks));
        }
        if !(self.h_min_fraction > 0.0 && self.h_min_fraction < 0.5) {
            return bad(format!(
                "min-seg fraction {} outside (0, 0.5)",
                self.h_min_fraction
            ));
        }
        if self.bin_width_days == 0 {
            return bad("bin width must be >= 1".into());
        }
        Ok(())
    }
}

/// Why a report carries no fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    NoAftershocks,
    TooFewPoints,
    DegenerateMagnitudes,
}

/// Everything computed by [`analyze`].
#[derive(Clone, Debug)]
pub struct Analysis {
    pub series: PriceSeries,
    pub config: AnalysisConfig,
    pub search_window: Option<DateRange>,
    pub shocks: Vec<Shock>,
    pub influence: InfluenceWindow,
    pub crisis: CrisisWindow,
    pub points: Vec<GrPoint>,
    pub fit: Option<GrFit>,
    pub fit_status: FitStatus,
    pub rate: Option<RateSeries>,
}

/// Runs detection, mainshock selection, break estimation, aftershock
/// filtering, the Gutenberg-Richter fit and the rate series.
///
/// A missing fit (too few aftershocks) is reported through `fit_status`
/// rather than as an error.
pub fn analyze(
    series: &PriceSeries,
    config: &AnalysisConfig,
    search_window: Option<DateRange>,
) -> Result<Analysis> {
    config.validate()?;
    let shocks = detect_shocks(series)?;
    if shocks.is_empty() {
        return Err(Error::NoShocks);
    }
    let mainshock = identify_mainshock(&shocks, search_window)?;
    let influence = influence_window(
        series,
        &mainshock,
        config.breaks,
        config.h_min_fraction,
        config.log_price_breaks,
    )?;
    let window_end = influence.window_end;
    let aftershocks = if window_end > mainshock.end_date {
        filter_aftershocks(&shocks, &mainshock, window_end, config.threshold_ratio)?
    } else {
        Vec::new()
    };
    let crisis = CrisisWindow::new(mainshock, influence.window_start, window_end, aftershocks)?;

    let mut magnitudes: Vec<f64> = crisis.aftershocks.iter().map(|s| s.magnitude).collect();
    if config.include_mainshock {
        magnitudes.push(crisis.mainshock.magnitude);
    }
    let points = if magnitudes.is_empty() {
        Vec::new()
    } else if config.per_event_points {
        per_event_counts(&magnitudes)?
    } else {
        cumulative_counts(&magnitudes)?
    };
    let (fit, fit_status) = if magnitudes.is_empty() {
        (None, FitStatus::NoAftershocks)
    } else if points.len() < 3 {
        (None, FitStatus::TooFewPoints)
    } else {
        match fit_gr(&points) {
            Ok(mut fit) => {
                if config.per_event_points {
                    fit.flags.push(FitFlag::PerEventPoints);
                }
                if config.include_mainshock {
                    fit.flags.push(FitFlag::IncludesMainshock);
                }
                (Some(fit), FitStatus::Fitted)
            }
            Err(Error::DegenerateFit(_)) => (None, FitStatus::DegenerateMagnitudes),
            Err(e) => return Err(e),
        }
    };

    let calendar: Vec<NaiveDate> = series
        .dates()
        .iter()
        .copied()
        .filter(|d| *d > crisis.mainshock.end_date && *d <= window_end)
        .collect();
    let rate = if calendar.is_empty() {
        None
    } else {
        Some(temporal_rate(
            &crisis.aftershocks,
            &calendar,
            config.bin_width_days,
        )?)
    };

    Ok(Analysis {
        series: series.clone(),
        config: config.clone(),
        search_window,
        shocks,
        influence,
        crisis,
        points,
        fit,
        fit_status,
        rate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MainshockSummary {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub duration: usize,
    pub pct_fall: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowSummary {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub open_ended: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    pub bin_width_days: usize,
    pub counts: Vec<usize>,
    pub last_bin_partial: bool,
    pub trend: Option<RateTrend>,
}

/// Summary of one crisis with its diagnostics and the config that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrisisReport {
    pub ticker: String,
    pub crisis_label: Option<String>,
    /// Input column the closes were read from, when known.
    pub price_column: Option<String>,
    pub n_observations: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub search_window: Option<DateRange>,
    pub mainshock: MainshockSummary,
    pub window: WindowSummary,
    pub breaks: BreakResult,
    pub h_min: usize,
    pub n_shocks: usize,
    pub n_aftershocks: usize,
    pub fit_status: FitStatus,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub r_squared: Option<f64>,
    pub n_points: usize,
    pub fit_flags: Vec<FitFlag>,
    /// Set when `pct_fall` and `1 - 10^-M` disagree by more than 1e-9.
    pub consistency_flag: bool,
    pub rate: Option<RateSummary>,
    pub config: AnalysisConfig,
}

impl Analysis {
    pub fn report(&self) -> CrisisReport {
        let main = &self.crisis.mainshock;
        let fit = self.fit.as_ref();
        CrisisReport {
            ticker: self.series.ticker().to_string(),
            crisis_label: None,
            price_column: None,
            n_observations: self.series.len(),
            first_date: self.series.dates()[0],
            last_date: self.series.dates()[self.series.len() - 1],
            search_window: self.search_window,
            mainshock: MainshockSummary {
                start_date: main.start_date,
                end_date: main.end_date,
                duration: main.duration_days,
                pct_fall: main.pct_fall,
                magnitude: main.magnitude,
            },
            window: WindowSummary {
                start: self.crisis.window_start,
                end: self.crisis.window_end,
                open_ended: self.influence.open_ended,
            },
            breaks: self.influence.breaks.clone(),
            h_min: self.influence.h_min,
            n_shocks: self.shocks.len(),
            n_aftershocks: self.crisis.aftershocks.len(),
            fit_status: self.fit_status,
            alpha: fit.map(|f| f.alpha),
            beta: fit.map(|f| f.beta),
            r_squared: fit.map(|f| f.r_squared),
            n_points: self.points.len(),
            fit_flags: fit.map(|f| f.flags.clone()).unwrap_or_default(),
            consistency_flag: main.identity_gap() > CONSISTENCY_TOLERANCE,
            rate: self.rate.as_ref().map(|r| RateSummary {
                bin_width_days: r.bin_width_days,
                counts: r.counts.clone(),
                last_bin_partial: r.last_bin_partial,
                trend: r.trend(),
            }),
            config: self.config.clone(),
        }
    }
}

/// Column order of the combined table written by batch runs and `--format csv`.
pub const TABLE_COLUMNS: [&str; 15] = [
    "ticker",
    "crisis",
    "status",
    "pct_fall",
    "magnitude",
    "alpha",
    "beta",
    "r_squared",
    "n_aftershocks",
    "mainshock_start",
    "window_start",
    "window_end",
    "open_ended",
    "consistency_flag",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CrisisReport {
    pub fn table_row(&self) -> Vec<String> {
        vec![
            self.ticker.clone(),
            self.crisis_label.clone().unwrap_or_default(),
            "ok".into(),
            self.mainshock.pct_fall.to_string(),
            self.mainshock.magnitude.to_string(),
            opt(self.alpha),
            opt(self.beta),
            opt(self.r_squared),
            self.n_aftershocks.to_string(),
            self.mainshock.start_date.to_string(),
            self.window.start.to_string(),
            self.window.end.to_string(),
            self.window.open_ended.to_string(),
            self.consistency_flag.to_string(),
            String::new(),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Writes rows as CSV under [`TABLE_COLUMNS`].
pub fn write_table_csv<W: Write>(out: W, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(TABLE_COLUMNS)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// Fixed-width text rendering of table rows for terminals.
pub fn render_table(rows: &[Vec<String>]) -> String {
    const SHOWN: [usize; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11];
    let cell = |row: &[String], c: usize| -> String {
        let v = &row[c];
        match c {
            3 => v
                .parse::<f64>()
                .map(|x| format!("{:.1}%", 100.0 * x))
                .unwrap_or_default(),
            4 | 7 => v
                .parse::<f64>()
                .map(|x| format!("{x:.4}"))
                .unwrap_or_default(),
            5 | 6 => v
                .parse::<f64>()
                .map(|x| format!("{x:.2}"))
                .unwrap_or_default(),
            _ => v.clone(),
        }
    };
    let header: Vec<String> = SHOWN
        .iter()
        .map(|&c| TABLE_COLUMNS[c].to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| SHOWN.iter().map(|&c| cell(r, c)).collect())
        .collect();
    let widths: Vec<usize> = (0..SHOWN.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].len())
                .chain(std::iter::once(header[i].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header) + "\n";
    for r in &body {
        out += &line(r);
        out.push('\n');
    }
    out
}

/// One manifest row: which file to analyze and over which dates.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ManifestRow {
    pub ticker: String,
    pub path: PathBuf,
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub end: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub date_column: Option<String>,
    #[serde(default)]
    pub close_column: Option<String>,
    #[serde(default)]
    pub search_start: Option<String>,
    #[serde(default)]
    pub search_end: Option<String>,
}

fn nonempty(v: &Option<String>) -> Option<&str> {
    v.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

impl ManifestRow {
    fn schema(&self) -> CsvSchema {
        let mut schema = CsvSchema::default();
        if let Some(c) = nonempty(&self.date_column) {
            schema.date_column = c.to_string();
        }
        if let Some(c) = nonempty(&self.close_column) {
            schema.close_column = c.to_string();
        }
        schema
    }

    fn run(&self, base: &Path, config: &AnalysisConfig) -> Result<CrisisReport> {
        let path = if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        };
        let schema = self.schema();
        let mut series = load_csv(&path, &schema)?.series;
        let start = nonempty(&self.start).map(parse_date).transpose()?;
        let end = nonempty(&self.end).map(parse_date).transpose()?;
        if start.is_some() || end.is_some() {
            series = series.slice(
                start.unwrap_or(NaiveDate::MIN),
                end.unwrap_or(NaiveDate::MAX),
            )?;
        }
        let search = match (nonempty(&self.search_start), nonempty(&self.search_end)) {
            (None, None) => None,
            (a, b) => Some(DateRange::new(
                a.map(parse_date).transpose()?.unwrap_or(NaiveDate::MIN),
                b.map(parse_date).transpose()?.unwrap_or(NaiveDate::MAX),
            )?),
        };
        let series = series.with_ticker(self.ticker.clone());
        let mut report = analyze(&series, config, search)?.report();
        report.crisis_label = nonempty(&self.label).map(str::to_string);
        report.price_column = Some(schema.close_column);
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRow {
    pub ticker: String,
    pub label: Option<String>,
    pub report: Option<CrisisReport>,
    pub error: Option<String>,
}

impl BatchRow {
    pub fn ok(&self) -> bool {
        self.report.is_some()
    }

    pub fn table_row(&self) -> Vec<String> {
        match &self.report {
            Some(r) => r.table_row(),
            None => {
                let mut row = vec![String::new(); TABLE_COLUMNS.len()];
                row[0] = self.ticker.clone();
                row[1] = self.label.clone().unwrap_or_default();
                row[2] = "failed".into();
                row[14] = self.error.clone().unwrap_or_default();
                row
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchOutcome {
    pub rows: Vec<BatchRow>,
}

impl BatchOutcome {
    pub fn table_rows(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(BatchRow::table_row).collect()
    }

    pub fn write_table<W: Write>(&self, out: W) -> Result<()> {
        write_table_csv(out, &self.table_rows())
    }
}

/// Analyzes every manifest row. Rows run in parallel; a failing row is
/// recorded with its error and does not stop the others. Relative paths are
/// resolved against the manifest's directory.
pub fn batch(manifest: impl AsRef<Path>, config: &AnalysisConfig) -> Result<BatchOutcome> {
    let manifest = manifest.as_ref();
    config.validate()?;
    let file = fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let entries: Vec<ManifestRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let rows = entries
        .par_iter()
        .map(|entry| match entry.run(base, config) {
            Ok(report) => BatchRow {
                ticker: entry.ticker.clone(),
                label: report.crisis_label.clone(),
                report: Some(report),
                error: None,
            },
            Err(e) => BatchRow {
                ticker: entry.ticker.clone(),
                label: nonempty(&entry.label).map(str::to_string),
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(BatchOutcome { rows })
}

/// File names written by [`emit_plot_data`].
pub const PLOT_FILES: [&str; 4] = [
    "gr_points.csv",
    "gr_fit.csv",
    "price_with_breaks.csv",
    "aftershock_rate.csv",
];

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes plot-ready CSVs: the cumulative magnitude points, the fitted line's
/// endpoints, closes with break markers, and the aftershock rate.
pub fn emit_plot_data(analysis: &Analysis, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(PLOT_FILES.len());

    let mut body = String::from("M,N,log10N\n");
    for p in &analysis.points {
        body += &format!("{},{},{}\n", p.magnitude, p.count, p.log_count);
    }
    written.push(write_file(dir, PLOT_FILES[0], &body)?);

    let mut body = String::from("M,log10N\n");
    if let Some(fit) = &analysis.fit {
        for (m, y) in fit.endpoints() {
            body += &format!("{m},{y}\n");
        }
    }
    written.push(write_file(dir, PLOT_FILES[1], &body)?);

    let breaks = &analysis.influence.breaks.break_indices;
    let mut body = String::from("date,close,is_break\n");
    for (i, (d, c)) in analysis
        .series
        .dates()
        .iter()
        .zip(analysis.series.closes())
        .enumerate()
    {
        body += &format!("{d},{c},{}\n", u8::from(breaks.contains(&i)));
    }
    written.push(write_file(dir, PLOT_FILES[2], &body)?);

    let mut body = String::from("bin_start,count\n");
    if let Some(rate) = &analysis.rate {
        for (d, c) in rate.bin_start_dates.iter().zip(&rate.counts) {
            body += &format!("{d},{c}\n");
        }
    }
    written.push(write_file(dir, PLOT_FILES[3], &body)?);
    Ok(written)
}
