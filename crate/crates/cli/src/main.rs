use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aftershock_core::report::{render_table, write_table_csv, PLOT_FILES};
use aftershock_core::shocks::{shocks_to_json, write_shocks_csv};
use aftershock_core::{
    analyze, batch, cumulative_counts, detect_shocks, emit_plot_data, fit_gr, generate, load_csv,
    min_segment_len, optimal_partition, per_event_counts, sample_gr_magnitudes, AnalysisConfig,
    CsvSchema, DateRange, Error, GrPoint, PriceSeries, SsrTable, SynthSpec,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Crash and aftershock statistics for daily closing prices.
#[derive(Parser)]
#[command(name = "aftershock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: shocks, mainshock, influence window, G-R fit, rate.
    Analyze(AnalyzeArgs),
    /// Analyze every row of a manifest CSV and write one combined table.
    Batch(BatchArgs),
    /// Least-squares structural breaks in the closes.
    Breaks(BreaksArgs),
    /// List the consecutive-decline runs of a series.
    Shocks(ShocksArgs),
    /// Fit log10 N = alpha - beta * M to a column of magnitudes.
    Grfit(GrfitArgs),
    /// Generate a synthetic price series or G-R magnitudes.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Args)]
struct SeriesArgs {
    /// Price CSV.
    #[arg(long)]
    input: PathBuf,
    /// Column mapping, e.g. `date=Date,close=Adj Close`.
    #[arg(long, default_value = "date=date,close=close")]
    schema: CsvSchema,
    /// Restrict the data to START:END (inclusive).
    #[arg(long)]
    window: Option<DateRange>,
}

impl SeriesArgs {
    fn load(&self) -> Result<PriceSeries, Error> {
        let loaded = load_csv(&self.input, &self.schema)?;
        if loaded.dropped_rows > 0 {
            eprintln!(
                "warning: {}: skipped {} unusable rows",
                self.input.display(),
                loaded.dropped_rows
            );
        }
        match self.window {
            Some(w) => loaded.series.slice_range(w),
            None => Ok(loaded.series),
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Aftershock magnitude cutoff as a fraction of the mainshock [default: 0.07].
    #[arg(long)]
    threshold: Option<f64>,
    /// Number of structural breaks [default: 3].
    #[arg(long)]
    breaks: Option<usize>,
    /// Minimum segment length as a fraction of the sample [default: 0.10].
    #[arg(long)]
    min_seg: Option<f64>,
    /// Trading days per aftershock-rate bin [default: 20].
    #[arg(long)]
    bin_days: Option<usize>,
    /// One fit point per event instead of per distinct magnitude.
    #[arg(long)]
    per_event_points: bool,
    /// Include the mainshock in the fitted magnitudes.
    #[arg(long)]
    include_mainshock: bool,
    /// Estimate breaks on log10 closes.
    #[arg(long)]
    log_price: bool,
}

impl ConfigArgs {
    fn config(&self) -> AnalysisConfig {
        let d = AnalysisConfig::default();
        AnalysisConfig {
            threshold_ratio: self.threshold.unwrap_or(d.threshold_ratio),
            breaks: self.breaks.unwrap_or(d.breaks),
            h_min_fraction: self.min_seg.unwrap_or(d.h_min_fraction),
            bin_width_days: self.bin_days.unwrap_or(d.bin_width_days),
            per_event_points: self.per_event_points,
            include_mainshock: self.include_mainshock,
            log_price_breaks: self.log_price,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Only consider mainshocks whose peak lies in START:END.
    #[arg(long)]
    search: Option<DateRange>,
    /// Crisis label copied into the report.
    #[arg(long)]
    label: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Directory for the report and the plot-data files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    /// Manifest CSV: ticker,path[,start,end,label,date_column,close_column,search_start,search_end].
    #[arg(long, alias = "manifest")]
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Directory for `table.csv` and `reports.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BreaksArgs {
    #[command(flatten)]
    series: SeriesArgs,
    /// Number of breaks.
    #[arg(long, default_value_t = 3)]
    breaks: usize,
    /// Minimum segment length as a fraction of the sample.
    #[arg(long, default_value_t = 0.10)]
    min_seg: f64,
    /// Estimate on log10 closes.
    #[arg(long)]
    log_price: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShocksArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GrfitArgs {
    /// CSV with a magnitude column (for example the output of `shocks`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "magnitude")]
    column: String,
    /// Ignore magnitudes below this value.
    #[arg(long)]
    min_magnitude: Option<f64>,
    #[arg(long)]
    per_event_points: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON series spec; a flat series of --days closes when absent.
    #[arg(long, conflicts_with = "gr_beta")]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    days: usize,
    /// Seed; overrides the one in --spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample G-R magnitudes with this beta instead of a price series.
    #[arg(long)]
    gr_beta: Option<f64>,
    #[arg(long, default_value_t = 1000, requires = "gr_beta")]
    count: usize,
    #[arg(long, default_value_t = 0.01, requires = "gr_beta")]
    m_min: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_infeasible() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult = Result<(), Failure>;

/// Writes `body` to stdout, or to `dir/name` when an output directory is set.
fn emit(out: Option<&Path>, name: &str, body: &str) -> CliResult {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| input_error(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
            println!("{}", path.display());
            Ok(())
        }
        None => io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| input_error(format!("stdout: {e}"))),
    }
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| input_error(e.to_string()))
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn run_analyze(args: &AnalyzeArgs) -> CliResult {
    let series = args.series.load()?;
    let analysis = analyze(&series, &args.config.config(), args.search)?;
    let mut report = analysis.report();
    report.crisis_label = args.label.clone();
    report.price_column = Some(args.series.schema.close_column.clone());
    let (name, body) = match args.format {
        Format::Json => ("report.json", report.to_json()?),
        Format::Csv => (
            "report.csv",
            csv_string(|buf| write_table_csv(buf, &[report.table_row()]))?,
        ),
        Format::Table => ("report.txt", render_table(&[report.table_row()])),
    };
    emit(args.out.as_deref(), name, &body)?;
    if let Some(dir) = &args.out {
        for path in emit_plot_data(&analysis, dir)? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn run_batch(args: &BatchArgs) -> CliResult {
    let outcome = batch(&args.input, &args.config.config())?;
    for row in outcome.rows.iter().filter(|r| !r.ok()) {
        eprintln!(
            "warning: {}: {}",
            row.ticker,
            row.error.as_deref().unwrap_or("failed")
        );
    }
    let table = csv_string(|buf| outcome.write_table(buf))?;
    let json = serde_json::to_string_pretty(&outcome).map_err(Error::from)? + "\n";
    match &args.out {
        Some(dir) => {
            emit(Some(dir), "table.csv", &table)?;
            emit(Some(dir), "reports.json", &json)
        }
        None => match args.format {
            Format::Csv => emit(None, "", &table),
            Format::Json => emit(None, "", &json),
            Format::Table => emit(None, "", &render_table(&outcome.table_rows())),
        },
    }
}

fn run_breaks(args: &BreaksArgs) -> CliResult {
    let series = args.series.load()?;
    let y: Vec<f64> = if args.log_price {
        series.closes().iter().map(|c| c.log10()).collect()
    } else {
        series.closes().to_vec()
    };
    let h_min = min_segment_len(y.len(), args.min_seg);
    let result = optimal_partition(&y, args.breaks, h_min)?.with_dates(series.dates());
    let table = SsrTable::new(&y, h_min)?;
    let segments = result.segments(&table);
    let dates = series.dates();
    let body = match args.format {
        Format::Json => pretty(&json!({
            "ticker": series.ticker(),
            "n_observations": y.len(),
            "h_min": h_min,
            "log_price": args.log_price,
            "m": result.m,
            "break_indices": result.break_indices,
            "break_dates": result.break_dates,
            "total_ssr": result.total_ssr,
            "per_m_ssr": result.per_m_ssr,
            "segments": segments.iter().map(|s| json!({
                "start_date": dates[s.start_index],
                "end_date": dates[s.end_index],
                "n_obs": s.end_index - s.start_index + 1,
                "mean": s.mean,
                "ssr": s.ssr,
            })).collect::<Vec<_>>(),
        })),
        Format::Csv | Format::Table => {
            let mut body = String::from("segment,start_date,end_date,n_obs,mean,ssr\n");
            for (i, s) in segments.iter().enumerate() {
                body += &format!(
                    "{i},{},{},{},{},{}\n",
                    dates[s.start_index],
                    dates[s.end_index],
                    s.end_index - s.start_index + 1,
                    s.mean,
                    s.ssr
                );
            }
            if args.format == Format::Table {
                body = body.replace(',', "\t");
            }
            body
        }
    };
    let name = if args.format == Format::Json {
        "breaks.json"
    } else {
        "breaks.csv"
    };
    emit(args.out.as_deref(), name, &body)
}

fn run_shocks(args: &ShocksArgs) -> CliResult {
    let series = args.series.load()?;
    let shocks = detect_shocks(&series)?;
    let (name, body) = match args.format {
        Format::Json => ("shocks.json", shocks_to_json(&shocks)? + "\n"),
        Format::Csv => (
            "shocks.csv",
            csv_string(|buf| write_shocks_csv(buf, &shocks))?,
        ),
        Format::Table => {
            let mut body = String::from("start_date  end_date    duration  pct_fall  magnitude\n");
            for s in &shocks {
                body += &format!(
                    "{}  {}  {:>8}  {:>7.2}%  {:.6}\n",
                    s.start_date,
                    s.end_date,
                    s.duration_days,
                    100.0 * s.pct_fall,
                    s.magnitude
                );
            }
            ("shocks.txt", body)
        }
    };
    emit(args.out.as_deref(), name, &body)
}

fn read_magnitudes(path: &Path, column: &str) -> Result<Vec<f64>, Failure> {
    let fail = |e: &dyn std::fmt::Display| input_error(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(&e))?;
    let headers = reader.headers().map_err(|e| fail(&e))?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(column))
        .ok_or_else(|| fail(&format!("no `{column}` column")))?;
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail(&e))?;
        let field = record.get(idx).unwrap_or("").trim();
        let m: f64 = field
            .parse()
            .map_err(|_| fail(&format!("row {}: bad magnitude `{field}`", line + 2)))?;
        out.push(m);
    }
    Ok(out)
}

fn points_csv(points: &[GrPoint]) -> String {
    let mut body = String::from("M,N,log10N\n");
    for p in points {
        body += &format!("{},{},{}\n", p.magnitude, p.count, p.log_count);
    }
    body
}

fn run_grfit(args: &GrfitArgs) -> CliResult {
    let mut magnitudes = read_magnitudes(&args.input, &args.column)?;
    if let Some(floor) = args.min_magnitude {
        magnitudes.retain(|&m| m >= floor);
    }
    let points = if args.per_event_points {
        per_event_counts(&magnitudes)?
    } else {
        cumulative_counts(&magnitudes)?
    };
    let fit = fit_gr(&points)?;
    match args.format {
        Format::Json => {
            let body = serde_json::to_string_pretty(&fit.summary()).map_err(Error::from)? + "\n";
            emit(args.out.as_deref(), "gr_fit.json", &body)?;
            if let Some(dir) = &args.out {
                emit(Some(dir), PLOT_FILES[0], &points_csv(&points))?;
            }
            Ok(())
        }
        Format::Csv => emit(args.out.as_deref(), PLOT_FILES[0], &points_csv(&points)),
        Format::Table => emit(
            args.out.as_deref(),
            "gr_fit.txt",
            &format!(
                "alpha      {:.4}\nbeta       {:.4}\nr_squared  {:.4}\nn_points   {}\n",
                fit.alpha,
                fit.beta,
                fit.r_squared,
                points.len()
            ),
        ),
    }
}

fn run_synth(args: &SynthArgs) -> CliResult {
    if let Some(beta) = args.gr_beta {
        let mags = sample_gr_magnitudes(beta, args.count, args.m_min, args.seed.unwrap_or(0))?;
        let mut body = String::from("magnitude\n");
        for m in mags {
            body += &format!("{m}\n");
        }
        return emit(args.out.as_deref(), "magnitudes.csv", &body);
    }
    let mut spec = match &args.spec {
        Some(path) => SynthSpec::from_json_file(path)?,
        None => SynthSpec::flat(args.days, 100.0),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let series = generate(&spec)?;
    let body = csv_string(|buf| series.write_csv(buf))?;
    emit(args.out.as_deref(), "synth.csv", &body)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Batch(a) => run_batch(a),
        Command::Breaks(a) => run_breaks(a),
        Command::Shocks(a) => run_shocks(a),
        Command::Grfit(a) => run_grfit(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
