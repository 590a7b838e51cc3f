//! Crash and aftershock statistics for daily closing-price series.
//!
//! The pipeline segments a price series into maximal consecutive-decline runs
//! ([`Shock`]s), picks the largest one as the mainshock, bounds its influence
//! window with least-squares structural breaks, keeps the later runs whose
//! magnitude reaches a fixed fraction of the mainshock (aftershocks), and fits
//! the Gutenberg-Richter law `log10 N(M) = alpha - beta * M` to their
//! cumulative magnitude distribution.
//!
//! Magnitudes are base-10: a shock falling from `peak` to `trough` has
//! `M = log10(peak / trough)`.

pub mod breakpoints;
pub mod error;
pub mod market_data;
pub mod powerlaw;
pub mod report;
pub mod shocks;
pub mod synth;

pub use chrono::NaiveDate;

pub use breakpoints::{
    influence_window, min_segment_len, optimal_partition, BreakResult, InfluenceWindow,
    SegmentStats, SsrTable,
};
pub use error::{Error, Result};
pub use market_data::{
    load_csv, read_csv, CsvSchema, DateRange, LoadedSeries, PriceSeries, ReturnSeries,
};
pub use powerlaw::{
    cumulative_counts, fit_gr, per_event_counts, temporal_rate, FitFlag, GrFit, GrFitSummary,
    GrPoint, RateSeries, RateTrend,
};
pub use report::{
    analyze, batch, emit_plot_data, Analysis, AnalysisConfig, BatchOutcome, BatchRow, CrisisReport,
    FitStatus,
};
pub use shocks::{detect_shocks, filter_aftershocks, identify_mainshock, CrisisWindow, Shock};
pub use synth::{
    brute_force_partition, generate, sample_gr_magnitudes, PlantedBreak, PlantedShock, SynthSpec,
};
