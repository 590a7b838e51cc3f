//! Gutenberg-Richter magnitude-frequency fitting and aftershock rate series.

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::shocks::Shock;

/// One point of the cumulative distribution: `count` shocks have magnitude
/// at least `magnitude`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrPoint {
    pub magnitude: f64,
    pub count: usize,
    pub log_count: f64,
}

impl GrPoint {
    pub fn new(magnitude: f64, count: usize) -> Self {
        Self {
            magnitude,
            count,
            log_count: (count as f64).log10(),
        }
    }
}

fn sorted_magnitudes(magnitudes: &[f64]) -> Result<Vec<f64>> {
    if magnitudes.is_empty() {
        return Err(Error::InvalidArgument("no magnitudes".into()));
    }
    if let Some(m) = magnitudes.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "magnitude {m} is not positive"
        )));
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// One point per distinct magnitude, ordered by increasing magnitude.
pub fn cumulative_counts(magnitudes: &[f64]) -> Result<Vec<GrPoint>> {
    let sorted = sorted_magnitudes(magnitudes)?;
    let n = sorted.len();
    let mut points = Vec::new();
    let mut i = 0;
    while i < n {
        points.push(GrPoint::new(sorted[i], n - i));
        while i < n && sorted[i] == points.last().unwrap().magnitude {
            i += 1;
        }
    }
    Ok(points)
}

/// One point per event; tied magnitudes repeat the same point.
pub fn per_event_counts(magnitudes: &[f64]) -> Result<Vec<GrPoint>> {
    let sorted = sorted_magnitudes(magnitudes)?;
    let n = sorted.len();
    let mut points = Vec::with_capacity(n);
    let mut first = 0;
    for (i, &m) in sorted.iter().enumerate() {
        if m != sorted[first] {
            first = i;
        }
        points.push(GrPoint::new(m, n - first));
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The fitted slope does not decrease with magnitude.
    NonPositiveBeta,
    /// All points share one count, so R^2 is undefined and reported as 1.
    ConstantCounts,
    PerEventPoints,
    IncludesMainshock,
}

/// Least-squares line `log10 N = alpha - beta * M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrFit {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub points: Vec<GrPoint>,
    pub flags: Vec<FitFlag>,
}

/// Serialized form of a fit: `{alpha, beta, r_squared, n_points, flags}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrFitSummary {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub flags: Vec<FitFlag>,
}

impl GrFit {
    pub fn predict(&self, magnitude: f64) -> f64 {
        self.alpha - self.beta * magnitude
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.log_count - self.predict(p.magnitude))
            .collect()
    }

    pub fn summary(&self) -> GrFitSummary {
        GrFitSummary {
            alpha: self.alpha,
            beta: self.beta,
            r_squared: self.r_squared,
            n_points: self.points.len(),
            flags: self.flags.clone(),
        }
    }

    /// Endpoints of the fitted line at the smallest and largest magnitude.
    pub fn endpoints(&self) -> [(f64, f64); 2] {
        let lo = self
            .points
            .iter()
            .map(|p| p.magnitude)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .points
            .iter()
            .map(|p| p.magnitude)
            .fold(f64::NEG_INFINITY, f64::max);
        [(lo, self.predict(lo)), (hi, self.predict(hi))]
    }
}

/// Ordinary least squares of `log_count` on `magnitude`.
pub fn fit_gr(points: &[GrPoint]) -> Result<GrFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} points; at least 3 needed",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.magnitude).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.log_count).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.magnitude - mean_x;
        let dy = p.log_count - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || points.iter().all(|p| p.magnitude == points[0].magnitude) {
        return Err(Error::DegenerateFit("all magnitudes identical".into()));
    }
    let slope = sxy / sxx;
    let alpha = mean_y - slope * mean_x;
    let beta = -slope;
    let mut flags = Vec::new();
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.log_count - (alpha + slope * p.magnitude);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 {
        flags.push(FitFlag::ConstantCounts);
        1.0
    } else {
        1.0 - ss_res / syy
    };
    if beta <= 0.0 {
        flags.push(FitFlag::NonPositiveBeta);
    }
    Ok(GrFit {
        alpha,
        beta,
        r_squared,
        points: points.to_vec(),
        flags,
    })
}

/// Aftershock counts in consecutive bins of `bin_width_days` trading days.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSeries {
    pub bin_start_dates: Vec<NaiveDate>,
    pub counts: Vec<usize>,
    pub bin_width_days: usize,
    /// The last bin covers fewer than `bin_width_days` trading days.
    pub last_bin_partial: bool,
}

/// Mann-Kendall trend of counts against bin order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateTrend {
    /// Kendall's tau-a between bin index and count.
    pub tau: f64,
    /// Normal score of the S statistic with tie-corrected variance.
    pub z: f64,
}

impl RateSeries {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Trend over the complete bins; `None` with fewer than 3 of them or when
    /// every count is equal.
    pub fn trend(&self) -> Option<RateTrend> {
        let full = if self.last_bin_partial {
            &self.counts[..self.counts.len().saturating_sub(1)]
        } else {
            &self.counts[..]
        };
        let n = full.len();
        if n < 3 {
            return None;
        }
        let mut s: i64 = 0;
        for i in 0..n {
            for j in i + 1..n {
                s += (full[j] as i64 - full[i] as i64).signum();
            }
        }
        let mut sorted = full.to_vec();
        sorted.sort_unstable();
        let mut tie_term = 0.0;
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        }
        let nf = n as f64;
        let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
        if var <= 0.0 {
            return None;
        }
        let z = match s {
            0 => 0.0,
            s if s > 0 => (s as f64 - 1.0) / var.sqrt(),
            s => (s as f64 + 1.0) / var.sqrt(),
        };
        Some(RateTrend {
            tau: s as f64 / (nf * (nf - 1.0) / 2.0),
            z,
        })
    }
}

/// Bins aftershocks by peak date over `trading_days`, the window's calendar.
/// Aftershocks outside the calendar are ignored.
pub fn temporal_rate(
    aftershocks: &[Shock],
    trading_days: &[NaiveDate],
    bin_width_days: usize,
) -> Result<RateSeries> {
    if bin_width_days == 0 {
        return Err(Error::InvalidArgument("bin width must be >= 1 day".into()));
    }
    if trading_days.is_empty() {
        return Err(Error::InvalidArgument("empty rate window".into()));
    }
    let n_bins = trading_days.len().div_ceil(bin_width_days);
    let mut counts = vec![0; n_bins];
    let (first, last) = (trading_days[0], trading_days[trading_days.len() - 1]);
    for a in aftershocks {
        if a.start_date < first || a.start_date > last {
            continue;
        }
        // Index of the last trading day not after the shock's peak.
        let idx = trading_days.partition_point(|d| *d <= a.start_date) - 1;
        counts[idx / bin_width_days] += 1;
    }
    Ok(RateSeries {
        bin_start_dates: trading_days
            .iter()
            .step_by(bin_width_days)
            .copied()
            .collect(),
        counts,
        bin_width_days,
        last_bin_partial: trading_days.len() % bin_width_days != 0,
    })
}
