//! Multiple structural breaks in the mean of a series, estimated as the
//! global least-squares partition by dynamic programming.
//!
//! Each segment is fitted with a constant, so the cost of a segment is its
//! sum of squared deviations from the segment mean. The optimal partition of
//! `y` into `m + 1` segments, each at least `h_min` long, minimises the total
//! cost over all admissible break vectors.

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::shocks::Shock;

/// Upper bound on the number of breaks accepted by [`optimal_partition`].
pub const MAX_BREAKS: usize = 10;

/// Least-squares summary of one segment `[start_index, end_index]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentStats {
    pub start_index: usize,
    pub end_index: usize,
    pub ssr: f64,
    pub mean: f64,
}

/// O(1) segment SSR queries from prefix sums.
///
/// Values are shifted by `y[0]` before accumulating, which keeps the
/// cancellation in `sum_sq - sum^2 / n` small for price-level data and makes
/// a constant run produce exactly zero.
#[derive(Clone, Debug)]
pub struct SsrTable {
    shift: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    h_min: usize,
}

impl SsrTable {
    pub fn new(y: &[f64], h_min: usize) -> Result<Self> {
        if h_min == 0 {
            return Err(Error::InvalidArgument(
                "minimum segment length must be >= 1".into(),
            ));
        }
        if y.len() < 2 * h_min {
            return Err(Error::TooShort {
                needed: 2 * h_min,
                got: y.len(),
            });
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {v} in series"
            )));
        }
        let shift = y[0];
        let mut sum = Vec::with_capacity(y.len() + 1);
        let mut sum_sq = Vec::with_capacity(y.len() + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        let (mut s, mut q) = (0.0, 0.0);
        for v in y {
            let c = v - shift;
            s += c;
            q += c * c;
            sum.push(s);
            sum_sq.push(q);
        }
        Ok(Self {
            shift,
            sum,
            sum_sq,
            h_min,
        })
    }

    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_min(&self) -> usize {
        self.h_min
    }

    /// SSR of the constant-mean fit over `y[i..=j]`.
    pub fn ssr(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= j && j < self.len());
        let n = (j - i + 1) as f64;
        let s = self.sum[j + 1] - self.sum[i];
        let q = self.sum_sq[j + 1] - self.sum_sq[i];
        let ssr = q - s * s / n;
        // Rounding residue of an exactly flat segment.
        if ssr <= q * 1e-14 {
            0.0
        } else {
            ssr
        }
    }

    pub fn mean(&self, i: usize, j: usize) -> f64 {
        let n = (j - i + 1) as f64;
        self.shift + (self.sum[j + 1] - self.sum[i]) / n
    }

    pub fn segment(&self, i: usize, j: usize) -> SegmentStats {
        SegmentStats {
            start_index: i,
            end_index: j,
            ssr: self.ssr(i, j),
            mean: self.mean(i, j),
        }
    }
}

/// Optimal break vector for a fixed number of breaks.
///
/// A break at index `k` separates observations `k` and `k + 1`; the break
/// date is the date at index `k`. `per_m_ssr[k]` is the minimal SSR with `k`
/// breaks, for `k = 0..=m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreakResult {
    pub m: usize,
    #[serde(skip)]
    pub break_indices: Vec<usize>,
    pub break_dates: Vec<NaiveDate>,
    pub total_ssr: f64,
    pub per_m_ssr: Vec<f64>,
    pub open_ended: bool,
}

impl BreakResult {
    pub(crate) fn new(break_indices: Vec<usize>, total_ssr: f64, per_m_ssr: Vec<f64>) -> Self {
        Self {
            m: break_indices.len(),
            break_indices,
            break_dates: Vec::new(),
            total_ssr,
            per_m_ssr,
            open_ended: false,
        }
    }

    /// Fills `break_dates` from the trading days the series was indexed by.
    pub fn with_dates(mut self, dates: &[NaiveDate]) -> Self {
        self.break_dates = self.break_indices.iter().map(|&k| dates[k]).collect();
        self
    }

    /// Segment summaries `(start, end, ssr, mean)` of the optimal partition.
    pub fn segments(&self, table: &SsrTable) -> Vec<SegmentStats> {
        let mut out = Vec::with_capacity(self.m + 1);
        let mut start = 0;
        for &b in &self.break_indices {
            out.push(table.segment(start, b));
            start = b + 1;
        }
        out.push(table.segment(start, table.len() - 1));
        out
    }
}

pub(crate) fn check_feasible(n: usize, m: usize, h_min: usize) -> Result<()> {
    if h_min == 0 {
        return Err(Error::InvalidArgument(
            "minimum segment length must be >= 1".into(),
        ));
    }
    let needed = (m + 1) * h_min;
    if needed > n {
        return Err(Error::InfeasibleBreaks {
            n,
            m,
            h_min,
            needed,
        });
    }
    Ok(())
}

/// Global least-squares partition of `y` into `m + 1` segments of length at
/// least `h_min`.
///
/// The recursion runs over suffixes: `cost[k][i]` is the best SSR for
/// `y[i..]` split into `k + 1` segments, and
/// `cost[k][i] = min_j ssr(i, j) + cost[k - 1][j + 1]`. Ties are resolved
/// toward the smallest break vector in lexicographic order.
pub fn optimal_partition(y: &[f64], m: usize, h_min: usize) -> Result<BreakResult> {
    if m > MAX_BREAKS {
        return Err(Error::InvalidArgument(format!(
            "{m} breaks requested; at most {MAX_BREAKS} supported"
        )));
    }
    check_feasible(y.len(), m, h_min)?;
    let n = y.len();
    let table = SsrTable::new(y, h_min.min(n / 2).max(1))?;

    // cost[k][i] is defined for i in 0..=n - (k + 1) * h_min.
    let mut cost: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut choice: Vec<Vec<usize>> = Vec::with_capacity(m + 1);
    cost.push((0..=n - h_min).map(|i| table.ssr(i, n - 1)).collect());
    choice.push(Vec::new());
    for k in 1..=m {
        let last_start = n - (k + 1) * h_min;
        let mut row = Vec::with_capacity(last_start + 1);
        let mut arg = Vec::with_capacity(last_start + 1);
        for i in 0..=last_start {
            let mut best = f64::INFINITY;
            let mut best_j = usize::MAX;
            // The remaining k segments need k * h_min observations after j.
            for j in (i + h_min - 1)..=(n - k * h_min - 1) {
                let v = table.ssr(i, j) + cost[k - 1][j + 1];
                if v < best {
                    best = v;
                    best_j = j;
                }
            }
            row.push(best);
            arg.push(best_j);
        }
        cost.push(row);
        choice.push(arg);
    }

    let mut breaks = Vec::with_capacity(m);
    let mut i = 0;
    for k in (1..=m).rev() {
        let j = choice[k][i];
        breaks.push(j);
        i = j + 1;
    }
    let per_m = cost.iter().map(|row| row[0]).collect();
    Ok(BreakResult::new(breaks, cost[m][0], per_m))
}

/// Minimum segment length used for a series of `n` observations.
pub fn min_segment_len(n: usize, h_min_fraction: f64) -> usize {
    ((h_min_fraction * n as f64).round() as usize).max(2)
}

/// Break-bounded span over which aftershocks of a mainshock are counted.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfluenceWindow {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub open_ended: bool,
    pub h_min: usize,
    pub breaks: BreakResult,
}

/// Estimates `m` breaks on the closes (or log10 closes) and brackets the
/// mainshock: the window opens at the break nearest the mainshock peak and
/// closes at the next break, or at the last observation when none follows.
pub fn influence_window(
    series: &PriceSeries,
    mainshock: &Shock,
    m: usize,
    h_min_fraction: f64,
    log_price: bool,
) -> Result<InfluenceWindow> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "at least one break is needed to bound a window".into(),
        ));
    }
    if !(h_min_fraction > 0.0 && h_min_fraction < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "minimum segment fraction {h_min_fraction} outside (0, 0.5)"
        )));
    }
    let n = series.len();
    let anchor = series.index_of(mainshock.start_date).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "mainshock peak {} is not a date of the series",
            mainshock.start_date
        ))
    })?;
    let h_min = min_segment_len(n, h_min_fraction);
    check_feasible(n, m, h_min)?;
    let y: Vec<f64> = if log_price {
        series.closes().iter().map(|c| c.log10()).collect()
    } else {
        series.closes().to_vec()
    };
    let mut breaks = optimal_partition(&y, m, h_min)?.with_dates(series.dates());

    let (pos, distance) = breaks
        .break_indices
        .iter()
        .enumerate()
        .map(|(p, &b)| (p, b.abs_diff(anchor)))
        .min_by_key(|&(p, d)| (d, p))
        .expect("m >= 1 breaks");
    let limit = n / 4;
    if distance > limit {
        return Err(Error::NoBreakNearMainshock { distance, limit });
    }
    let dates = series.dates();
    let window_start = dates[breaks.break_indices[pos]];
    let (window_end, open_ended) = match breaks.break_indices.get(pos + 1) {
        Some(&next) => (dates[next], false),
        None => (dates[n - 1], true),
    };
    breaks.open_ended = open_ended;
    Ok(InfluenceWindow {
        window_start,
        window_end,
        open_ended,
        h_min,
        breaks,
    })
}
