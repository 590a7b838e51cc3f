//! Seeded synthetic data with planted structure, and the exhaustive
//! partition search used to check the break estimator.

use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::breakpoints::{check_feasible, BreakResult, SsrTable};
use crate::error::{Error, Result};
use crate::market_data::PriceSeries;

/// Largest series accepted by [`brute_force_partition`].
pub const BRUTE_FORCE_MAX_LEN: usize = 40;

/// From `index` on, the background level is `level`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedBreak {
    pub index: usize,
    pub level: f64,
}

/// A decline of total base-10 magnitude `magnitude` spread evenly over
/// `duration` days, with its peak at index `start`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedShock {
    pub start: usize,
    pub magnitude: f64,
    pub duration: usize,
}

impl PlantedShock {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

fn default_ticker() -> String {
    "SYNTH".into()
}

/// Parameters of a synthetic daily price series. `drift` and `volatility`
/// are the mean and standard deviation of the daily base-10 log return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_days: usize,
    pub base_price: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub volatility: f64,
    #[serde(default)]
    pub planted_breaks: Vec<PlantedBreak>,
    #[serde(default)]
    pub planted_shocks: Vec<PlantedShock>,
    #[serde(default)]
    pub seed: u64,
    /// First trading day; later days skip weekends.
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    #[serde(default = "default_ticker")]
    pub ticker: String,
}

impl SynthSpec {
    /// A flat series at `base_price` with no noise or planted structure.
    pub fn flat(n_days: usize, base_price: f64) -> Self {
        Self {
            n_days,
            base_price,
            drift: 0.0,
            volatility: 0.0,
            planted_breaks: Vec::new(),
            planted_shocks: Vec::new(),
            seed: 0,
            start_date: default_start_date(),
            ticker: default_ticker(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_days < 2 {
            return bad(format!("n_days {} < 2", self.n_days));
        }
        if !(self.base_price.is_finite() && self.base_price > 0.0) {
            return bad(format!("base_price {} must be positive", self.base_price));
        }
        if !self.drift.is_finite() || !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return bad("drift must be finite and volatility non-negative".into());
        }
        for b in &self.planted_breaks {
            if b.index == 0 || b.index >= self.n_days {
                return bad(format!(
                    "break index {} outside 1..{}",
                    b.index, self.n_days
                ));
            }
            if !(b.level.is_finite() && b.level > 0.0) {
                return bad(format!("break level {} must be positive", b.level));
            }
        }
        let mut shocks = self.planted_shocks.clone();
        shocks.sort_by_key(|s| s.start);
        for s in &shocks {
            if !(s.magnitude.is_finite() && s.magnitude > 0.0) || s.duration == 0 {
                return bad(format!(
                    "shock at {} needs positive magnitude and duration",
                    s.start
                ));
            }
            if s.end() >= self.n_days {
                return bad(format!("shock at {} runs past the series end", s.start));
            }
            // The shock's days and the guard days on either side stay free of level shifts.
            if self
                .planted_breaks
                .iter()
                .any(|b| b.index >= s.start && b.index <= s.end() + 1)
            {
                return bad(format!(
                    "a planted break falls inside the shock at {}",
                    s.start
                ));
            }
        }
        for w in shocks.windows(2) {
            if w[1].start <= w[0].end() + 1 {
                return bad(format!(
                    "shocks at {} and {} overlap",
                    w[0].start, w[1].start
                ));
            }
        }
        Ok(())
    }
}

fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Builds the series `close_t = level_t * 10^(w_t)` where `w` is a random
/// walk of daily base-10 log returns.
///
/// Inside a planted shock each day moves by exactly `-magnitude / duration`.
/// The day entering the peak and the day after the trough are clamped to be
/// non-declining, so every planted shock is a maximal decline run of exactly
/// its planted magnitude whatever the noise.
pub fn generate(spec: &SynthSpec) -> Result<PriceSeries> {
    spec.validate()?;
    let n = spec.n_days;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut level = vec![spec.base_price; n];
    let mut breaks = spec.planted_breaks.clone();
    breaks.sort_by_key(|b| b.index);
    for b in &breaks {
        level[b.index..].fill(b.level);
    }

    #[derive(Clone, Copy)]
    enum Day {
        Free,
        Decline(f64),
        Guard,
    }
    let mut kind = vec![Day::Free; n];
    for s in &spec.planted_shocks {
        kind[s.start] = Day::Guard;
        for k in &mut kind[s.start + 1..=s.end()] {
            *k = Day::Decline(s.magnitude / s.duration as f64);
        }
        if s.end() + 1 < n {
            kind[s.end() + 1] = Day::Guard;
        }
    }

    let mut closes = Vec::with_capacity(n);
    let mut walk = 0.0;
    closes.push(level[0]);
    for t in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        let noise = spec.drift + spec.volatility * z;
        let prev = level[t - 1] * 10f64.powf(walk);
        walk += match kind[t] {
            Day::Free => noise,
            Day::Decline(step) => -step,
            Day::Guard => noise,
        };
        let mut close = level[t] * 10f64.powf(walk);
        if matches!(kind[t], Day::Guard) && close < prev {
            // Undo the decline so the planted run neither starts early nor continues.
            walk += (prev / close).log10();
            close = prev;
        }
        closes.push(close);
    }
    PriceSeries::new(
        spec.ticker.clone(),
        trading_days(spec.start_date, n),
        closes,
    )
}

/// `n` magnitudes `>= m_min` whose exceedance law is
/// `N(M) / N(m_min) = 10^(-beta (M - m_min))`, drawn by inverse transform.
pub fn sample_gr_magnitudes(beta: f64, n: usize, m_min: f64, seed: u64) -> Result<Vec<f64>> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta {beta} must be positive"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    if !(m_min.is_finite() && m_min > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "m_min {m_min} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            // u in (0, 1]
            let u = 1.0 - rng.random::<f64>();
            m_min - u.log10() / beta
        })
        .collect())
}

/// Exhaustive search over every admissible partition into `m + 1` segments.
///
/// Totals are accumulated from the last segment backwards, the same order
/// the dynamic program adds costs, so equal partitions give bit-identical
/// totals. Candidates are visited in lexicographic order and only a strictly
/// smaller total replaces the incumbent.
pub fn brute_force_partition(y: &[f64], m: usize, h_min: usize) -> Result<BreakResult> {
    let n = y.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::TooLargeForBruteForce {
            n,
            max: BRUTE_FORCE_MAX_LEN,
        });
    }
    check_feasible(n, m, h_min)?;
    let table = SsrTable::new(y, h_min.min(n / 2).max(1))?;
    let mut per_m = Vec::with_capacity(m + 1);
    let mut best_breaks = Vec::new();
    for k in 0..=m {
        let (total, breaks) = best_with(&table, n, k, h_min);
        per_m.push(total);
        best_breaks = breaks;
    }
    Ok(BreakResult::new(best_breaks, per_m[m], per_m))
}

fn best_with(table: &SsrTable, n: usize, m: usize, h_min: usize) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, Vec::new());
    let mut current = Vec::with_capacity(m);
    enumerate(table, n, m, h_min, 0, &mut current, &mut best);
    best
}

fn enumerate(
    table: &SsrTable,
    n: usize,
    m: usize,
    h_min: usize,
    start: usize,
    current: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    let remaining = m - current.len();
    if remaining == 0 {
        let mut bounds = Vec::with_capacity(m + 2);
        bounds.push(0);
        bounds.extend(current.iter().map(|b| b + 1));
        bounds.push(n);
        let mut total = table.ssr(bounds[m], n - 1);
        for s in (0..m).rev() {
            total += table.ssr(bounds[s], bounds[s + 1] - 1);
        }
        if total < best.0 {
            *best = (total, current.clone());
        }
        return;
    }
    let first = start + h_min - 1;
    let last = n - remaining * h_min - 1;
    for b in first..=last {
        current.push(b);
        enumerate(table, n, m, h_min, b + 1, current, best);
        current.pop();
    }
}
