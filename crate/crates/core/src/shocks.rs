//! Maximal consecutive-decline runs ("shocks"), mainshock selection and the
//! aftershock threshold filter.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{DateRange, PriceSeries};

/// Relative slack on the aftershock cutoff so that a magnitude equal to
/// `ratio * mainshock` is kept despite rounding in the product.
const THRESHOLD_REL_SLACK: f64 = 1e-12;

/// One maximal run of strictly decreasing closes.
///
/// `start_date` is the peak (the last close before the decline) and
/// `end_date` the trough. `duration_days` counts declining days, so a run
/// spans `duration_days + 1` observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    #[serde(rename = "peak")]
    pub peak_price: f64,
    #[serde(rename = "trough")]
    pub trough_price: f64,
    #[serde(rename = "duration")]
    pub duration_days: usize,
    pub magnitude: f64,
    pub pct_fall: f64,
    /// Index of the peak in the source series.
    #[serde(skip)]
    pub start_index: usize,
    /// Index of the trough in the source series.
    #[serde(skip)]
    pub end_index: usize,
}

impl Shock {
    fn from_run(series: &PriceSeries, start: usize, end: usize) -> Self {
        let closes = series.closes();
        let dates = series.dates();
        let peak = closes[start];
        let trough = closes[end];
        Shock {
            start_date: dates[start],
            end_date: dates[end],
            peak_price: peak,
            trough_price: trough,
            duration_days: end - start,
            magnitude: (peak / trough).log10(),
            pct_fall: 1.0 - trough / peak,
            start_index: start,
            end_index: end,
        }
    }

    /// `|pct_fall - (1 - 10^-M)|`; zero up to rounding for any detected shock.
    pub fn identity_gap(&self) -> f64 {
        (self.pct_fall - (1.0 - 10f64.powf(-self.magnitude))).abs()
    }
}

/// Splits the series into its maximal strictly-decreasing runs, in date order.
/// An unchanged close ends a run.
pub fn detect_shocks(series: &PriceSeries) -> Result<Vec<Shock>> {
    series.require_len(2)?;
    let closes = series.closes();
    let mut shocks = Vec::new();
    let mut i = 1;
    while i < closes.len() {
        if closes[i] < closes[i - 1] {
            let start = i - 1;
            while i < closes.len() && closes[i] < closes[i - 1] {
                i += 1;
            }
            shocks.push(Shock::from_run(series, start, i - 1));
        } else {
            i += 1;
        }
    }
    Ok(shocks)
}

/// The largest-magnitude shock whose peak lies in `search_window` (or anywhere
/// when no window is given). Ties go to the earliest shock.
pub fn identify_mainshock(shocks: &[Shock], search_window: Option<DateRange>) -> Result<Shock> {
    shocks
        .iter()
        .filter(|s| search_window.map_or(true, |w| w.contains(s.start_date)))
        .fold(None::<&Shock>, |best, s| match best {
            Some(b) if b.magnitude >= s.magnitude => Some(b),
            _ => Some(s),
        })
        .cloned()
        .ok_or(Error::NoShocks)
}

/// Shocks starting after the mainshock's trough and no later than
/// `window_end` whose magnitude is at least `threshold_ratio` times the
/// mainshock's (inclusive), in date order.
pub fn filter_aftershocks(
    shocks: &[Shock],
    mainshock: &Shock,
    window_end: NaiveDate,
    threshold_ratio: f64,
) -> Result<Vec<Shock>> {
    if !(threshold_ratio > 0.0 && threshold_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold ratio {threshold_ratio} outside (0, 1)"
        )));
    }
    if window_end <= mainshock.end_date {
        return Err(Error::InvalidArgument(format!(
            "window end {window_end} is not after the mainshock trough {}",
            mainshock.end_date
        )));
    }
    let cutoff = threshold_ratio * mainshock.magnitude * (1.0 - THRESHOLD_REL_SLACK);
    Ok(shocks
        .iter()
        .filter(|s| s.start_date > mainshock.end_date && s.start_date <= window_end)
        .filter(|s| s.magnitude >= cutoff)
        .cloned()
        .collect())
}

/// A mainshock, its influence window and the aftershocks inside it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrisisWindow {
    pub mainshock: Shock,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub aftershocks: Vec<Shock>,
}

impl CrisisWindow {
    pub fn new(
        mainshock: Shock,
        window_start: NaiveDate,
        window_end: NaiveDate,
        aftershocks: Vec<Shock>,
    ) -> Result<Self> {
        if window_start > window_end {
            return Err(Error::InvalidArgument(format!(
                "window start {window_start} after end {window_end}"
            )));
        }
        if let Some(big) = aftershocks
            .iter()
            .find(|a| a.magnitude > mainshock.magnitude)
        {
            return Err(Error::MainshockExceeded {
                mainshock: mainshock.magnitude,
                found: big.magnitude,
            });
        }
        for a in &aftershocks {
            if a.start_date <= mainshock.end_date || a.start_date > window_end {
                return Err(Error::InvalidArgument(format!(
                    "aftershock starting {} outside ({}, {}]",
                    a.start_date, mainshock.end_date, window_end
                )));
            }
        }
        if aftershocks
            .windows(2)
            .any(|w| w[1].start_date < w[0].end_date)
        {
            return Err(Error::InvalidArgument(
                "aftershocks unsorted or overlapping".into(),
            ));
        }
        Ok(Self {
            mainshock,
            window_start,
            window_end,
            aftershocks,
        })
    }
}

/// CSV with header `start_date,end_date,peak,trough,duration,magnitude,pct_fall`.
pub fn write_shocks_csv<W: Write>(out: W, shocks: &[Shock]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record([
        "start_date",
        "end_date",
        "peak",
        "trough",
        "duration",
        "magnitude",
        "pct_fall",
    ])?;
    for s in shocks {
        writer.serialize(s)?;
    }
    writer.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn shocks_to_json(shocks: &[Shock]) -> Result<String> {
    Ok(serde_json::to_string_pretty(shocks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..closes.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        PriceSeries::new("T", dates, closes.to_vec()).unwrap()
    }

    fn shock_with(magnitude: f64, day: u64) -> Shock {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(day);
        Shock {
            start_date: d,
            end_date: d + chrono::Days::new(1),
            peak_price: 10f64.powf(magnitude),
            trough_price: 1.0,
            duration_days: 1,
            magnitude,
            pct_fall: 1.0 - 10f64.powf(-magnitude),
            start_index: day as usize,
            end_index: day as usize + 1,
        }
    }

    #[test]
    fn monotone_rise_has_no_shocks() {
        assert!(detect_shocks(&series(&[1.0, 2.0, 3.0, 4.0]))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn two_runs() {
        let shocks = detect_shocks(&series(&[100.0, 90.0, 80.0, 85.0, 80.0])).unwrap();
        assert_eq!(shocks.len(), 2);
        assert_eq!((shocks[0].start_index, shocks[0].end_index), (0, 2));
        assert_eq!(shocks[0].duration_days, 2);
        assert!((shocks[0].magnitude - 1.25f64.log10()).abs() < 1e-15);
        assert!((shocks[0].magnitude - 0.096_91).abs() < 1e-5);
        assert_eq!(shocks[1].duration_days, 1);
        assert!((shocks[1].magnitude - 0.026_33).abs() < 1e-5);
    }

    #[test]
    fn equal_close_ends_a_run() {
        let shocks = detect_shocks(&series(&[5.0, 4.0, 4.0, 3.0])).unwrap();
        assert_eq!(shocks.len(), 2);
        assert_eq!(shocks[1].start_index, 2);
    }

    #[test]
    fn too_short_series() {
        assert!(detect_shocks(&series(&[1.0])).is_err());
    }

    #[test]
    fn mainshock_selection() {
        let single = vec![shock_with(0.05, 0)];
        assert_eq!(identify_mainshock(&single, None).unwrap(), single[0]);
        let shocks = vec![
            shock_with(0.02, 0),
            shock_with(0.11, 5),
            shock_with(0.05, 9),
        ];
        assert_eq!(identify_mainshock(&shocks, None).unwrap().magnitude, 0.11);
        let tie = vec![shock_with(0.1, 0), shock_with(0.1, 5)];
        assert_eq!(identify_mainshock(&tie, None).unwrap().start_index, 0);
        let far = DateRange::new(
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2021, 2, 1).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            identify_mainshock(&shocks, Some(far)),
            Err(Error::NoShocks)
        ));
        let near = DateRange::new(
            NaiveDate::from_ymd_opt(2020, 1, 8).unwrap(),
            NaiveDate::from_ymd_opt(2020, 1, 30).unwrap(),
        )
        .unwrap();
        assert_eq!(
            identify_mainshock(&shocks, Some(near)).unwrap().magnitude,
            0.05
        );
    }

    #[test]
    fn threshold_is_inclusive() {
        let main = shock_with(0.10, 0);
        let cands = vec![
            shock_with(0.006, 3),
            shock_with(0.007, 5),
            shock_with(0.05, 8),
        ];
        let end = NaiveDate::from_ymd_opt(2020, 12, 31).unwrap();
        let kept = filter_aftershocks(&cands, &main, end, 0.07).unwrap();
        let mags: Vec<f64> = kept.iter().map(|s| s.magnitude).collect();
        assert_eq!(mags, vec![0.007, 0.05]);
    }

    #[test]
    fn empty_window_and_bad_arguments() {
        let main = shock_with(0.10, 0);
        let cands = vec![shock_with(0.05, 10)];
        let end = NaiveDate::from_ymd_opt(2020, 1, 5).unwrap();
        assert!(filter_aftershocks(&cands, &main, end, 0.07)
            .unwrap()
            .is_empty());
        assert!(filter_aftershocks(&cands, &main, end, 0.0).is_err());
        assert!(filter_aftershocks(&cands, &main, end, 1.0).is_err());
        assert!(filter_aftershocks(&cands, &main, main.end_date, 0.07).is_err());
    }

    #[test]
    fn crisis_window_rejects_bigger_aftershock() {
        let main = shock_with(0.05, 0);
        let end = NaiveDate::from_ymd_opt(2020, 12, 31).unwrap();
        let err = CrisisWindow::new(main.clone(), main.start_date, end, vec![shock_with(0.2, 4)]);
        assert!(matches!(err, Err(Error::MainshockExceeded { .. })));
        assert!(CrisisWindow::new(
            main.clone(),
            main.start_date,
            end,
            vec![shock_with(0.01, 4)]
        )
        .is_ok());
    }

    #[test]
    fn csv_and_json_share_fields() {
        let shocks = detect_shocks(&series(&[100.0, 90.0, 95.0])).unwrap();
        let mut buf = Vec::new();
        write_shocks_csv(&mut buf, &shocks).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "start_date,end_date,peak,trough,duration,magnitude,pct_fall"
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("2020-01-01,2020-01-02,100.0,90.0,1,"));
        let json = shocks_to_json(&shocks).unwrap();
        let pos: Vec<usize> = [
            "start_date",
            "end_date",
            "peak",
            "trough",
            "duration",
            "magnitude",
            "pct_fall",
        ]
        .iter()
        .map(|k| json.find(&format!("\"{k}\"")).unwrap())
        .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
        let back: Vec<Shock> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0].magnitude, shocks[0].magnitude);
    }

    fn price_path() -> impl Strategy<Value = Vec<f64>> {
        // Integer ticks make equal consecutive closes common enough to exercise ties.
        prop::collection::vec(1u32..40, 2..120).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn every_down_day_is_in_exactly_one_shock(closes in price_path()) {
            let s = series(&closes);
            let shocks = detect_shocks(&s).unwrap();
            for t in 1..closes.len() {
                let covering = shocks
                    .iter()
                    .filter(|k| k.start_index < t && t <= k.end_index)
                    .count();
                prop_assert_eq!(covering, usize::from(closes[t] < closes[t - 1]));
            }
            for w in shocks.windows(2) {
                prop_assert!(w[0].end_index <= w[1].start_index);
            }
        }

        #[test]
        fn magnitude_is_negated_return_sum(closes in price_path()) {
            let s = series(&closes);
            let r = s.log_returns().unwrap();
            for k in detect_shocks(&s).unwrap() {
                let sum: f64 = r.values[k.start_index..k.end_index].iter().sum();
                prop_assert!((k.magnitude + sum).abs() <= 1e-12 * k.magnitude.max(1e-300) + 1e-15);
                prop_assert!(k.identity_gap() <= 1e-9);
                prop_assert!(k.trough_price < k.peak_price && k.duration_days >= 1);
            }
        }

        #[test]
        fn scale_invariance(closes in price_path(), c in 0.001f64..1000.0) {
            let a = detect_shocks(&series(&closes)).unwrap();
            let scaled: Vec<f64> = closes.iter().map(|x| x * c).collect();
            let b = detect_shocks(&series(&scaled)).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!((x.start_date, x.end_date, x.duration_days), (y.start_date, y.end_date, y.duration_days));
                prop_assert!((x.magnitude - y.magnitude).abs() <= 1e-12);
                prop_assert!((x.pct_fall - y.pct_fall).abs() <= 1e-12);
            }
        }

        #[test]
        fn raising_threshold_never_adds(closes in price_path(), lo in 0.01f64..0.5, bump in 0.0f64..0.49) {
            let s = series(&closes);
            let shocks = detect_shocks(&s).unwrap();
            prop_assume!(!shocks.is_empty());
            let main = identify_mainshock(&shocks, None).unwrap();
            let end = s.last_date().unwrap();
            prop_assume!(end > main.end_date);
            let a = filter_aftershocks(&shocks, &main, end, lo).unwrap();
            let b = filter_aftershocks(&shocks, &main, end, lo + bump).unwrap();
            prop_assert!(b.len() <= a.len());
            prop_assert!(b.iter().all(|x| a.contains(x)));
        }
    }
}
