use aftershock_core::{
    analyze, brute_force_partition, cumulative_counts, detect_shocks, fit_gr, generate,
    identify_mainshock, influence_window, optimal_partition, sample_gr_magnitudes, temporal_rate,
    AnalysisConfig, NaiveDate, PlantedBreak, PlantedShock, Shock, SynthSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shocks_spec(volatility: f64, seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::flat(600, 100.0);
    spec.volatility = volatility;
    spec.seed = seed;
    spec.planted_shocks = vec![
        PlantedShock {
            start: 50,
            magnitude: 0.1135,
            duration: 5,
        },
        PlantedShock {
            start: 200,
            magnitude: 0.04,
            duration: 3,
        },
        PlantedShock {
            start: 201 + 3 + 10,
            magnitude: 0.02,
            duration: 1,
        },
        PlantedShock {
            start: 400,
            magnitude: 0.07,
            duration: 11,
        },
    ];
    spec
}

fn recovered(spec: &SynthSpec) -> usize {
    let series = generate(spec).unwrap();
    let shocks = detect_shocks(&series).unwrap();
    spec.planted_shocks
        .iter()
        .filter(|p| {
            shocks.iter().any(|s| {
                s.start_index == p.start
                    && s.duration_days == p.duration
                    && (s.magnitude - p.magnitude).abs() <= 1e-9
            })
        })
        .count()
}

#[test]
fn noiseless_planted_shocks_are_recovered_exactly() {
    let spec = shocks_spec(0.0, 0);
    assert_eq!(recovered(&spec), spec.planted_shocks.len());
    let series = generate(&spec).unwrap();
    assert_eq!(
        detect_shocks(&series).unwrap().len(),
        spec.planted_shocks.len()
    );
}

#[test]
fn noisy_planted_shocks_hit_rate() {
    let vol = 0.002;
    let mut hits = 0;
    let mut total = 0;
    for seed in 0..100 {
        let spec = shocks_spec(vol, seed);
        assert!(spec.planted_shocks.iter().all(|p| p.magnitude >= 5.0 * vol));
        hits += recovered(&spec);
        total += spec.planted_shocks.len();
    }
    assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
}

#[test]
fn planted_trough_matches_closed_form() {
    let mut spec = SynthSpec::flat(20, 100.0);
    spec.planted_shocks.push(PlantedShock {
        start: 3,
        magnitude: 0.1135,
        duration: 5,
    });
    let s = generate(&spec).unwrap();
    let trough = s.closes()[8];
    assert!((trough - 100.0 * 10f64.powf(-0.1135)).abs() < 1e-9);
    assert!((trough - 77.0).abs() < 0.05);
}

#[test]
fn gr_sampler_recovers_beta_at_n_2000() {
    let mut betas = Vec::new();
    for seed in [1, 2] {
        let mags = sample_gr_magnitudes(13.0, 2000, 0.01, seed).unwrap();
        assert!(mags.iter().all(|&m| m >= 0.01));
        let fit = fit_gr(&cumulative_counts(&mags).unwrap()).unwrap();
        assert!(
            (fit.beta - 13.0).abs() <= 0.5,
            "seed {seed}: beta {}",
            fit.beta
        );
        betas.push(fit.beta);
    }
    let a = sample_gr_magnitudes(13.0, 2000, 0.01, 1).unwrap();
    let b = sample_gr_magnitudes(13.0, 2000, 0.01, 2).unwrap();
    assert_ne!(a, b);
    assert!((betas[0] - betas[1]).abs() <= 1.0);
}

fn shock_on(day: NaiveDate) -> Shock {
    Shock {
        start_date: day,
        end_date: day,
        peak_price: 1.01,
        trough_price: 1.0,
        duration_days: 1,
        magnitude: 1.01f64.log10(),
        pct_fall: 1.0 - 1.0 / 1.01,
        start_index: 0,
        end_index: 0,
    }
}

fn calendar(n: usize) -> Vec<NaiveDate> {
    generate(&SynthSpec::flat(n, 1.0)).unwrap().dates().to_vec()
}

#[test]
fn uniform_aftershocks_show_no_decay_trend() {
    let days = calendar(400);
    let mut significant = 0;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shocks: Vec<Shock> = (0..60)
            .map(|_| shock_on(days[rng.random_range(0..days.len())]))
            .collect();
        let rate = temporal_rate(&shocks, &days, 20).unwrap();
        assert_eq!(rate.total(), 60);
        if rate.trend().is_some_and(|t| t.z < -1.96) {
            significant += 1;
        }
    }
    // One-sided 2.5% level; allow sampling noise over 200 trials.
    assert!(significant <= 12, "{significant} of 200 flagged");
}

#[test]
fn decaying_aftershocks_show_negative_trend() {
    let days = calendar(400);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // Omori-like: density proportional to 1 / (t + 10).
    let shocks: Vec<Shock> = (0..150)
        .map(|_| {
            let u: f64 = rng.random();
            let t = 10.0 * ((410.0f64 / 10.0).powf(u) - 1.0);
            shock_on(days[(t as usize).min(days.len() - 1)])
        })
        .collect();
    let trend = temporal_rate(&shocks, &days, 20).unwrap().trend().unwrap();
    assert!(trend.tau < 0.0 && trend.z < -1.96, "{trend:?}");
}

#[test]
fn planted_level_breaks_bound_the_window() {
    let mut spec = SynthSpec::flat(500, 100.0);
    spec.volatility = 0.001;
    spec.seed = 4;
    // The crash itself is the first level shift; the second is a rebound.
    spec.planted_shocks = vec![PlantedShock {
        start: 140,
        magnitude: 0.15,
        duration: 4,
    }];
    spec.planted_breaks = vec![PlantedBreak {
        index: 350,
        level: 130.0,
    }];
    let series = generate(&spec).unwrap();
    let shocks = detect_shocks(&series).unwrap();
    let main = identify_mainshock(&shocks, None).unwrap();
    assert_eq!(main.start_index, 140);
    let w = influence_window(&series, &main, 2, 0.10, false).unwrap();
    let idx = &w.breaks.break_indices;
    assert!((140..=144).contains(&idx[0]), "{idx:?}");
    assert!(idx[1].abs_diff(349) <= 3, "{idx:?}");
    assert_eq!(w.window_start, series.dates()[idx[0]]);
    assert_eq!(w.window_end, series.dates()[idx[1]]);
    assert!(!w.open_ended);
}

#[test]
fn report_is_deterministic_on_synthetic_crash() {
    let mut spec = shocks_spec(0.004, 17);
    spec.drift = 0.0002;
    let series = generate(&spec).unwrap();
    let config = AnalysisConfig::default();
    let a = analyze(&series, &config, None)
        .unwrap()
        .report()
        .to_json()
        .unwrap();
    let b = analyze(&series, &config, None)
        .unwrap()
        .report()
        .to_json()
        .unwrap();
    assert_eq!(a, b);
}

fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 12..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dp_matches_brute_force(y in series_strategy(), m in 0usize..4, h in 1usize..5) {
        prop_assume!((m + 1) * h <= y.len());
        let dp = optimal_partition(&y, m, h).unwrap();
        let bf = brute_force_partition(&y, m, h).unwrap();
        prop_assert_eq!(dp.total_ssr, bf.total_ssr);
        prop_assert_eq!(dp.break_indices, bf.break_indices);
        prop_assert_eq!(dp.per_m_ssr, bf.per_m_ssr);
    }

    #[test]
    fn breaks_are_affine_equivariant(
        y in series_strategy(),
        a in prop_oneof![-8.0f64..-0.125, 0.125f64..8.0],
        b in -1e3f64..1e3,
        m in 1usize..4,
    ) {
        let h = 2;
        prop_assume!((m + 1) * h <= y.len());
        let base = optimal_partition(&y, m, h).unwrap();
        let z: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let moved = optimal_partition(&z, m, h).unwrap();
        prop_assert_eq!(&moved.break_indices, &base.break_indices);
        let scale = a * a;
        prop_assert!((moved.total_ssr - scale * base.total_ssr).abs() <= 1e-7 * (1.0 + scale * base.total_ssr));
    }

    #[test]
    fn reversal_mirrors_breaks(y in series_strategy(), m in 1usize..4, h in 2usize..5) {
        prop_assume!((m + 1) * h <= y.len());
        let n = y.len();
        let fwd = optimal_partition(&y, m, h).unwrap();
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        let back = optimal_partition(&rev, m, h).unwrap();
        let mut mirrored: Vec<usize> = fwd.break_indices.iter().map(|k| n - 2 - k).collect();
        mirrored.reverse();
        prop_assert_eq!(back.break_indices, mirrored);
        prop_assert!((back.total_ssr - fwd.total_ssr).abs() <= 1e-9 * (1.0 + fwd.total_ssr));
    }
}
