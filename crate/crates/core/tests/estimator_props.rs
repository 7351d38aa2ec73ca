use adasplit_core::channel::{
    generate_trace, synthesize_iq_grid, synthesize_kpms, true_throughput, Load, RadioParams,
    Scenario, TraceConfig, ZoneModel, TOTAL_PRBS,
};
use adasplit_core::estimator::{
    evaluate_estimator, extract_iq_features, BaselineEstimator, EstimatorConfig, EstimatorMode,
    FeatureVector, IqFeatures, ThroughputEstimator,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One feature vector observed under a constant interference level.
fn steady_features(noise_dbm: f64, load: Load, seed: u64) -> FeatureVector {
    let model = ZoneModel::default();
    let radio = RadioParams::default();
    let cfg = EstimatorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; 4];
    let window = (0..cfg.window_len)
        .map(|i| {
            let k = synthesize_kpms(
                i as f64 * 0.1,
                noise_dbm,
                &model,
                &radio,
                load,
                counts,
                &mut rng,
            );
            counts = k.harq_counts;
            k
        })
        .collect();
    let prbs = radio.allocated_prbs(load, 0.5);
    let grid = synthesize_iq_grid(noise_dbm, &radio, prbs, &mut rng);
    FeatureVector {
        kpm_window: window,
        iq_features: Some(extract_iq_features(&grid, &cfg)),
        alloc_ratio: prbs as f64 / TOTAL_PRBS as f64,
    }
}

fn estimator(mode: EstimatorMode) -> BaselineEstimator {
    BaselineEstimator::new(
        EstimatorConfig::default().with_mode(mode),
        ZoneModel::default(),
    )
    .unwrap()
}

#[test]
fn clean_channel_is_estimated_within_ten_percent() {
    for load in [Load::High, Load::Low] {
        let truth = true_throughput(f64::NEG_INFINITY, &ZoneModel::default(), load, 0.5);
        for mode in [EstimatorMode::KpmOnly, EstimatorMode::KpmPlusIq] {
            let est = estimator(mode)
                .estimate(&steady_features(-90.0, load, 5))
                .unwrap();
            assert!(
                (est - truth).abs() <= 0.1 * truth,
                "{mode} {load:?}: {est} vs {truth}"
            );
        }
    }
}

#[test]
fn kpm_only_is_blind_to_low_load_power_control() {
    let model = ZoneModel::default();
    for (i, noise) in [-45.0, -42.0, -39.0, -36.0, -34.0].into_iter().enumerate() {
        let truth = true_throughput(noise, &model, Load::Low, 0.5);
        let f = steady_features(noise, Load::Low, 40 + i as u64);
        let kpm = estimator(EstimatorMode::KpmOnly).estimate(&f).unwrap();
        let iq = estimator(EstimatorMode::KpmPlusIq).estimate(&f).unwrap();
        if noise >= -36.0 {
            assert!(
                kpm >= 2.0 * truth,
                "{noise} dBm: kpm_only {kpm} vs truth {truth}"
            );
        }
        assert!(
            (iq - truth).abs() <= 0.25 * truth,
            "{noise} dBm: kpm_plus_iq {iq} vs truth {truth}"
        );
    }
}

#[test]
fn iq_branch_falls_with_occupancy() {
    let est = estimator(EstimatorMode::KpmPlusIq);
    let mut prev = f64::INFINITY;
    for k in 0..=10 {
        let v = est.iq_branch(&IqFeatures {
            occupied_fraction: k as f64 / 10.0,
            interference_floor_dbm: -35.0,
            allocated_prbs: 10,
        });
        assert!(v <= prev + 1e-12);
        prev = v;
    }
}

#[test]
fn estimates_stay_in_range() {
    let peak = ZoneModel::default().tp_peak_mbps;
    for noise in [-100.0, -50.0, -30.0, -20.0, -10.0, 0.0] {
        for load in [Load::High, Load::Low] {
            let f = steady_features(noise, load, 9);
            for mode in [EstimatorMode::KpmOnly, EstimatorMode::KpmPlusIq] {
                let v = estimator(mode).estimate(&f).unwrap();
                assert!((0.0..=peak).contains(&v), "{noise} {load:?} {mode}: {v}");
            }
        }
    }
}

#[test]
fn iq_improves_fit_on_held_out_traces() {
    let traces: Vec<_> = Scenario::ALL
        .iter()
        .flat_map(|&s| {
            [Load::High, Load::Low]
                .into_iter()
                .map(move |l| generate_trace(&TraceConfig::new(s, 20.0, 201).with_load(l)).unwrap())
        })
        .collect();
    let cfg = EstimatorConfig::default();
    let with_iq = evaluate_estimator(&estimator(EstimatorMode::KpmPlusIq), &traces, &cfg).unwrap();
    let kpm_only = evaluate_estimator(
        &estimator(EstimatorMode::KpmOnly),
        &traces,
        &cfg.clone().with_mode(EstimatorMode::KpmOnly),
    )
    .unwrap();
    assert!(with_iq.r2 >= 0.9, "{with_iq:?}");
    assert!(with_iq.r2 > kpm_only.r2);
}
