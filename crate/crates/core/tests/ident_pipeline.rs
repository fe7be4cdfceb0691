use hpmpc::ident::{
    default_r_m_grid, detect_steady_windows, estimate_mass_temperature, fit_mass_params, fit_outdoor_resistance,
    identify, invert_exogenous, predict_disturbance, train_disturbance_model, validate_model, DisturbanceHyper,
    IdentifyOptions, RegressorKind, SteadyWindowCriteria,
};
use hpmpc::model::{discretize, effective_boundary_temperature, step, StateInput, ThermalParams};
use hpmpc::series::parse_timestamp;
use hpmpc::sim::ExogenousProfile;
use hpmpc::synth::{synthesize_training, synthesize_weather, TrainingProfile, WeatherProfile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn nearest_grid_point(x: f64) -> f64 {
    *default_r_m_grid().iter().min_by(|a, b| (*a - x).abs().total_cmp(&(*b - x).abs())).unwrap()
}

fn weather(days: usize, seed: u64) -> hpmpc::sim::WeatherSeries {
    let start = parse_timestamp("2023-01-02T00:00:00", 1).unwrap();
    synthesize_weather(&WeatherProfile::winter(start, days, seed))
}

fn clean_profile(params: ThermalParams) -> TrainingProfile {
    TrainingProfile {
        params,
        amplitude: (0.8, 1.5),
        exogenous: None,
        q_e_constant: 0.5,
        noise_t: 0.0,
        noise_q: 0.0,
        seed: 11,
    }
}

#[test]
fn noise_free_recovery_of_reference_house() {
    let r_m = nearest_grid_point(1.06);
    let truth = ThermalParams::new(2.04, r_m, 6.5, 20.6).unwrap();
    let m = discretize(&truth, 1.0).unwrap();
    let w = weather(30, 3);
    let (s, _) = synthesize_training(&w, &clean_profile(truth)).unwrap();

    let t_m = estimate_mass_temperature(&s).unwrap();
    assert!((t_m - 20.6).abs() < 1e-9);
    let steady = detect_steady_windows(&s, &SteadyWindowCriteria::default());
    assert!(steady.len() >= 30);
    let (alpha, r_out) = fit_outdoor_resistance(&s, &steady).unwrap();
    assert!((r_out - 2.04).abs() < 1e-9, "r_out {r_out}");
    assert!((alpha - 2.04 * 0.5).abs() < 1e-9, "alpha {alpha}");
    let fit = fit_mass_params(&s, r_out, t_m, &default_r_m_grid()).unwrap();
    assert_eq!(fit.r_m, r_m);
    assert!((fit.a - m.a).abs() < 1e-6, "a {} vs {}", fit.a, m.a);
    assert!((fit.c - 6.5).abs() < 1e-4);
}

#[test]
fn closed_form_capacitance_with_single_candidate() {
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
    let w = weather(20, 8);
    let (s, _) = synthesize_training(&w, &clean_profile(truth)).unwrap();
    let fit = fit_mass_params(&s, 2.04, 20.6, &[1.06]).unwrap();
    let r = 1.06 * 2.04 / 3.10;
    assert!((fit.c + 1.0 / (r * fit.a.ln())).abs() < 1e-12);
    assert!((fit.a - (-1.0 / (r * 6.5)).exp()).abs() < 1e-9);
}

#[test]
fn inversion_round_trip() {
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
    let m = discretize(&truth, 1.0).unwrap();
    let w = weather(10, 4);
    let prof = TrainingProfile { exogenous: Some(ExogenousProfile::default()), ..clean_profile(truth) };
    let (s, q_e) = synthesize_training(&w, &prof).unwrap();
    let back = invert_exogenous(&s, &truth, &m);
    for (a, b) in back.iter().zip(&q_e) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn heating_pulse_inverts_to_zero() {
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
    let m = discretize(&truth, 1.0).unwrap();
    let mut w = weather(2, 1);
    w.t_out = vec![20.6; w.len()];
    let mut s = hpmpc::ident::TrainingSeries {
        timestamps: w.timestamps.clone(),
        t_out: w.t_out.clone(),
        ghi: w.ghi.clone(),
        wind: w.wind.clone(),
        rh: w.rh.clone(),
        dt: 1.0,
        ..Default::default()
    };
    let mut t = 20.6;
    for k in 0..w.len() {
        let q_c = if k == 10 { 6.0 } else { 0.0 };
        s.t_in.push(t);
        s.q_c.push(q_c);
        let theta = effective_boundary_temperature(&truth, w.t_out[k]);
        t = step(&m, &StateInput { t, theta, q_c, q_e: 0.0 });
    }
    assert!(invert_exogenous(&s, &truth, &m).iter().all(|q| q.abs() < 1e-9));
}

#[test]
fn noisy_pipeline_validation_error() {
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
    let w = weather(30, 21);
    let prof = TrainingProfile {
        exogenous: Some(ExogenousProfile::default()),
        noise_t: 0.1,
        noise_q: 0.3,
        ..clean_profile(truth)
    };
    let (s, _) = synthesize_training(&w, &prof).unwrap();
    let id = identify(&s, &IdentifyOptions::default()).unwrap();
    assert!(id.report.rmse_temperature_validation <= 0.5, "{:?}", id.report);
    assert_eq!(id.report.train_range, (0, 480));
    assert_eq!(id.report.validation_range, (480, 720));
}

#[test]
fn exact_holdout_has_zero_error() {
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
    let m = discretize(&truth, 1.0).unwrap();
    let w = weather(12, 6);
    let (s, q_e) = synthesize_training(&w, &clean_profile(truth)).unwrap();
    let feats: Vec<Vec<f64>> = (0..s.len()).map(|k| s.features(k)).collect();
    let d = train_disturbance_model(&feats, &q_e, &DisturbanceHyper::default()).unwrap();
    let report = validate_model(&truth, &m, &d, &s).unwrap();
    assert!(report.rmse_temperature_validation < 1e-9);
    assert!(report.rmse_power_validation < 1e-9);
}

#[test]
fn temperature_noise_floor() {
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
    let m = discretize(&truth, 1.0).unwrap();
    let w = weather(60, 6);
    let (clean, q_e) = synthesize_training(&w, &clean_profile(truth)).unwrap();
    // Noise on the next-step target only, so the one-step error is exactly that noise.
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::new(0.0, 0.1).unwrap();
    let mut sse = 0.0;
    for k in 0..clean.len() - 1 {
        let theta = effective_boundary_temperature(&truth, clean.t_out[k]);
        let pred = step(&m, &StateInput { t: clean.t_in[k], theta, q_c: clean.q_c[k], q_e: q_e[k] });
        sse += (pred - (clean.t_in[k + 1] + n.sample(&mut r))).powi(2);
    }
    let rmse = (sse / (clean.len() - 1) as f64).sqrt();
    assert!((rmse - 0.1).abs() < 0.01, "{rmse}");
}

#[test]
fn linear_targets_fit_exactly() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..4).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|f| 0.3 + 2.0 * f[0] - f[2] + 0.5 * f[3]).collect();
    let hyper = DisturbanceHyper { lambdas: vec![1e-10], ..Default::default() };
    let d = train_disturbance_model(&x, &y, &hyper).unwrap();
    let p = predict_disturbance(&d, &x).unwrap();
    let rmse = (p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 60.0).sqrt();
    assert!(rmse < 1e-6, "{rmse}");
}

#[test]
fn solar_regression_hits_noise_floor() {
    let w = weather(40, 9);
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let n = Normal::new(0.0, 0.1).unwrap();
    let y: Vec<f64> = w.ghi.iter().map(|g| 0.5 + 0.02 * g / 100.0 + n.sample(&mut r)).collect();
    let feats: Vec<Vec<f64>> = (0..w.len()).map(|k| w.features(k)).collect();
    let split = w.len() * 2 / 3;
    for kind in [RegressorKind::Ridge, RegressorKind::Kernel { gamma: 0.05 }] {
        let hyper = DisturbanceHyper { kind, ..Default::default() };
        let d = train_disturbance_model(&feats[..split], &y[..split], &hyper).unwrap();
        let p = predict_disturbance(&d, &feats[split..]).unwrap();
        let rmse = (p.iter().zip(&y[split..]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / (w.len() - split) as f64)
            .sqrt();
        assert!(rmse <= 0.15, "{kind:?}: holdout RMSE {rmse}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recovery_across_parameterisations(
        r_out in 1.0f64..4.0,
        grid_idx in 100usize..150,
        c in 4.0f64..12.0,
        seed in 0u64..1000,
    ) {
        let r_m = default_r_m_grid()[grid_idx];
        let truth = ThermalParams::new(r_out, r_m, c, 20.6).unwrap();
        let m = discretize(&truth, 1.0).unwrap();
        let w = weather(24, seed);
        let prof = TrainingProfile { amplitude: (0.4, 0.8), q_e_constant: 0.2, ..clean_profile(truth) };
        let Ok((s, _)) = synthesize_training(&w, &prof) else { return Ok(()); };
        let t_m = estimate_mass_temperature(&s).unwrap();
        let steady = detect_steady_windows(&s, &SteadyWindowCriteria::default());
        let (_, r_out_hat) = fit_outdoor_resistance(&s, &steady).unwrap();
        prop_assert!((r_out_hat / r_out - 1.0).abs() < 0.01);
        let fit = fit_mass_params(&s, r_out_hat, t_m, &default_r_m_grid()).unwrap();
        prop_assert_eq!(fit.r_m, r_m);
        prop_assert!((fit.a / m.a - 1.0).abs() < 0.01);
    }

    #[test]
    fn predictions_invariant_to_affine_feature_rescaling(
        j in 0usize..3,
        scale in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
        shift in -100.0f64..100.0,
    ) {
        let w = weather(14, 2);
        let feats: Vec<Vec<f64>> = (0..w.len()).map(|k| w.features(k)).collect();
        let y: Vec<f64> = (0..w.len()).map(|k| 0.4 + 0.003 * w.ghi[k] - 0.05 * w.t_out[k] + 0.1 * w.wind[k]).collect();
        for kind in [RegressorKind::Ridge, RegressorKind::Kernel { gamma: 0.1 }] {
            let hyper = DisturbanceHyper { kind, ..Default::default() };
            let d = train_disturbance_model(&feats, &y, &hyper).unwrap();
            let moved: Vec<Vec<f64>> = feats.iter().map(|f| {
                let mut g = f.clone();
                g[j] = scale * g[j] + shift;
                g
            }).collect();
            let d2 = train_disturbance_model(&moved, &y, &hyper).unwrap();
            let a = predict_disturbance(&d, &feats).unwrap();
            let b = predict_disturbance(&d2, &moved).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-6, "{:?}: {} vs {}", kind, x, y);
            }
        }
    }
}
