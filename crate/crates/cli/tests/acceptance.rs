//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (uncaptured) before asserting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use hpmpc::analysis::{relative_savings_mc, seasonal_energy, seasonal_savings_mc, NormalDist, SeasonalInputs};
use hpmpc::ident::{default_r_m_grid, identify, invert_exogenous, load_training_csv, IdentifyOptions};
use hpmpc::lp::{solve_lp, LpProblem, LpStatus};
use hpmpc::model::{discretize, effective_boundary_temperature, step, EffectiveModel, StateInput, ThermalParams};
use hpmpc::mpc::{ppd, solve_ocp, tune_discomfort_price, ComfortContext, OcpSpec, PlanStatus, TuningConfig};
use hpmpc::plant::{electric_power_convex, electric_power_piecewise};
use hpmpc::rng;
use hpmpc::series::parse_timestamp;
use hpmpc::sim::ExogenousProfile;
use hpmpc::synth::{synthesize_training, synthesize_weather, TrainingProfile, WeatherProfile};
use hpmpc_cli::commands;
use hpmpc_cli::config::RunConfig;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!("acceptance {n} {}: {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn field_slopes() -> (NormalDist, NormalDist) {
    (NormalDist { mean: 3.83, std: 0.117 }, NormalDist { mean: 4.71, std: 0.076 })
}

#[test]
fn c1_relative_savings_monte_carlo() {
    let (m, b) = field_slopes();
    let started = Instant::now();
    let r = relative_savings_mc(m, b, 10_000_000, rng::derive_seed(0, "savings")).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let ok = (r.mean - 18.7).abs() <= 0.1
        && (r.ci_low - 13.1).abs() <= 0.3
        && (r.ci_high - 24.1).abs() <= 0.3
        && r.samples == 10_000_000
        && secs < 30.0;
    let detail = format!("mean {:.3}% CI [{:.3}, {:.3}]% in {secs:.1} s", r.mean, r.ci_low, r.ci_high);
    verdict(1, "relative savings", ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn c2_seasonal_monte_carlo() {
    let temps = commands::read_seasonal_temps(&fixtures().join("seasonal_temps.csv")).unwrap();
    assert_eq!(temps.len(), 151);
    let (m, b) = field_slopes();

    // Point masses: every draw equals the closed-form sum.
    let mut base = 0.0;
    let mut mpc = 0.0;
    for t in &temps {
        base += 4.71 * (20.7 - t - 8.0).max(0.0);
        mpc += 3.83 * (20.7 - 1.2 - t - 8.0).max(0.0);
    }
    let points = SeasonalInputs {
        daily_t_out: temps.clone(),
        t_ref: 20.7,
        gamma: NormalDist::point(1.2),
        m: NormalDist::point(3.83),
        m_base: NormalDist::point(4.71),
        pi_e: 0.15,
        offset: 8.0,
    };
    let exact = seasonal_savings_mc(&points, 1000, 1).unwrap();
    let closed = 0.15 * (base - mpc);
    let exact_ok = exact.savings.mean == closed
        && exact.savings.ci_low == closed
        && exact.savings.ci_high == closed
        && exact.relative.mean == 100.0 * (base - mpc) / base;
    let (b2, m2) = seasonal_energy(&temps, 20.7, 1.2, 3.83, 4.71, 8.0);
    let helper_ok = (b2 - base).abs() <= 1e-9 * base && (m2 - mpc).abs() <= 1e-9 * base;

    let inp = SeasonalInputs { gamma: NormalDist::from_interval(0.7, 1.7, 2.576), m, m_base: b, ..points };
    let r = seasonal_savings_mc(&inp, 100_000, rng::derive_seed(0, "seasonal")).unwrap();
    let band_ok = (20.0..=36.0).contains(&r.relative.mean);
    let ok = exact_ok && helper_ok && band_ok;
    let detail = format!(
        "point mass {:.4} vs closed form {closed:.4}; relative {:.2}% [{:.2}, {:.2}], savings ${:.0}",
        exact.savings.mean, r.relative.mean, r.relative.ci_low, r.relative.ci_high, r.savings.mean
    );
    verdict(2, "seasonal savings", ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn c3_power_model_forms_agree() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let eta = r.random_range(1.0..5.0);
        let p_bar = r.random_range(0.5..10.0);
        let q = r.random_range(0.0..(eta * p_bar + 25.0));
        worst = worst.max((electric_power_convex(q, eta, p_bar) - electric_power_piecewise(q, eta, p_bar)).abs());
    }
    let mut convexity_gap = f64::INFINITY;
    for _ in 0..100_000 {
        let eta = r.random_range(1.0..5.0);
        let p_bar = r.random_range(0.5..10.0);
        let hi = eta * p_bar + 25.0;
        let (q1, q2) = (r.random_range(0.0..hi), r.random_range(0.0..hi));
        let lam: f64 = r.random_range(0.0..=1.0);
        let f = |q| electric_power_convex(q, eta, p_bar);
        let gap = lam * f(q1) + (1.0 - lam) * f(q2) - f(lam * q1 + (1.0 - lam) * q2);
        convexity_gap = convexity_gap.min(gap);
    }
    let ok = worst <= 1e-9 && convexity_gap >= -1e-12;
    let detail = format!("max |convex - piecewise| {worst:.2e} kW; min chord gap {convexity_gap:.2e}");
    verdict(3, "power model", ok, &detail);
    assert!(ok, "{detail}");
}

/// RK4 on the two-resistance network with constant inputs.
fn ode(p: &ThermalParams, t0: f64, t_out: f64, q: f64, hours: f64, n: usize) -> f64 {
    let f = |t: f64| ((t_out - t) / p.r_out + (p.t_m - t) / p.r_m + q) / p.c;
    let h = hours / n as f64;
    let mut t = t0;
    for _ in 0..n {
        let k1 = f(t);
        let k2 = f(t + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h * k2);
        let k4 = f(t + h * k3);
        t += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t
}

#[test]
fn c4_exact_discretization() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = ThermalParams::new(
            r.random_range(0.5..5.0),
            r.random_range(0.1..5.0),
            r.random_range(1.0..20.0),
            r.random_range(10.0..25.0),
        )
        .unwrap();
        let dt = r.random_range(0.25..2.0);
        let t = r.random_range(10.0..25.0);
        let t_out = r.random_range(-25.0..15.0);
        let q_c = r.random_range(0.0..20.0);
        let q_e = r.random_range(0.0..3.0);
        let m = discretize(&p, dt).unwrap();
        let theta = effective_boundary_temperature(&p, t_out);
        let d = step(&m, &StateInput { t, theta, q_c, q_e });
        worst = worst.max((d - ode(&p, t, t_out, q_c + q_e, dt, 10_000)).abs());
    }
    let r_eff: f64 = 2.04 * 1.06 / (2.04 + 1.06);
    let a_exact = (-1.0 / (r_eff * 6.5)).exp();
    let a_model = discretize(&ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap(), 1.0).unwrap().a;
    let a_stated = (-1.0f64 / (0.6976 * 6.5)).exp();
    let ok = worst <= 1e-6
        && (a_model - a_exact).abs() <= 1e-15
        && (a_stated - 0.8026).abs() <= 1e-3
        && (a_model - 0.8).abs() <= 0.005;
    let detail = format!(
        "max |step - ODE| {worst:.2e} C; a = {a_model:.5} (exp(-1/(0.6976*6.5)) = {a_stated:.5}, quoted 0.8026)"
    );
    verdict(4, "exact discretization", ok, &detail);
    assert!(ok, "{detail}");
}

fn random_lp(r: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> LpProblem {
    let mut lp = LpProblem::new(n);
    for j in 0..n {
        lp.c[j] = r.random_range(-5.0..5.0);
        let lo = r.random_range(-3.0..1.0);
        let hi = lo + r.random_range(0.5..6.0);
        lp.set_bounds(j, lo, hi);
    }
    let x0: Vec<f64> = (0..n).map(|j| r.random_range(lp.lower[j]..lp.upper[j])).collect();
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| r.random_range(-4.0..4.0)).collect();
        let ax: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
        lp.a_ub.push(row);
        lp.b_ub.push(ax + r.random_range(0.0..2.0));
    }
    for _ in 0..p {
        let row: Vec<f64> = (0..n).map(|_| r.random_range(-4.0..4.0)).collect();
        let ax: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
        lp.a_eq.push(row);
        lp.b_eq.push(ax);
    }
    lp
}

/// Best objective over every basic solution: equalities plus `n - p` active
/// rows drawn from the inequalities and both bound sets.
fn vertex_enumeration(lp: &LpProblem) -> Option<f64> {
    let n = lp.n_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.a_ub.iter().cloned().zip(lp.b_ub.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.lower[j]));
        rows.push((e, lp.upper[j]));
    }
    let p = lp.a_eq.len();
    let k = n - p;
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| if i < p { lp.a_eq[i][j] } else { rows[idx[i - p]].0[j] });
        let b = DVector::from_fn(n, |i, _| if i < p { lp.b_eq[i] } else { rows[idx[i - p]].1 });
        let lu = a.lu();
        if lu.determinant().abs() > 1e-10 {
            if let Some(x) = lu.solve(&b) {
                let xs: Vec<f64> = x.iter().copied().collect();
                if lp.max_violation(&xs) <= 1e-9 {
                    let obj = lp.objective_at(&xs);
                    best = Some(best.map_or(obj, |v: f64| v.min(obj)));
                }
            }
        }
        // Next k-combination of the candidate rows.
        let mut i = k;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if idx[i] < rows.len() - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break true;
            }
        };
        if !advanced {
            return best;
        }
    }
}

fn random_ocp(r: &mut ChaCha8Rng, horizon: usize) -> OcpSpec {
    OcpSpec {
        model: EffectiveModel::from_parts(r.random_range(0.4..1.5), r.random_range(0.6..0.95), 1.0).unwrap(),
        t0: r.random_range(17.0..23.0),
        theta: (0..horizon).map(|_| r.random_range(-5.0..15.0)).collect(),
        q_e: (0..horizon).map(|_| r.random_range(0.0..2.0)).collect(),
        eta: (0..horizon).map(|_| r.random_range(1.5..3.5)).collect(),
        pi_e: (0..horizon).map(|_| r.random_range(0.05..0.4)).collect(),
        pi_d: r.random_range(0.0..2.0),
        pi_t: (0..horizon).map(|_| r.random_range(0.0..3.0)).collect(),
        t_ref: (0..horizon).map(|_| r.random_range(18.0..22.0)).collect(),
        delta: 60.0,
        p_bar: 4.5,
        p_r_bar: 19.2,
        emission: None,
        tau: None,
        rate_limit: None,
    }
}

/// Objective of a thermal power sequence under the piecewise power map.
fn ocp_cost(s: &OcpSpec, q: &[f64]) -> f64 {
    let (a, r) = (s.model.a, s.model.r);
    let mut t = s.t0;
    let mut peak = 0.0f64;
    let mut cost = 0.0;
    for l in 0..q.len() {
        t = a * t + (1.0 - a) * (s.theta[l] + r * (q[l] + s.q_e[l]));
        let p = electric_power_piecewise(q[l], s.eta[l], s.p_bar);
        peak = peak.max(p);
        cost += s.pi_e[l] * p + s.pi_t[l] * (t - s.t_ref[l]).abs();
    }
    cost + s.pi_d * peak
}

/// Grid minimum and the worst-case gap a grid of this spacing can leave.
fn ocp_grid(s: &OcpSpec, points: usize) -> (f64, f64) {
    let h = s.t_ref.len();
    let cap: Vec<f64> = (0..h).map(|l| s.eta[l] * s.p_bar + s.p_r_bar).collect();
    let mut idx = vec![0usize; h];
    let mut best = f64::INFINITY;
    'outer: loop {
        let q: Vec<f64> = (0..h).map(|l| cap[l] * idx[l] as f64 / (points - 1) as f64).collect();
        best = best.min(ocp_cost(s, &q));
        for l in 0..h {
            idx[l] += 1;
            if idx[l] < points {
                continue 'outer;
            }
            idx[l] = 0;
        }
        break;
    }
    let (a, r) = (s.model.a, s.model.r);
    let bound = (0..h)
        .map(|l| {
            let tail: f64 = (l..h).map(|j| s.pi_t[j] * a.powi((j - l) as i32) * (1.0 - a) * r).sum();
            0.5 * cap[l] / (points - 1) as f64 * (s.pi_d + s.pi_e[l] + tail)
        })
        .sum();
    (best, bound)
}

#[test]
fn c5_lp_correctness() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut lp_worst = 0.0f64;
    let mut lp_ok = true;
    for _ in 0..50 {
        let n = r.random_range(1..=7);
        let m = r.random_range(1..=7);
        let p = r.random_range(0..=2usize.min(n - 1));
        let lp = random_lp(&mut r, n, m, p);
        let oracle = vertex_enumeration(&lp).expect("instance has a feasible point");
        let sol = solve_lp(&lp).unwrap();
        let err = (sol.objective - oracle).abs() / (1.0 + oracle.abs());
        lp_worst = lp_worst.max(err);
        lp_ok &= sol.status == LpStatus::Optimal && err <= 1e-7 && lp.max_violation(&sol.x) <= 1e-7;
    }

    const POINTS: usize = 40;
    let grid_failures = (0..200u64)
        .into_par_iter()
        .filter(|&i| {
            let mut r = ChaCha8Rng::seed_from_u64(500 + i);
            let s = random_ocp(&mut r, 1 + i as usize % 4);
            let plan = solve_ocp(&s).unwrap();
            let lp = plan.breakdown.total();
            let (grid, bound) = ocp_grid(&s, POINTS);
            let consistent = (ocp_cost(&s, &plan.q_c) - lp).abs() < 1e-6;
            !(plan.status == PlanStatus::Optimal && consistent && lp <= grid + 1e-7 && grid - lp <= bound + 1e-9)
        })
        .count();

    let l = 1;
    let hold = OcpSpec {
        model: EffectiveModel::from_parts(0.6976, 0.8, 1.0).unwrap(),
        t0: 20.0,
        theta: vec![13.556; l],
        q_e: vec![0.5; l],
        eta: vec![2.5; l],
        pi_e: vec![0.15; l],
        pi_d: 0.8,
        pi_t: vec![1.0; l],
        t_ref: vec![20.0; l],
        delta: 0.0,
        p_bar: 4.5,
        p_r_bar: 19.2,
        emission: None,
        tau: None,
        rate_limit: None,
    };
    let plan = solve_ocp(&hold).unwrap();
    let closed_ok = (plan.q_c[0] - 8.738).abs() <= 1e-3 && (plan.p[0] - 3.495).abs() <= 1e-3;

    let ok = lp_ok && grid_failures == 0 && closed_ok;
    let detail = format!(
        "vertex oracle worst rel. error {lp_worst:.1e} over 50; grid mismatches {grid_failures}/200; \
         hold Q = {:.3} kW, P = {:.3} kW",
        plan.q_c[0], plan.p[0]
    );
    verdict(5, "LP correctness", ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn c6_identification_round_trip() {
    let grid = default_r_m_grid();
    let r_m = *grid.iter().min_by(|a, b| (*a - 1.06).abs().total_cmp(&(*b - 1.06).abs())).unwrap();
    let truth = ThermalParams::new(2.04, r_m, 6.5, 20.6).unwrap();
    let a_true = discretize(&truth, 1.0).unwrap().a;
    let w = synthesize_weather(&WeatherProfile::winter(parse_timestamp("2023-01-02T00:00:00", 1).unwrap(), 30, 3));
    let clean = TrainingProfile {
        params: truth,
        amplitude: (0.8, 1.5),
        exogenous: None,
        q_e_constant: 0.5,
        noise_t: 0.0,
        noise_q: 0.0,
        seed: 11,
    };
    let (s, _) = synthesize_training(&w, &clean).unwrap();
    let id = identify(&s, &IdentifyOptions::default()).unwrap();
    let rel = |x: f64, y: f64| (x / y - 1.0).abs();
    let recovery_ok =
        rel(id.params.r_out, 2.04) < 0.01 && rel(id.params.r_m, r_m) < 0.01 && rel(id.model.a, a_true) < 0.01;

    let prof = TrainingProfile { exogenous: Some(ExogenousProfile::default()), ..clean };
    let (s, q_e) = synthesize_training(&w, &prof).unwrap();
    let m = discretize(&truth, 1.0).unwrap();
    let back = invert_exogenous(&s, &truth, &m);
    let inversion = back.iter().zip(&q_e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let fixture = load_training_csv(&fixtures().join("training.csv")).unwrap();
    let noisy = identify(&fixture, &IdentifyOptions::default()).unwrap();
    let rmse = noisy.report.rmse_temperature_validation;

    let ok = recovery_ok && inversion <= 1e-9 && rmse <= 0.5;
    let detail = format!(
        "R_out {:.4} R_m {:.4} (true {r_m:.4}) a {:.5} (true {a_true:.5}); inversion {inversion:.1e} kW; \
         fixture RMSE {rmse:.3} C",
        id.params.r_out, id.params.r_m, id.model.a
    );
    verdict(6, "identification", ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn c7_cold_snap_closed_loop() {
    let cfg = RunConfig::load(&fixtures().join("coldsnap.toml")).unwrap();
    cfg.validate().unwrap();
    let out = tempfile::tempdir().unwrap();
    let started = Instant::now();
    commands::compare(&cfg, out.path()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    let traces = report["traces"].as_array().unwrap();
    let slope = |i: usize| traces[i]["slope"]["mean"].as_f64().expect("energy line fitted");
    let ratio = slope(0) / slope(1);
    let share = |i: usize| traces[i]["stages"]["top_stage_share"].as_f64().unwrap_or(0.0);
    let share_ratio = share(0) / share(1);
    let ppd = traces[0]["summary"]["mean_ppd"].as_f64().unwrap();
    let ok = ratio <= 0.9 && share_ratio <= 0.5 && ppd <= 11.0 && secs < 300.0;
    let detail = format!(
        "tau {:.3} h; slope ratio {ratio:.3} (<= 0.9); top-stage share {:.3} vs {:.3}, ratio {share_ratio:.3} \
         (<= 0.5); MPC PPD {ppd:.2}% (<= 11); {secs:.0} s",
        report["tau"].as_f64().unwrap_or(f64::NAN),
        share(0),
        share(1)
    );
    verdict(7, "cold-snap closed loop", ok, &detail);
    assert!(ok, "{detail}");
}

fn day_spec(theta: f64) -> OcpSpec {
    let l = 24;
    OcpSpec {
        model: EffectiveModel::from_parts(0.69755, 0.80209, 1.0).unwrap(),
        t0: 22.0,
        theta: (0..l).map(|k| theta + 2.0 * (std::f64::consts::TAU * (k as f64 - 9.0) / 24.0).sin()).collect(),
        q_e: vec![0.5; l],
        eta: vec![2.5; l],
        pi_e: vec![0.15; l],
        pi_d: 0.8,
        pi_t: vec![0.0; l],
        t_ref: vec![22.0; l],
        delta: 3.0,
        p_bar: 4.5,
        p_r_bar: 19.2,
        emission: None,
        tau: None,
        rate_limit: None,
    }
}

#[test]
fn c8_ppd_and_price_tuning() {
    let hours: Vec<f64> = (0..24).map(|l| ((l + 1) % 24) as f64).collect();
    let cfg = TuningConfig::default();
    let comfort = ComfortContext::default();
    let mild = tune_discomfort_price(&day_spec(14.0), &hours, &cfg, &comfort).unwrap();
    let cold = tune_discomfort_price(&day_spec(6.0), &hours, &cfg, &comfort).unwrap();
    let ok = ppd(0.0) == 5.0 && (ppd(0.5) - 10.22).abs() <= 0.01 && (ppd(-0.5) - 10.22).abs() <= 0.01 && cold >= mild;
    let detail = format!(
        "ppd(0) = {}, ppd(0.5) = {:.4}, ppd(-0.5) = {:.4}; tuned price cold {cold:.4} mild {mild:.4}",
        ppd(0.0),
        ppd(0.5),
        ppd(-0.5)
    );
    verdict(8, "PPD and price tuning", ok, &detail);
    assert!(ok, "{detail}");
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn c9_determinism() {
    let fx = fixtures();
    let work = tempfile::tempdir().unwrap();
    let config = work.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 5\n\
             [paths]\nweather = {:?}\ntraining = {:?}\nseasonal_temps = {:?}\n\
             [model]\nsource = \"identify\"\n\
             [reference]\nday = 22.7\nnight = 22.7\nday_start = 6.0\nnight_start = 23.0\n\
             [forecast_error]\nsigma_t_out = 1.0\nsigma_ghi = 20.0\nsigma_wind = 0.5\n\
             [scenario]\nstart = \"2023-01-09T00:00:00\"\nhours = 72\nidentify_tau = true\n\
             [baseline]\nkind = \"constant\"\nsetpoint = 22.7\n\
             [analysis]\nsavings_samples = 200000\nseasonal_samples = 20000\n",
            fx.join("weather_coldsnap.csv"),
            fx.join("training.csv"),
            fx.join("seasonal_temps.csv"),
        ),
    )
    .unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["identify"],
        vec!["plan", "--start", "2023-01-10T05:00:00"],
        vec!["tune", "--start", "2023-01-10T05:00:00"],
        vec!["simulate", "--policy", "mpc"],
        vec!["simulate", "--policy", "baseline"],
        vec!["compare"],
    ];
    let exe = env!("CARGO_BIN_EXE_hpmpc");
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let out = work.path().join(format!("run{i}_{rep}"));
            let status = Command::new(exe).arg("--config").arg(&config).arg("--out").arg(&out).args(args).output().unwrap();
            assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
            if args[0] == "compare" {
                let a = Command::new(exe)
                    .arg("--config")
                    .arg(&config)
                    .arg("--out")
                    .arg(out.join("analysis"))
                    .arg("analyze")
                    .arg(out.join("trace_mpc.csv"))
                    .arg("--baseline")
                    .arg(out.join("trace_baseline.csv"))
                    .output()
                    .unwrap();
                assert!(a.status.success(), "analyze: {}", String::from_utf8_lossy(&a.stderr));
                let analysis = read_tree(&out.join("analysis"));
                std::fs::remove_dir_all(out.join("analysis")).unwrap();
                let mut t = read_tree(&out);
                t.extend(analysis.into_iter().map(|(k, v)| (format!("analysis/{k}"), v)));
                trees.push(t);
            } else {
                trees.push(read_tree(&out));
            }
        }
        files += trees[0].len();
        if trees[0] != trees[1] {
            mismatches.push(format!("{args:?}"));
        }
    }
    let ok = mismatches.is_empty() && files >= 15;
    let detail = format!("{} commands, {files} files compared; differing: {mismatches:?}", runs.len() + 1);
    verdict(9, "determinism", ok, &detail);
    assert!(ok, "{detail}");
}
