use chrono::Timelike;
use hpmpc::model::ThermalParams;
use hpmpc::plant::cop;
use hpmpc::series::parse_timestamp;
use hpmpc::sim::{run_closed_loop, Policy, ReferenceSchedule, ScenarioConfig, WeatherSeries};
use hpmpc::synth::{synthesize_weather, WeatherProfile};

fn house() -> ThermalParams {
    ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap()
}

fn weather(days: usize, seed: u64) -> WeatherSeries {
    let start = parse_timestamp("2023-01-09T00:00:00", 1).unwrap();
    synthesize_weather(&WeatherProfile::winter(start, days, seed))
}

fn scenario(policy: Policy, hours: usize) -> ScenarioConfig {
    ScenarioConfig { hours, seed: 11, ..ScenarioConfig::new(house(), policy) }
}

#[test]
fn seeded_runs_are_identical() {
    let w = weather(3, 4);
    let cfg = scenario(Policy::Mpc, 24);
    let a = run_closed_loop(&cfg, &w).unwrap();
    let b = run_closed_loop(&cfg, &w).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
    assert_eq!(a.records.len(), 96);
}

#[test]
fn energy_accounting() {
    let w = weather(2, 2);
    let cfg = scenario(Policy::Constant { setpoint: 21.0 }, 24);
    let trace = run_closed_loop(&cfg, &w).unwrap();
    for (i, r) in trace.records.iter().enumerate() {
        let eta = cop(&cfg.plant, w.t_out[i / 4]);
        let q_hp = r.q_c - r.p_elem;
        let expected_hp = q_hp.abs() / eta;
        assert!((r.p_hp - expected_hp).abs() < 1e-9, "record {i}");
        assert!(r.p_hp <= cfg.plant.p_bar + 1e-9);
        assert_eq!(r.p_elem, cfg.plant.stage_power(r.stage));
        if !r.defrost {
            assert!(q_hp >= -1e-12);
        }
    }
    let energy: f64 = trace.records.iter().map(|r| r.p_total() * trace.dt).sum();
    let parts: f64 = trace.records.iter().map(|r| (r.p_hp + r.p_elem) * 0.25).sum();
    assert!((energy - parts).abs() < 1e-9 && energy > 0.0);
}

#[test]
fn perfect_model_stays_in_band() {
    let w = weather(3, 9);
    let mut cfg = scenario(Policy::Mpc, 48);
    cfg.defrost.events_per_day = 0.0;
    let trace = run_closed_loop(&cfg, &w).unwrap();
    let delta = cfg.mpc.delta;
    for r in &trace.records {
        assert!((r.setpoint - 20.7).abs() <= delta + 1e-6, "set-point {}", r.setpoint);
        assert!((r.t_in - 20.7).abs() <= delta + 0.2, "indoor {} at {}", r.t_in, r.timestamp);
    }
}

#[test]
fn schedule_step_fires_elements() {
    let w = weather(2, 3);
    let schedule = ReferenceSchedule { day: 21.0, night: 16.0, day_start: 6.0, night_start: 22.0 };
    let mut cfg = scenario(Policy::Schedule { schedule }, 24);
    cfg.t0 = 16.0;
    cfg.defrost.events_per_day = 0.0;
    let trace = run_closed_loop(&cfg, &w).unwrap();
    let night_elements = trace.records.iter().filter(|r| r.timestamp.hour() < 6 && r.stage > 0).count();
    let morning_elements =
        trace.records.iter().filter(|r| (6..9).contains(&r.timestamp.hour()) && r.stage > 0).count();
    assert_eq!(night_elements, 0);
    assert!(morning_elements > 0);
}

#[test]
fn mpc_dips_overnight() {
    let w = weather(3, 6);
    let mut cfg = scenario(Policy::Mpc, 48);
    cfg.reference = ReferenceSchedule::constant(22.0);
    cfg.t0 = 22.0;
    let trace = run_closed_loop(&cfg, &w).unwrap();
    let night = trace.records.iter().filter(|r| (1..5).contains(&r.timestamp.hour()));
    let min_night = night.map(|r| r.setpoint).fold(f64::INFINITY, f64::min);
    let day = trace.records.iter().filter(|r| (12..18).contains(&r.timestamp.hour()));
    let (sum, n) = day.fold((0.0, 0), |(s, n), r| (s + r.setpoint, n + 1));
    assert!(min_night < 21.0, "overnight minimum {min_night}");
    assert!(sum / n as f64 > min_night + 0.5);
}
