//! Deterministic synthetic data: weather, training observations generated by
//! the thermal model itself, and daily seasonal temperatures.

use chrono::{Duration, NaiveDateTime, Timelike};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::TrainingSeries;
use crate::model::{discretize, effective_boundary_temperature, ThermalParams};
use crate::rng;
use crate::sim::{truth_exogenous, ExogenousProfile, WeatherSeries};

const TAU: f64 = std::f64::consts::TAU;

/// Smooth temperature depression over `[start_day, start_day + days)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColdSnap {
    pub start_day: f64,
    pub days: f64,
    /// Peak depression, °C.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherProfile {
    pub start: NaiveDateTime,
    pub days: usize,
    pub t_mean: f64,
    /// Half the diurnal swing, °C; minimum at 03:00.
    pub t_daily_amp: f64,
    /// Amplitude of a slow 5-day oscillation, °C.
    pub t_synoptic_amp: f64,
    pub cold_snap: Option<ColdSnap>,
    pub t_noise: f64,
    /// Clear-sky noon irradiance, W/m².
    pub ghi_peak: f64,
    /// Daily irradiance is scaled by a uniform draw from `[1 - cloudiness, 1]`.
    pub cloudiness: f64,
    pub wind_mean: f64,
    pub rh_mean: f64,
    pub seed: u64,
}

impl WeatherProfile {
    pub fn winter(start: NaiveDateTime, days: usize, seed: u64) -> Self {
        Self {
            start,
            days,
            t_mean: -2.0,
            t_daily_amp: 4.0,
            t_synoptic_amp: 3.0,
            cold_snap: None,
            t_noise: 0.3,
            ghi_peak: 450.0,
            cloudiness: 0.7,
            wind_mean: 3.5,
            rh_mean: 78.0,
            seed,
        }
    }
}

pub fn synthesize_weather(p: &WeatherProfile) -> WeatherSeries {
    let mut r = rng::stream(rng::derive_seed(p.seed, "weather"));
    let noise = Normal::new(0.0, p.t_noise.max(0.0)).expect("finite deviation");
    let n = p.days * 24;
    let mut w = WeatherSeries { dt: 1.0, ..Default::default() };
    let mut cloud = 1.0;
    let mut t_err = 0.0;
    for k in 0..n {
        let t = p.start + Duration::hours(k as i64);
        let h = t.hour() as f64;
        let day = k as f64 / 24.0;
        if k % 24 == 0 {
            cloud = 1.0 - p.cloudiness * r.random::<f64>();
        }
        // Slowly varying error keeps hour-to-hour changes smooth.
        t_err = 0.8 * t_err + noise.sample(&mut r);
        let snap = p.cold_snap.map_or(0.0, |c| {
            let x = (day - c.start_day) / c.days;
            if (0.0..1.0).contains(&x) {
                -c.depth * (std::f64::consts::PI * x).sin().powi(2)
            } else {
                0.0
            }
        });
        let t_out = p.t_mean
            + p.t_daily_amp * (TAU * (h - 9.0) / 24.0).sin()
            + p.t_synoptic_amp * (TAU * day / 5.0).sin()
            + snap
            + t_err;
        let sun = if (7.0..=17.0).contains(&h) { (std::f64::consts::PI * (h - 7.0) / 10.0).sin() } else { 0.0 };
        let wind = (p.wind_mean + 1.5 * (TAU * day / 3.0).sin() + 0.5 * (r.random::<f64>() - 0.5)).max(0.0);
        let rh = (p.rh_mean + 8.0 * (TAU * (h - 15.0) / 24.0).cos() + 4.0 * (r.random::<f64>() - 0.5)).clamp(20.0, 100.0);
        w.timestamps.push(t);
        w.t_out.push(t_out);
        w.ghi.push((p.ghi_peak * cloud * sun).max(0.0));
        w.wind.push(wind);
        w.rh.push(rh);
    }
    w
}

/// Recipe for observations produced by the thermal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProfile {
    pub params: ThermalParams,
    /// Daytime excursion amplitude is drawn per day from this range, °C.
    pub amplitude: (f64, f64),
    /// Exogenous gains; `None` holds them at `q_e_constant`.
    pub exogenous: Option<ExogenousProfile>,
    pub q_e_constant: f64,
    /// Measurement noise on indoor temperature, °C.
    pub noise_t: f64,
    /// Measurement noise on thermal power, kW.
    pub noise_q: f64,
    pub seed: u64,
}

/// Indoor temperature sits at `t_m` overnight (23:00 to 06:00) and follows a
/// zero-mean sine excursion during the day, so the sample mean over whole
/// days equals `t_m`. Thermal power is whatever the model needs to produce
/// that trajectory.
pub fn synthesize_training(w: &WeatherSeries, p: &TrainingProfile) -> Result<(TrainingSeries, Vec<f64>)> {
    let m = discretize(&p.params, w.dt)?;
    let mut r = rng::stream(rng::derive_seed(p.seed, "training"));
    let days = w.len().div_ceil(24) + 1;
    let amps: Vec<f64> = (0..days).map(|_| p.amplitude.0 + (p.amplitude.1 - p.amplitude.0) * r.random::<f64>()).collect();
    let temp = |k: usize| -> f64 {
        let t = w.timestamps[0] + Duration::hours(k as i64);
        let h = t.hour() as f64;
        if (6.0..23.0).contains(&h) {
            p.params.t_m + amps[k / 24] * (TAU * (h - 6.0) / 17.0).sin()
        } else {
            p.params.t_m
        }
    };
    let q_e = match &p.exogenous {
        Some(profile) => truth_exogenous(w, profile),
        None => vec![p.q_e_constant; w.len()],
    };
    let noise_t = Normal::new(0.0, p.noise_t.max(0.0)).expect("finite deviation");
    let noise_q = Normal::new(0.0, p.noise_q.max(0.0)).expect("finite deviation");
    let mut s = TrainingSeries {
        timestamps: w.timestamps.clone(),
        ghi: w.ghi.clone(),
        wind: w.wind.clone(),
        rh: w.rh.clone(),
        t_out: w.t_out.clone(),
        dt: w.dt,
        ..Default::default()
    };
    for k in 0..w.len() {
        let (t, t_next) = (temp(k), temp(k + 1));
        let theta = effective_boundary_temperature(&p.params, w.t_out[k]);
        let q_c = ((t_next - m.a * t) / (1.0 - m.a) - theta) / m.r - q_e[k];
        if q_c < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "synthetic trajectory needs {q_c:.3} kW of heating at sample {k}; weather is too warm"
            )));
        }
        let (et, eq) = if p.noise_t > 0.0 || p.noise_q > 0.0 {
            (noise_t.sample(&mut r), noise_q.sample(&mut r))
        } else {
            (0.0, 0.0)
        };
        s.t_in.push(t + et);
        s.q_c.push((q_c + eq).max(0.0));
    }
    Ok((s, q_e))
}

/// Daily mean outdoor temperatures over a heating season: a sine trough
/// `6.5 - 9 sin(pi i / (days - 1))` plus Gaussian day-to-day noise.
pub fn seasonal_daily_temperatures(days: usize, noise_sd: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(rng::derive_seed(seed, "seasonal"));
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite deviation");
    let span = (days.max(2) - 1) as f64;
    (0..days)
        .map(|i| 6.5 - 9.0 * (std::f64::consts::PI * i as f64 / span).sin() + noise.sample(&mut r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::parse_timestamp;

    #[test]
    fn weather_is_deterministic_and_valid() {
        let start = parse_timestamp("2023-01-02T00:00:00", 1).unwrap();
        let p = WeatherProfile::winter(start, 3, 5);
        let a = synthesize_weather(&p);
        assert_eq!(a, synthesize_weather(&p));
        assert_eq!(a.len(), 72);
        assert!(a.ghi.iter().all(|&g| g >= 0.0) && a.rh.iter().all(|&h| (0.0..=100.0).contains(&h)));
        assert!(a.ghi[2] == 0.0 && a.ghi[12] > 0.0);
    }

    #[test]
    fn training_mean_is_mass_temperature() {
        let start = parse_timestamp("2023-01-02T00:00:00", 1).unwrap();
        let w = synthesize_weather(&WeatherProfile::winter(start, 4, 1));
        let params = ThermalParams::new(2.04, 1.06, 6.5, 20.6).unwrap();
        let prof = TrainingProfile {
            params,
            amplitude: (0.8, 1.4),
            exogenous: None,
            q_e_constant: 0.5,
            noise_t: 0.0,
            noise_q: 0.0,
            seed: 2,
        };
        let (s, _) = synthesize_training(&w, &prof).unwrap();
        let mean = s.t_in.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 20.6).abs() < 1e-12);
    }

    #[test]
    fn seasonal_profile_shape() {
        let t = seasonal_daily_temperatures(151, 0.0, 0);
        assert!((t[0] - 6.5).abs() < 1e-12 && (t[75] + 2.5).abs() < 1e-12);
    }
}
