//! Closed-loop house simulation.
//!
//! The truth model advances on 15-minute substeps with the emulated device
//! thermostat and defrost process in the loop; the supervisory policy issues a
//! set-point once per hour.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{predict_disturbance, DisturbanceModel};
use crate::model::{discretize, effective_boundary_temperature, step, StateInput, ThermalParams};
use crate::mpc::{mpc_step, ComfortContext, HorizonInputs, MpcController, MpcSettings, TuningConfig};
use crate::plant::{cop, defrost_step, device_controller_step, DefrostConfig, DeviceControllerConfig, DeviceState, PlantConfig};
use crate::rng;
use crate::series::{disturbance_features, format_timestamp, hour_of_day, parse_timestamp, uniform_step_hours};

pub const WEATHER_HEADER: [&str; 5] = ["timestamp_iso8601", "t_out_c", "ghi_wm2", "wind_ms", "rh_pct"];
pub const TRACE_HEADER: [&str; 10] = [
    "timestamp_iso8601",
    "t_in_c",
    "setpoint_c",
    "q_c_kw",
    "p_hp_kw",
    "p_elem_kw",
    "stage",
    "defrost",
    "ppd_pct",
    "pi_t",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeatherSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub t_out: Vec<f64>,
    pub ghi: Vec<f64>,
    pub wind: Vec<f64>,
    pub rh: Vec<f64>,
    /// Sampling interval, h.
    pub dt: f64,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.t_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_out.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            t_out: self.t_out[range.clone()].to_vec(),
            ghi: self.ghi[range.clone()].to_vec(),
            wind: self.wind[range.clone()].to_vec(),
            rh: self.rh[range].to_vec(),
            dt: self.dt,
        }
    }

    pub fn features(&self, k: usize) -> Vec<f64> {
        disturbance_features(&self.timestamps[k], self.t_out[k], self.ghi[k], self.wind[k])
    }

    pub fn index_of(&self, t: &NaiveDateTime) -> Option<usize> {
        self.timestamps.binary_search(t).ok()
    }
}

fn parse_num(rec: &csv::StringRecord, j: usize, name: &str, line: usize) -> Result<f64> {
    rec.get(j)
        .ok_or_else(|| Error::Parse { line, msg: format!("missing column {name}") })?
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse { line, msg: format!("column {name} is not a number: {:?}", &rec[j]) })
}

fn check_header(rdr: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got != want {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}, got {}", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

pub fn read_weather_csv<R: Read>(input: R) -> Result<WeatherSeries> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(input);
    check_header(&mut rdr, &WEATHER_HEADER)?;
    let mut w = WeatherSeries::default();
    let mut first_line = 2;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if i == 0 {
            first_line = line;
        }
        if rec.len() != WEATHER_HEADER.len() {
            return Err(Error::Parse { line, msg: format!("expected 5 fields, got {}", rec.len()) });
        }
        w.timestamps.push(parse_timestamp(&rec[0], line)?);
        let t_out = parse_num(&rec, 1, "t_out_c", line)?;
        let ghi = parse_num(&rec, 2, "ghi_wm2", line)?;
        let wind = parse_num(&rec, 3, "wind_ms", line)?;
        let rh = parse_num(&rec, 4, "rh_pct", line)?;
        if !(0.0..=100.0).contains(&rh) {
            return Err(Error::Parse { line, msg: format!("relative humidity {rh} outside [0, 100]") });
        }
        if ghi < 0.0 {
            return Err(Error::Parse { line, msg: format!("negative irradiance {ghi}") });
        }
        if wind < 0.0 {
            return Err(Error::Parse { line, msg: format!("negative wind speed {wind}") });
        }
        w.t_out.push(t_out);
        w.ghi.push(ghi);
        w.wind.push(wind);
        w.rh.push(rh);
    }
    w.dt = uniform_step_hours(&w.timestamps, first_line)?;
    Ok(w)
}

pub fn load_weather_csv(path: &Path) -> Result<WeatherSeries> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_weather_csv(f)
}

pub fn write_weather_csv<W: Write>(out: W, w: &WeatherSeries) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(WEATHER_HEADER)?;
    for k in 0..w.len() {
        wr.write_record([
            format_timestamp(&w.timestamps[k]),
            format!("{:.3}", w.t_out[k]),
            format!("{:.2}", w.ghi[k]),
            format!("{:.3}", w.wind[k]),
            format!("{:.2}", w.rh[k]),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Additive Gaussian forecast errors, one standard deviation per feature.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastErrorModel {
    pub sigma_t_out: f64,
    pub sigma_ghi: f64,
    pub sigma_wind: f64,
}

impl ForecastErrorModel {
    pub fn validate(&self) -> Result<()> {
        if [self.sigma_t_out, self.sigma_ghi, self.sigma_wind].iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter("forecast error deviations must be non-negative".into()));
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        // Keep the stream aligned whatever the deviation.
        let _: f64 = rng.random();
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
}

/// Weather over `[start, start + len)` with seeded additive errors. Irradiance
/// and wind are clipped at zero.
pub fn make_forecast(
    w: &WeatherSeries,
    start: usize,
    len: usize,
    err: &ForecastErrorModel,
    seed: u64,
) -> Result<WeatherSeries> {
    err.validate()?;
    if start + len > w.len() {
        return Err(Error::ForecastCoverage(format!(
            "need samples {start}..{}, weather has {}",
            start + len,
            w.len()
        )));
    }
    let mut f = w.slice(start..start + len);
    let mut r = rng::stream(seed);
    for k in 0..len {
        f.t_out[k] += gaussian(&mut r, err.sigma_t_out);
        f.ghi[k] = (f.ghi[k] + gaussian(&mut r, err.sigma_ghi)).max(0.0);
        f.wind[k] = (f.wind[k] + gaussian(&mut r, err.sigma_wind)).max(0.0);
    }
    Ok(f)
}

/// Ground-truth exogenous gains: base load, a solar term and an hourly schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExogenousProfile {
    pub base_kw: f64,
    /// kW per 100 W/m² of irradiance.
    pub solar_kw_per_100wm2: f64,
    /// Additive kW by hour of day.
    pub diurnal_kw: Vec<f64>,
}

impl Default for ExogenousProfile {
    fn default() -> Self {
        let mut diurnal = vec![0.0; 24];
        for (h, v) in diurnal.iter_mut().enumerate() {
            *v = match h {
                6..=8 => 0.4,
                17..=21 => 0.6,
                _ => 0.0,
            };
        }
        Self { base_kw: 0.5, solar_kw_per_100wm2: 0.3, diurnal_kw: diurnal }
    }
}

impl ExogenousProfile {
    pub fn zero() -> Self {
        Self { base_kw: 0.0, solar_kw_per_100wm2: 0.0, diurnal_kw: vec![0.0; 24] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.diurnal_kw.len() != 24 {
            return Err(Error::InvalidParameter(format!(
                "diurnal schedule needs 24 values, got {}",
                self.diurnal_kw.len()
            )));
        }
        Ok(())
    }

    pub fn at(&self, t: &NaiveDateTime, ghi: f64) -> f64 {
        let h = (hour_of_day(t).floor() as usize).min(23);
        self.base_kw + self.solar_kw_per_100wm2 * ghi / 100.0 + self.diurnal_kw[h]
    }
}

pub fn truth_exogenous(w: &WeatherSeries, profile: &ExogenousProfile) -> Vec<f64> {
    (0..w.len()).map(|k| profile.at(&w.timestamps[k], w.ghi[k])).collect()
}

/// Day/night indoor temperature schedule. Day runs over `[day_start, night_start)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSchedule {
    pub day: f64,
    pub night: f64,
    pub day_start: f64,
    pub night_start: f64,
}

impl ReferenceSchedule {
    pub fn constant(t: f64) -> Self {
        Self { day: t, night: t, day_start: 6.0, night_start: 23.0 }
    }

    pub fn at(&self, t: &NaiveDateTime) -> f64 {
        let h = hour_of_day(t);
        if h >= self.day_start && h < self.night_start {
            self.day
        } else {
            self.night
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Receding-horizon control around the scenario reference.
    Mpc,
    Constant { setpoint: f64 },
    Schedule { schedule: ReferenceSchedule },
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Mpc => "mpc",
            Policy::Constant { .. } => "constant",
            Policy::Schedule { .. } => "schedule",
        }
    }
}

/// How the controller predicts exogenous gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DisturbanceSource {
    /// The truth profile applied to forecast weather.
    TruthProfile,
    Learned(DisturbanceModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcScenarioSettings {
    pub horizon: usize,
    /// $/kWh, constant over the horizon.
    pub pi_e: f64,
    pub pi_d: f64,
    pub delta: f64,
    pub pi_g: Option<f64>,
    /// Constant emission intensity, kg/kWh.
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    pub rate_limit: Option<f64>,
    pub fixed_pi_t: Option<f64>,
    pub tuning: TuningConfig,
}

impl Default for MpcScenarioSettings {
    fn default() -> Self {
        Self {
            horizon: 24,
            pi_e: 0.15,
            pi_d: 0.8,
            delta: 3.0,
            pi_g: None,
            mu: None,
            tau: None,
            rate_limit: None,
            fixed_pi_t: None,
            tuning: TuningConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub truth: ThermalParams,
    pub truth_exogenous: ExogenousProfile,
    pub controller_params: ThermalParams,
    pub controller_disturbance: DisturbanceSource,
    pub plant: PlantConfig,
    pub device: DeviceControllerConfig,
    pub defrost: DefrostConfig,
    pub policy: Policy,
    pub reference: ReferenceSchedule,
    pub mpc: MpcScenarioSettings,
    pub comfort: ComfortContext,
    pub forecast_error: ForecastErrorModel,
    /// Index of the first simulated hour in the weather series.
    pub start_index: usize,
    pub hours: usize,
    pub t0: f64,
    pub seed: u64,
    pub substeps_per_hour: usize,
}

impl ScenarioConfig {
    /// Perfect-model scenario on the reference plant: the controller shares the
    /// truth parameters, forecasts are exact and the reference is 20.7 °C.
    pub fn new(truth: ThermalParams, policy: Policy) -> Self {
        Self {
            truth,
            truth_exogenous: ExogenousProfile::default(),
            controller_params: truth,
            controller_disturbance: DisturbanceSource::TruthProfile,
            plant: PlantConfig::reference(),
            device: DeviceControllerConfig::default(),
            defrost: DefrostConfig::default(),
            policy,
            reference: ReferenceSchedule::constant(20.7),
            mpc: MpcScenarioSettings::default(),
            comfort: ComfortContext::default(),
            forecast_error: ForecastErrorModel::default(),
            start_index: 0,
            hours: 24,
            t0: 20.7,
            seed: 0,
            substeps_per_hour: 4,
        }
    }

    pub fn validate(&self, w: &WeatherSeries) -> Result<()> {
        self.truth.validate()?;
        self.controller_params.validate()?;
        self.truth_exogenous.validate()?;
        self.plant.validate()?;
        self.device.validate()?;
        self.defrost.validate(&self.plant)?;
        self.forecast_error.validate()?;
        self.mpc.tuning.validate()?;
        if (w.dt - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weather must be hourly, got a {} h step", w.dt)));
        }
        if self.substeps_per_hour == 0 || self.hours == 0 || self.mpc.horizon == 0 {
            return Err(Error::InvalidParameter("hours, substeps and horizon must be positive".into()));
        }
        let lookahead = if self.policy == Policy::Mpc { self.mpc.horizon } else { 1 };
        if self.start_index + self.hours + lookahead - 1 > w.len() {
            return Err(Error::ForecastCoverage(format!(
                "scenario needs weather samples {}..{}, file has {}",
                self.start_index,
                self.start_index + self.hours + lookahead - 1,
                w.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp: NaiveDateTime,
    pub t_in: f64,
    pub setpoint: f64,
    pub q_c: f64,
    pub p_hp: f64,
    pub p_elem: f64,
    pub stage: usize,
    pub defrost: bool,
    pub ppd: f64,
    pub pi_t: f64,
}

impl TraceRecord {
    pub fn p_total(&self) -> f64 {
        self.p_hp + self.p_elem
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
    /// Record spacing, h.
    pub dt: f64,
}

impl SimTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                format_timestamp(&r.timestamp),
                format!("{:.4}", r.t_in),
                format!("{:.4}", r.setpoint),
                format!("{:.4}", r.q_c),
                format!("{:.4}", r.p_hp),
                format!("{:.4}", r.p_elem),
                r.stage.to_string(),
                u8::from(r.defrost).to_string(),
                format!("{:.4}", r.ppd),
                format!("{:.4}", r.pi_t),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(input);
        check_header(&mut rdr, &TRACE_HEADER)?;
        let mut records = Vec::new();
        let mut stamps = Vec::new();
        let mut first_line = 2;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            if i == 0 {
                first_line = line;
            }
            if rec.len() != TRACE_HEADER.len() {
                return Err(Error::Parse { line, msg: format!("expected 10 fields, got {}", rec.len()) });
            }
            let timestamp = parse_timestamp(&rec[0], line)?;
            let num = |j: usize| parse_num(&rec, j, TRACE_HEADER[j], line);
            let stage = rec[6].trim().parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("stage is not an integer: {:?}", &rec[6]),
            })?;
            let defrost = match rec[7].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse { line, msg: format!("defrost flag must be 0 or 1, got {other:?}") }),
            };
            stamps.push(timestamp);
            records.push(TraceRecord {
                timestamp,
                t_in: num(1)?,
                setpoint: num(2)?,
                q_c: num(3)?,
                p_hp: num(4)?,
                p_elem: num(5)?,
                stage,
                defrost,
                ppd: num(8)?,
                pi_t: num(9)?,
            });
        }
        let dt = uniform_step_hours(&stamps, first_line)?;
        Ok(Self { records, dt })
    }
}

pub fn horizon_inputs(
    cfg: &ScenarioConfig,
    forecast: &WeatherSeries,
    clock: NaiveDateTime,
) -> Result<HorizonInputs> {
    let l_len = forecast.len();
    let theta = forecast.t_out.iter().map(|&t| effective_boundary_temperature(&cfg.controller_params, t)).collect();
    let q_e = match &cfg.controller_disturbance {
        DisturbanceSource::TruthProfile => truth_exogenous(forecast, &cfg.truth_exogenous),
        DisturbanceSource::Learned(d) => {
            let feats: Vec<Vec<f64>> = (0..l_len).map(|k| forecast.features(k)).collect();
            predict_disturbance(d, &feats)?
        }
    };
    let eta = forecast.t_out.iter().map(|&t| cop(&cfg.plant, t)).collect();
    let t_ref = (0..l_len).map(|l| cfg.reference.at(&(clock + Duration::hours(l as i64 + 1)))).collect();
    Ok(HorizonInputs {
        theta,
        q_e,
        eta,
        pi_e: vec![cfg.mpc.pi_e; l_len],
        t_ref,
        mu: cfg.mpc.mu.map(|m| vec![m; l_len]),
    })
}

pub fn mpc_controller(cfg: &ScenarioConfig) -> Result<MpcController> {
    let model = discretize(&cfg.controller_params, 1.0)?;
    let settings = MpcSettings {
        model,
        pi_d: cfg.mpc.pi_d,
        delta: cfg.mpc.delta,
        p_bar: cfg.plant.p_bar,
        p_r_bar: cfg.plant.p_r_bar,
        pi_g: cfg.mpc.pi_g,
        tau: cfg.mpc.tau,
        rate_limit: cfg.mpc.rate_limit,
        comfort: cfg.comfort,
        fixed_pi_t: cfg.mpc.fixed_pi_t,
    };
    MpcController::new(settings, cfg.mpc.tuning.clone())
}

/// Set-point tracking time constant of the emulated thermostat, h.
///
/// Each `(t_out, step)` pair applies a set-point step of `step` °C from a held
/// `t_start` with no defrost and constant exogenous gains `q_e`. The deviations
/// from the new set-point, sampled hourly for `hours` h, are pooled into one
/// least-squares fit of `e(k+1) = b e(k)`, and `tau = -1 / ln b`.
pub fn tracking_time_constant(
    cfg: &ScenarioConfig,
    t_start: f64,
    q_e: f64,
    cases: &[(f64, f64)],
    hours: usize,
) -> Result<f64> {
    let sub = cfg.substeps_per_hour.max(1);
    let sub_dt = 1.0 / sub as f64;
    let truth = discretize(&cfg.truth, sub_dt)?;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t_out, delta) in cases {
        let target = t_start + delta;
        let eta = cop(&cfg.plant, t_out);
        let theta = effective_boundary_temperature(&cfg.truth, t_out);
        let mut dev = DeviceState::new(&cfg.plant);
        dev.integral_kw = truth.steady_hold_power(t_start, theta, q_e).clamp(0.0, eta * cfg.plant.p_bar);
        let mut t = t_start;
        let mut samples = vec![t - target];
        for _ in 0..hours {
            for _ in 0..sub {
                let (out, next) =
                    device_controller_step(&dev, target, t, &cfg.plant, &cfg.device, &cfg.defrost, eta, sub_dt);
                t = step(&truth, &StateInput { t, theta, q_c: out.q_c, q_e });
                dev = next;
            }
            samples.push(t - target);
        }
        for w in samples.windows(2) {
            sxy += w[0] * w[1];
            sxx += w[0] * w[0];
        }
    }
    let b = sxy / sxx;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidParameter(format!("step responses give a tracking factor {b} outside (0, 1)")));
    }
    Ok(-1.0 / b.ln())
}

pub fn run_closed_loop(cfg: &ScenarioConfig, w: &WeatherSeries) -> Result<SimTrace> {
    cfg.validate(w)?;
    let sub_dt = 1.0 / cfg.substeps_per_hour as f64;
    let truth = discretize(&cfg.truth, sub_dt)?;
    let q_e_truth = truth_exogenous(w, &cfg.truth_exogenous);
    let mut controller = match cfg.policy {
        Policy::Mpc => Some(mpc_controller(cfg)?),
        _ => None,
    };
    let forecast_root = rng::derive_seed(cfg.seed, "forecast");
    let mut defrost_rng = rng::stream(rng::derive_seed(cfg.seed, "defrost"));

    let mut t_in = cfg.t0;
    let mut dev = DeviceState::new(&cfg.plant);
    {
        let k = cfg.start_index;
        let eta = cop(&cfg.plant, w.t_out[k]);
        let theta = effective_boundary_temperature(&cfg.truth, w.t_out[k]);
        dev.integral_kw = truth.steady_hold_power(t_in, theta, q_e_truth[k]).clamp(0.0, eta * cfg.plant.p_bar);
    }

    let mut trace = SimTrace { records: Vec::with_capacity(cfg.hours * cfg.substeps_per_hour), dt: sub_dt };
    for h in 0..cfg.hours {
        let k = cfg.start_index + h;
        let clock = w.timestamps[k];
        let (setpoint, pi_t) = match (&cfg.policy, controller.as_mut()) {
            (Policy::Mpc, Some(ctl)) => {
                let forecast = make_forecast(
                    w,
                    k,
                    cfg.mpc.horizon,
                    &cfg.forecast_error,
                    rng::derive_indexed(forecast_root, h as u64),
                )
                .map_err(|e| Error::at_step(h, e))?;
                let inputs = horizon_inputs(cfg, &forecast, clock).map_err(|e| Error::at_step(h, e))?;
                let d = mpc_step(ctl, t_in, &inputs, clock).map_err(|e| Error::at_step(h, e))?;
                (d.setpoint, d.pi_t)
            }
            (Policy::Constant { setpoint }, _) => (*setpoint, 0.0),
            (Policy::Schedule { schedule }, _) => (schedule.at(&clock), 0.0),
            (Policy::Mpc, None) => unreachable!("controller built for MPC policy"),
        };

        let eta = cop(&cfg.plant, w.t_out[k]);
        let theta = effective_boundary_temperature(&cfg.truth, w.t_out[k]);
        for s in 0..cfg.substeps_per_hour {
            let stamp = clock + Duration::seconds((s as f64 * sub_dt * 3600.0).round() as i64);
            let (_, after_defrost) = defrost_step(&dev, w.t_out[k], w.rh[k], &mut defrost_rng, &cfg.defrost, sub_dt);
            let (out, next) = device_controller_step(
                &after_defrost,
                setpoint,
                t_in,
                &cfg.plant,
                &cfg.device,
                &cfg.defrost,
                eta,
                sub_dt,
            );
            let ppd = cfg.comfort.ppd_at(t_in).map_err(|e| Error::at_step(h, e))?;
            trace.records.push(TraceRecord {
                timestamp: stamp,
                t_in,
                setpoint,
                q_c: out.q_c,
                p_hp: out.p_hp,
                p_elem: out.p_elem,
                stage: out.stage,
                defrost: after_defrost.defrost_active,
                ppd,
                pi_t,
            });
            t_in = step(&truth, &StateInput { t: t_in, theta, q_c: out.q_c, q_e: q_e_truth[k] });
            dev = next;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV3: &str = "timestamp_iso8601,t_out_c,ghi_wm2,wind_ms,rh_pct\n\
        2023-01-02T00:00:00,-3.0,0,2.0,80\n\
        2023-01-02T01:00:00,-3.5,0,2.5,82\n\
        2023-01-02T02:00:00,-4.0,0,3.0,85\n";

    #[test]
    fn reads_three_rows() {
        let w = read_weather_csv(CSV3.as_bytes()).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.dt, 1.0);
        assert_eq!(w.t_out, vec![-3.0, -3.5, -4.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_rh = CSV3.replace("-3.5,0,2.5,82", "-3.5,0,2.5,140");
        match read_weather_csv(bad_rh.as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("140"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let dup = CSV3.replace("2023-01-02T02:00:00", "2023-01-02T01:00:00");
        let err = read_weather_csv(dup.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("non-uniform timestamps"), "{err}");
        let header = CSV3.replace("rh_pct", "humidity");
        assert!(matches!(read_weather_csv(header.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn weather_round_trip() {
        let w = read_weather_csv(CSV3.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_weather_csv(&mut buf, &w).unwrap();
        assert_eq!(read_weather_csv(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn forecast_noise() {
        let w = read_weather_csv(CSV3.as_bytes()).unwrap();
        let exact = make_forecast(&w, 0, 3, &ForecastErrorModel::default(), 9).unwrap();
        assert_eq!(exact, w);
        assert!(matches!(make_forecast(&w, 1, 3, &ForecastErrorModel::default(), 9), Err(Error::ForecastCoverage(_))));
        let err = ForecastErrorModel { sigma_t_out: 1.0, ..Default::default() };
        assert_eq!(make_forecast(&w, 0, 3, &err, 4).unwrap(), make_forecast(&w, 0, 3, &err, 4).unwrap());
    }

    #[test]
    fn exogenous_profile() {
        let w = read_weather_csv(CSV3.as_bytes()).unwrap();
        assert!(truth_exogenous(&w, &ExogenousProfile::zero()).iter().all(|&q| q == 0.0));
        let p = ExogenousProfile { solar_kw_per_100wm2: 0.02, ..ExogenousProfile::zero() };
        let t = w.timestamps[0];
        assert!((p.at(&t, 500.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn trace_round_trip() {
        let t0 = parse_timestamp("2023-01-02T00:00:00", 1).unwrap();
        let trace = SimTrace {
            dt: 0.25,
            records: (0..4)
                .map(|i| TraceRecord {
                    timestamp: t0 + Duration::minutes(15 * i),
                    t_in: 20.0 + i as f64 * 0.125,
                    setpoint: 21.0,
                    q_c: 5.5,
                    p_hp: 2.25,
                    p_elem: if i == 2 { 9.6 } else { 0.0 },
                    stage: usize::from(i == 2),
                    defrost: i == 3,
                    ppd: 7.5,
                    pi_t: 0.5,
                })
                .collect(),
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(SimTrace::read_csv(buf.as_slice()).unwrap(), trace);
    }
}
