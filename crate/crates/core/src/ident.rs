//! Grey-box identification from passive hourly observations.
//!
//! The pipeline runs in a fixed order: deep-mass temperature from the mean
//! indoor temperature, `r_out` from night-time steady windows, `r_m` and `a` by
//! grid search over an AR(1) fit, then the exogenous power is recovered by
//! inverting the dynamics and regressed on weather and calendar features.

use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    discretize, effective_boundary_temperature, effective_resistance, step, EffectiveModel, StateInput,
    ThermalParams,
};
use crate::series::{disturbance_features, format_timestamp, parse_timestamp, uniform_step_hours, FEATURE_NAMES};

pub const TRAINING_HEADER: [&str; 7] = ["timestamp_iso8601", "t_in_c", "t_out_c", "q_c_kw", "ghi_wm2", "wind_ms", "rh_pct"];

/// Uniformly sampled observations without gaps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub t_in: Vec<f64>,
    pub t_out: Vec<f64>,
    pub q_c: Vec<f64>,
    pub ghi: Vec<f64>,
    pub wind: Vec<f64>,
    pub rh: Vec<f64>,
    /// Sampling interval, h.
    pub dt: f64,
}

impl TrainingSeries {
    pub fn len(&self) -> usize {
        self.t_in.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_in.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (name, len) in [
            ("timestamps", self.timestamps.len()),
            ("t_out", self.t_out.len()),
            ("q_c", self.q_c.len()),
            ("ghi", self.ghi.len()),
            ("wind", self.wind.len()),
            ("rh", self.rh.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch(format!("{name} has {len} samples, t_in has {n}")));
            }
        }
        if let Some(k) = self.q_c.iter().position(|&q| !(q >= 0.0)) {
            return Err(Error::InvalidParameter(format!("q_c[{k}] = {} is negative", self.q_c[k])));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("sampling interval must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            t_in: self.t_in[range.clone()].to_vec(),
            t_out: self.t_out[range.clone()].to_vec(),
            q_c: self.q_c[range.clone()].to_vec(),
            ghi: self.ghi[range.clone()].to_vec(),
            wind: self.wind[range.clone()].to_vec(),
            rh: self.rh[range].to_vec(),
            dt: self.dt,
        }
    }

    /// Chronological split point for a leading `fraction` of the samples.
    pub fn split_index(&self, fraction: f64) -> usize {
        ((self.len() as f64) * fraction).round() as usize
    }

    pub fn features(&self, k: usize) -> Vec<f64> {
        disturbance_features(&self.timestamps[k], self.t_out[k], self.ghi[k], self.wind[k])
    }
}

pub fn load_training_csv(path: &Path) -> Result<TrainingSeries> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != TRAINING_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}, got {}", TRAINING_HEADER.join(","), header.join(",")),
        });
    }
    let mut s = TrainingSeries::default();
    let mut first_line = 2;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if i == 0 {
            first_line = line;
        }
        if rec.len() != TRAINING_HEADER.len() {
            return Err(Error::Parse { line, msg: format!("expected 7 fields, got {}", rec.len()) });
        }
        s.timestamps.push(parse_timestamp(&rec[0], line)?);
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("column {} is not a number: {:?}", TRAINING_HEADER[j], &rec[j]),
            })
        };
        let (t_in, t_out, q_c, ghi, wind, rh) = (num(1)?, num(2)?, num(3)?, num(4)?, num(5)?, num(6)?);
        if q_c < 0.0 {
            return Err(Error::Parse { line, msg: format!("negative thermal power {q_c}") });
        }
        if !(0.0..=100.0).contains(&rh) {
            return Err(Error::Parse { line, msg: format!("relative humidity {rh} outside [0, 100]") });
        }
        s.t_in.push(t_in);
        s.t_out.push(t_out);
        s.q_c.push(q_c);
        s.ghi.push(ghi);
        s.wind.push(wind);
        s.rh.push(rh);
    }
    if s.is_empty() {
        return Err(Error::EmptySeries);
    }
    s.dt = uniform_step_hours(&s.timestamps, first_line)?;
    Ok(s)
}

pub fn write_training_csv(path: &Path, s: &TrainingSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAINING_HEADER)?;
    for k in 0..s.len() {
        w.write_record([
            format_timestamp(&s.timestamps[k]),
            format!("{:.4}", s.t_in[k]),
            format!("{:.4}", s.t_out[k]),
            format!("{:.4}", s.q_c[k]),
            format!("{:.2}", s.ghi[k]),
            format!("{:.3}", s.wind[k]),
            format!("{:.2}", s.rh[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyWindowCriteria {
    /// Allowed indoor drift, °C/h.
    pub max_temp_drift: f64,
    pub window_hours: f64,
    pub night_start: u32,
    pub night_end: u32,
}

impl Default for SteadyWindowCriteria {
    fn default() -> Self {
        Self { max_temp_drift: 0.1, window_hours: 3.0, night_start: 23, night_end: 6 }
    }
}

impl SteadyWindowCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_temp_drift > 0.0) || !(self.window_hours >= 1.0) || self.night_start > 23 || self.night_end > 23 {
            return Err(Error::InvalidParameter(format!("invalid steady-window criteria {self:?}")));
        }
        Ok(())
    }

    fn is_night(&self, hour: u32) -> bool {
        if self.night_start <= self.night_end {
            hour >= self.night_start && hour < self.night_end
        } else {
            hour >= self.night_start || hour < self.night_end
        }
    }
}

pub fn estimate_mass_temperature(s: &TrainingSeries) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(s.t_in.iter().sum::<f64>() / s.len() as f64)
}

pub fn detect_steady_windows(s: &TrainingSeries, c: &SteadyWindowCriteria) -> Vec<usize> {
    let steps = (c.window_hours / s.dt).round().max(1.0) as usize;
    if s.len() <= steps {
        return Vec::new();
    }
    (0..s.len() - steps)
        .filter(|&k| c.is_night(s.timestamps[k].hour()))
        .filter(|&k| {
            (1..=steps).all(|j| (s.t_in[k + j] - s.t_in[k]).abs() <= c.max_temp_drift * j as f64 * s.dt + 1e-12)
        })
        .collect()
}

/// Least-squares line `y = b0 + b1 x`. `None` when `x` has no spread.
fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if sxx <= 1e-12 * n * scale * scale {
        return None;
    }
    let b1 = sxy / sxx;
    Some((my - b1 * mx, b1))
}

/// Regresses `T - T_out` on `(1, q_c)` over the steady indices; returns `(alpha, r_out)`.
pub fn fit_outdoor_resistance(s: &TrainingSeries, steady: &[usize]) -> Result<(f64, f64)> {
    if steady.len() < 2 {
        return Err(Error::UnidentifiableOutdoorResistance(format!(
            "{} steady samples, need at least 2",
            steady.len()
        )));
    }
    let x: Vec<f64> = steady.iter().map(|&k| s.q_c[k]).collect();
    let y: Vec<f64> = steady.iter().map(|&k| s.t_in[k] - s.t_out[k]).collect();
    let (alpha, r_out) = fit_line(&x, &y)
        .ok_or_else(|| Error::UnidentifiableOutdoorResistance("q_c is constant over the steady windows".into()))?;
    if !(r_out > 0.0) {
        return Err(Error::UnidentifiableOutdoorResistance(format!("fitted r_out = {r_out} is not positive")));
    }
    Ok((alpha, r_out))
}

/// `count` log-spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

pub fn default_r_m_grid() -> Vec<f64> {
    log_grid(0.01, 10.0, 200)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub r_m: f64,
    pub a: Option<f64>,
    /// One-step-ahead validation RMSE, °C. `None` if the candidate was discarded.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassFit {
    pub r_m: f64,
    pub a: f64,
    pub c: f64,
    pub scores: Vec<CandidateScore>,
}

struct ArFit {
    beta: f64,
    a: f64,
}

fn ar_regressors(s: &TrainingSeries, p: &ThermalParams, range: std::ops::Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let r = effective_resistance(p);
    range
        .map(|k| {
            let base = effective_boundary_temperature(p, s.t_out[k]) + r * s.q_c[k];
            (s.t_in[k] - base, s.t_in[k + 1] - base)
        })
        .unzip()
}

/// Grid search over `r_m`. The series is split chronologically 2/3 for the
/// AR(1) fit and 1/3 for scoring.
pub fn fit_mass_params(s: &TrainingSeries, r_out: f64, t_m: f64, grid: &[f64]) -> Result<MassFit> {
    if grid.is_empty() || grid.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidParameter("R_m grid must be non-empty and positive".into()));
    }
    if s.len() < 6 {
        return Err(Error::InsufficientData(format!("{} samples is too few for the mass fit", s.len())));
    }
    let split = s.split_index(2.0 / 3.0).clamp(3, s.len() - 2);
    let scores: Vec<CandidateScore> = grid
        .par_iter()
        .map(|&r_m| {
            let p = ThermalParams { r_out, r_m, c: 1.0, t_m };
            let (x, y) = ar_regressors(s, &p, 0..split - 1);
            let fit = fit_line(&x, &y).map(|(beta, a)| ArFit { beta, a });
            match fit {
                Some(f) if f.a > 0.0 && f.a < 1.0 => {
                    let (xv, yv) = ar_regressors(s, &p, split - 1..s.len() - 1);
                    let sse: f64 = xv.iter().zip(&yv).map(|(x, y)| (y - f.beta - f.a * x).powi(2)).sum();
                    CandidateScore { r_m, a: Some(f.a), rmse: Some((sse / xv.len() as f64).sqrt()) }
                }
                other => CandidateScore { r_m, a: other.map(|f| f.a), rmse: None },
            }
        })
        .collect();
    let best = scores
        .iter()
        .filter_map(|c| c.rmse.map(|r| (c, r)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(c, _)| c.clone())
        .ok_or(Error::NoStableFit)?;
    let a = best.a.unwrap();
    let r = ThermalParams { r_out, r_m: best.r_m, c: 1.0, t_m }.effective_r();
    let c = -s.dt / (r * a.ln());
    Ok(MassFit { r_m: best.r_m, a, c, scores })
}

impl ThermalParams {
    fn effective_r(&self) -> f64 {
        effective_resistance(self)
    }
}

/// Exogenous power implied by consecutive samples; length `len - 1`.
pub fn invert_exogenous(s: &TrainingSeries, p: &ThermalParams, m: &EffectiveModel) -> Vec<f64> {
    (0..s.len().saturating_sub(1))
        .map(|k| {
            let theta = effective_boundary_temperature(p, s.t_out[k]);
            ((s.t_in[k + 1] - m.a * s.t_in[k]) / (1.0 - m.a) - theta) / m.r - s.q_c[k]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorKind {
    Ridge,
    /// Gaussian kernel ridge with `exp(-gamma |x - x'|^2)` on standardised features.
    Kernel { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceHyper {
    pub kind: RegressorKind,
    /// Candidate regularisation strengths for cross-validation.
    pub lambdas: Vec<f64>,
}

impl Default for DisturbanceHyper {
    fn default() -> Self {
        Self { kind: RegressorKind::Ridge, lambdas: vec![1e-6, 1e-4, 1e-2, 0.1, 1.0, 10.0, 100.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    pub kind: RegressorKind,
    pub feature_names: Vec<String>,
    /// Indices of the input features kept after dropping constant ones.
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub intercept: f64,
    /// Ridge: one weight per kept feature. Kernel: one weight per support row.
    pub weights: Vec<f64>,
    /// Standardised training rows (kernel only).
    pub support: Vec<Vec<f64>>,
    pub lambda: f64,
}

struct Normaliser {
    kept: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn normaliser(x: &[Vec<f64>], candidates: &[usize]) -> Normaliser {
    let n = x.len() as f64;
    let mut out = Normaliser { kept: Vec::new(), mean: Vec::new(), scale: Vec::new() };
    for &j in candidates {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        out.kept.push(j);
        out.mean.push(mean);
        out.scale.push(if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 0.0 });
    }
    out
}

fn standardise(row: &[f64], kept: &[usize], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    kept.iter()
        .enumerate()
        .map(|(i, &j)| if scale[i] > 0.0 { (row[j] - mean[i]) / scale[i] } else { 0.0 })
        .collect()
}

fn gaussian(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

fn fit_regressor(
    kind: RegressorKind,
    x: &[Vec<f64>],
    y: &[f64],
    candidates: &[usize],
    lambda: f64,
    names: &[String],
) -> Result<DisturbanceModel> {
    let norm = normaliser(x, candidates);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardise(r, &norm.kept, &norm.mean, &norm.scale)).collect();
    let n = z.len();
    let d = norm.kept.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let solve = |mut m: DMatrix<f64>, rhs: DVector<f64>| -> Result<DVector<f64>> {
        for i in 0..m.nrows() {
            m[(i, i)] += lambda.max(1e-12);
        }
        m.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::InvalidParameter("regression system is not positive definite".into()))
    };
    let (weights, support) = match kind {
        RegressorKind::Ridge => {
            let zm = DMatrix::from_fn(n, d, |i, j| z[i][j]);
            let w = solve(zm.transpose() * &zm, zm.transpose() * &yc)?;
            (w.iter().copied().collect(), Vec::new())
        }
        RegressorKind::Kernel { gamma } => {
            let k = DMatrix::from_fn(n, n, |i, j| gaussian(gamma, &z[i], &z[j]));
            let w = solve(k, yc)?;
            (w.iter().copied().collect(), z)
        }
    };
    Ok(DisturbanceModel {
        kind,
        feature_names: names.to_vec(),
        kept: norm.kept,
        mean: norm.mean,
        scale: norm.scale,
        intercept: ybar,
        weights,
        support,
        lambda,
    })
}

/// Fits the configured regressor, choosing the regularisation strength by
/// two-fold chronological cross-validation.
pub fn train_disturbance_model(
    features: &[Vec<f64>],
    targets: &[f64],
    hyper: &DisturbanceHyper,
) -> Result<DisturbanceModel> {
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} targets",
            features.len(),
            targets.len()
        )));
    }
    let n_feat = features.first().map_or(0, |r| r.len());
    if n_feat == 0 || features.len() < 2 * n_feat {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} features; need at least twice as many samples",
            features.len(),
            n_feat
        )));
    }
    if let Some(bad) = features.iter().position(|r| r.len() != n_feat) {
        return Err(Error::FeatureMismatch { expected: n_feat, got: features[bad].len() });
    }
    if hyper.lambdas.is_empty() || hyper.lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::InvalidParameter("lambda list must be non-empty and non-negative".into()));
    }
    let names: Vec<String> = if n_feat == FEATURE_NAMES.len() {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n_feat).map(|j| format!("f{j}")).collect()
    };
    let all = normaliser(features, &(0..n_feat).collect::<Vec<_>>());
    let mut kept = Vec::new();
    for (i, &j) in all.kept.iter().enumerate() {
        if all.scale[i] > 0.0 {
            kept.push(j);
        } else {
            warn!("dropping constant disturbance feature {}", names[j]);
        }
    }

    let half = features.len() / 2;
    let folds = [(0..half, half..features.len()), (half..features.len(), 0..half)];
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &hyper.lambdas {
        let mut sse = 0.0;
        for (train, test) in folds.iter().cloned() {
            let m = fit_regressor(hyper.kind, &features[train.clone()], &targets[train], &kept, lambda, &names)?;
            let pred = predict_disturbance(&m, &features[test.clone()])?;
            sse += pred.iter().zip(&targets[test]).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        }
        if best.is_none_or(|(_, s)| sse < s) {
            best = Some((lambda, sse));
        }
    }
    let lambda = best.unwrap().0;
    fit_regressor(hyper.kind, features, targets, &kept, lambda, &names)
}

pub fn predict_disturbance(d: &DisturbanceModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let expected = d.feature_names.len();
    features
        .iter()
        .map(|row| {
            if row.len() != expected {
                return Err(Error::FeatureMismatch { expected, got: row.len() });
            }
            let z = standardise(row, &d.kept, &d.mean, &d.scale);
            let v = match d.kind {
                RegressorKind::Ridge => z.iter().zip(&d.weights).map(|(a, b)| a * b).sum::<f64>(),
                RegressorKind::Kernel { gamma } => {
                    d.support.iter().zip(&d.weights).map(|(s, w)| w * gaussian(gamma, &z, s)).sum::<f64>()
                }
            };
            Ok(d.intercept + v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ThermalParams,
    pub a: f64,
    pub rmse_temperature_validation: f64,
    pub rmse_power_validation: f64,
    /// Half-open sample ranges into the series the model was identified on.
    pub train_range: (usize, usize),
    pub validation_range: (usize, usize),
}

/// One-step-ahead temperature and inverted-power errors on `holdout`.
pub fn validate_model(
    p: &ThermalParams,
    m: &EffectiveModel,
    d: &DisturbanceModel,
    holdout: &TrainingSeries,
) -> Result<FitReport> {
    if holdout.len() < 2 {
        return Err(Error::InsufficientData("holdout needs at least two samples".into()));
    }
    let n = holdout.len() - 1;
    let feats: Vec<Vec<f64>> = (0..n).map(|k| holdout.features(k)).collect();
    let q_e = predict_disturbance(d, &feats)?;
    let (mut sse_t, mut sse_q) = (0.0, 0.0);
    for k in 0..n {
        let theta = effective_boundary_temperature(p, holdout.t_out[k]);
        let t_next = step(m, &StateInput { t: holdout.t_in[k], theta, q_c: holdout.q_c[k], q_e: q_e[k] });
        sse_t += (t_next - holdout.t_in[k + 1]).powi(2);
        let q_hat = ((holdout.t_in[k + 1] - m.a * holdout.t_in[k]) / (1.0 - m.a) - theta) / m.r - q_e[k];
        sse_q += (q_hat - holdout.q_c[k]).powi(2);
    }
    Ok(FitReport {
        params: *p,
        a: m.a,
        rmse_temperature_validation: (sse_t / n as f64).sqrt(),
        rmse_power_validation: (sse_q / n as f64).sqrt(),
        train_range: (0, 0),
        validation_range: (0, holdout.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    pub criteria: SteadyWindowCriteria,
    pub r_m_grid: Vec<f64>,
    pub hyper: DisturbanceHyper,
    pub train_fraction: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            criteria: SteadyWindowCriteria::default(),
            r_m_grid: default_r_m_grid(),
            hyper: DisturbanceHyper::default(),
            train_fraction: 2.0 / 3.0,
        }
    }
}

/// Everything the controller needs from identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedModel {
    pub params: ThermalParams,
    pub model: EffectiveModel,
    pub alpha: f64,
    pub disturbance: DisturbanceModel,
    pub report: FitReport,
}

/// Full pipeline on a chronological train/validation split.
pub fn identify(s: &TrainingSeries, opts: &IdentifyOptions) -> Result<IdentifiedModel> {
    s.validate()?;
    opts.criteria.validate()?;
    let split = s.split_index(opts.train_fraction);
    if split < 6 || s.len() - split < 2 {
        return Err(Error::InsufficientData(format!("{} samples cannot be split for identification", s.len())));
    }
    let train = s.slice(0..split);
    let holdout = s.slice(split..s.len());
    let t_m = estimate_mass_temperature(&train)?;
    let steady = detect_steady_windows(&train, &opts.criteria);
    let (alpha, r_out) = fit_outdoor_resistance(&train, &steady)?;
    let mass = fit_mass_params(&train, r_out, t_m, &opts.r_m_grid)?;
    let params = ThermalParams::new(r_out, mass.r_m, mass.c, t_m)?;
    let model = discretize(&params, s.dt)?;
    let targets = invert_exogenous(&train, &params, &model);
    let feats: Vec<Vec<f64>> = (0..targets.len()).map(|k| train.features(k)).collect();
    let disturbance = train_disturbance_model(&feats, &targets, &opts.hyper)?;
    let mut report = validate_model(&params, &model, &disturbance, &holdout)?;
    report.train_range = (0, split);
    report.validation_range = (split, s.len());
    Ok(IdentifiedModel { params, model, alpha, disturbance, report })
}
