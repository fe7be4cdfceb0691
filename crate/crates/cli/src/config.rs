//! Run configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use hpmpc::analysis::{NormalDist, DEFAULT_OFFSET};
use hpmpc::ident::{DisturbanceHyper, IdentifiedModel, IdentifyOptions, RegressorKind};
use hpmpc::model::ThermalParams;
use hpmpc::mpc::ComfortContext;
use hpmpc::plant::{DefrostConfig, DeviceControllerConfig, PlantConfig};
use hpmpc::series::parse_timestamp;
use hpmpc::sim::{
    tracking_time_constant, DisturbanceSource, ExogenousProfile, ForecastErrorModel, MpcScenarioSettings, Policy,
    ReferenceSchedule, ScenarioConfig, WeatherSeries,
};

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub weather: Option<PathBuf>,
    pub training: Option<PathBuf>,
    pub seasonal_temps: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Params,
    Identify,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub source: ModelSource,
    pub r_out: Option<f64>,
    pub r_m: Option<f64>,
    pub c: Option<f64>,
    pub t_m: Option<f64>,
    pub file: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = reference_params();
        Self {
            source: ModelSource::Params,
            r_out: Some(p.r_out),
            r_m: Some(p.r_m),
            c: Some(p.c),
            t_m: Some(p.t_m),
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub start: Option<String>,
    pub hours: usize,
    pub t0: Option<f64>,
    pub substeps_per_hour: usize,
    pub identify_tau: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { start: None, hours: 168, t0: None, substeps_per_hour: 4, identify_tau: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorChoice {
    Ridge,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifySection {
    pub train_fraction: f64,
    pub regressor: RegressorChoice,
    pub kernel_gamma: f64,
}

impl Default for IdentifySection {
    fn default() -> Self {
        Self { train_fraction: 2.0 / 3.0, regressor: RegressorChoice::Ridge, kernel_gamma: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub offset: f64,
    pub savings_samples: usize,
    pub seasonal_samples: usize,
    pub seasonal_t_ref: f64,
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub gamma_z: f64,
    /// Slopes used by the seasonal estimate when no traces are analysed.
    pub slope_mpc: NormalDist,
    pub slope_baseline: NormalDist,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            offset: DEFAULT_OFFSET,
            savings_samples: 10_000_000,
            seasonal_samples: 100_000,
            seasonal_t_ref: 20.7,
            gamma_low: 0.7,
            gamma_high: 1.7,
            gamma_z: 2.576,
            slope_mpc: NormalDist { mean: 3.83, std: 0.117 },
            slope_baseline: NormalDist { mean: 4.71, std: 0.076 },
        }
    }
}

fn reference_params() -> ThermalParams {
    ThermalParams { r_out: 2.04, r_m: 1.06, c: 6.5, t_m: 20.6 }
}

fn default_reference() -> ReferenceSchedule {
    ReferenceSchedule { day: 20.0, night: 18.0, day_start: 6.0, night_start: 23.0 }
}

fn default_baseline() -> Policy {
    Policy::Schedule { schedule: default_reference() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "reference_params")]
    pub truth: ThermalParams,
    #[serde(default)]
    pub exogenous: ExogenousProfile,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub device: DeviceControllerConfig,
    #[serde(default)]
    pub defrost: DefrostConfig,
    #[serde(default)]
    pub mpc: MpcScenarioSettings,
    #[serde(default)]
    pub comfort: ComfortContext,
    #[serde(default)]
    pub forecast_error: ForecastErrorModel,
    #[serde(default = "default_reference")]
    pub reference: ReferenceSchedule,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default = "default_baseline")]
    pub baseline: Policy,
    #[serde(default)]
    pub identify: IdentifySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl RunConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("invalid configuration")?;
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        resolve(&mut cfg.paths.weather);
        resolve(&mut cfg.paths.training);
        resolve(&mut cfg.paths.seasonal_temps);
        resolve(&mut cfg.paths.out);
        resolve(&mut cfg.model.file);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    /// The shipped default profile, with paths relative to the working directory.
    pub fn default_profile() -> Result<Self> {
        Self::parse(DEFAULT_CONFIG, Path::new("."))
    }

    /// Range checks and input-file existence.
    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        self.exogenous.validate()?;
        self.plant.validate()?;
        self.device.validate()?;
        self.defrost.validate(&self.plant)?;
        self.forecast_error.validate()?;
        self.mpc.tuning.validate()?;
        self.comfort.inputs(21.0).validate()?;
        let m = &self.mpc;
        if m.horizon == 0 {
            bail!("mpc.horizon must be at least 1");
        }
        if !(m.pi_e > 0.0) {
            bail!("mpc.pi_e must be strictly positive, got {}", m.pi_e);
        }
        if !(m.pi_d >= 0.0) || !(m.delta >= 0.0) {
            bail!("mpc.pi_d and mpc.delta must be non-negative");
        }
        if m.pi_g.is_some_and(|p| !(p >= 0.0)) || m.mu.is_some_and(|p| !(p >= 0.0)) {
            bail!("mpc.pi_g and mpc.mu must be non-negative");
        }
        if m.tau.is_some_and(|t| !(t > 0.0)) || m.rate_limit.is_some_and(|r| !(r > 0.0)) {
            bail!("mpc.tau and mpc.rate_limit must be positive when set");
        }
        if m.fixed_pi_t.is_some_and(|p| !(p >= 0.0)) {
            bail!("mpc.fixed_pi_t must be non-negative");
        }
        let r = &self.reference;
        for h in [r.day_start, r.night_start] {
            if !(0.0..24.0).contains(&h) {
                bail!("reference hours must lie in [0, 24), got {h}");
            }
        }
        if self.scenario.hours == 0 || self.scenario.substeps_per_hour == 0 {
            bail!("scenario.hours and scenario.substeps_per_hour must be positive");
        }
        if let Some(s) = &self.scenario.start {
            parse_timestamp(s, 0).with_context(|| format!("scenario.start {s:?}"))?;
        }
        if !(self.identify.train_fraction > 0.0 && self.identify.train_fraction < 1.0) {
            bail!("identify.train_fraction must lie in (0, 1)");
        }
        if !(self.identify.kernel_gamma > 0.0) {
            bail!("identify.kernel_gamma must be positive");
        }
        let a = &self.analysis;
        if a.savings_samples < 10_000 {
            bail!("analysis.savings_samples must be at least 10^4");
        }
        if a.seasonal_samples == 0 || !(a.gamma_high >= a.gamma_low) || !(a.gamma_z > 0.0) {
            bail!("invalid analysis section");
        }
        match self.model.source {
            ModelSource::Params => {
                self.params_from_section()?;
            }
            ModelSource::Identify if self.paths.training.is_none() => {
                bail!("model.source = \"identify\" needs paths.training")
            }
            ModelSource::File if self.model.file.is_none() => bail!("model.source = \"file\" needs model.file"),
            _ => {}
        }
        for p in [&self.paths.weather, &self.paths.training, &self.paths.seasonal_temps].into_iter().flatten() {
            if !p.exists() {
                bail!("input file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    fn params_from_section(&self) -> Result<ThermalParams> {
        let m = &self.model;
        match (m.r_out, m.r_m, m.c, m.t_m) {
            (Some(r_out), Some(r_m), Some(c), Some(t_m)) => Ok(ThermalParams::new(r_out, r_m, c, t_m)?),
            _ => bail!("model.source = \"params\" needs r_out, r_m, c and t_m"),
        }
    }

    pub fn identify_options(&self) -> IdentifyOptions {
        let kind = match self.identify.regressor {
            RegressorChoice::Ridge => RegressorKind::Ridge,
            RegressorChoice::Kernel => RegressorKind::Kernel { gamma: self.identify.kernel_gamma },
        };
        IdentifyOptions {
            hyper: DisturbanceHyper { kind, ..DisturbanceHyper::default() },
            train_fraction: self.identify.train_fraction,
            ..IdentifyOptions::default()
        }
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf).or_else(|| self.paths.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn weather_path(&self) -> Result<&Path> {
        self.paths.weather.as_deref().context("paths.weather is not set")
    }

    /// Index of `start` (or the configured start) in the weather series.
    pub fn start_index(&self, w: &WeatherSeries, start: Option<&str>) -> Result<usize> {
        let Some(s) = start.or(self.scenario.start.as_deref()) else {
            return Ok(0);
        };
        let t: NaiveDateTime = parse_timestamp(s, 0)?;
        w.index_of(&t).with_context(|| format!("start {s} is not a weather timestamp"))
    }
}

/// Controller model resolved from the configuration.
#[derive(Debug, Clone)]
pub struct ControllerModel {
    pub params: ThermalParams,
    pub disturbance: DisturbanceSource,
    pub identified: Option<IdentifiedModel>,
}

pub fn controller_model(cfg: &RunConfig) -> Result<ControllerModel> {
    match cfg.model.source {
        ModelSource::Params => Ok(ControllerModel {
            params: cfg.params_from_section()?,
            disturbance: DisturbanceSource::TruthProfile,
            identified: None,
        }),
        ModelSource::Identify => {
            let path = cfg.paths.training.as_deref().context("paths.training is not set")?;
            let series = hpmpc::ident::load_training_csv(path)?;
            let id = hpmpc::ident::identify(&series, &cfg.identify_options())?;
            Ok(ControllerModel {
                params: id.params,
                disturbance: DisturbanceSource::Learned(id.disturbance.clone()),
                identified: Some(id),
            })
        }
        ModelSource::File => {
            let path = cfg.model.file.as_deref().context("model.file is not set")?;
            let text =
                std::fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
            let id: IdentifiedModel =
                serde_json::from_str(&text).with_context(|| format!("invalid model file {}", path.display()))?;
            Ok(ControllerModel {
                params: id.params,
                disturbance: DisturbanceSource::Learned(id.disturbance.clone()),
                identified: Some(id),
            })
        }
    }
}

/// Step-response cases used to fit the tracking time constant.
pub const TAU_CASES: [(f64, f64); 6] = [(0.0, 1.0), (0.0, 2.0), (-5.0, 1.0), (-5.0, 2.0), (-10.0, 1.0), (-10.0, 2.0)];

/// Scenario for `policy` over `w`, starting at weather index `start`.
pub fn scenario(
    cfg: &RunConfig,
    ctl: &ControllerModel,
    policy: Policy,
    w: &WeatherSeries,
    start: usize,
    hours: usize,
) -> Result<ScenarioConfig> {
    let mut mpc = cfg.mpc.clone();
    let t0 = cfg.scenario.t0.unwrap_or_else(|| cfg.reference.at(&w.timestamps[start]));
    let mut s = ScenarioConfig {
        truth: cfg.truth,
        truth_exogenous: cfg.exogenous.clone(),
        controller_params: ctl.params,
        controller_disturbance: ctl.disturbance.clone(),
        plant: cfg.plant.clone(),
        device: cfg.device.clone(),
        defrost: cfg.defrost.clone(),
        policy,
        reference: cfg.reference,
        mpc: mpc.clone(),
        comfort: cfg.comfort,
        forecast_error: cfg.forecast_error,
        start_index: start,
        hours,
        t0,
        seed: cfg.seed,
        substeps_per_hour: cfg.scenario.substeps_per_hour,
    };
    if cfg.scenario.identify_tau {
        let from = cfg.reference.day - 2.0;
        mpc.tau = Some(tracking_time_constant(&s, from, cfg.exogenous.base_kw, &TAU_CASES, 6)?);
        s.mpc = mpc;
    }
    Ok(s)
}
