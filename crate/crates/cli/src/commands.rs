//! Subcommand implementations. Every command writes into the output directory
//! and returns the paths it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use hpmpc::analysis::{
    daily_aggregate, fit_energy_line, relative_savings_mc, seasonal_savings_mc, stage_statistics, write_daily_csv,
    write_stage_histogram_csv, DailyRecord, IndoorSource, NormalDist, SavingsReport, SeasonalInputs,
    SeasonalReport, SlopeEstimate, StageStatistics,
};
use hpmpc::ident::load_training_csv;
use hpmpc::mpc::{mean_planned_ppd, mpc_step, write_plan_csv, ObjectiveBreakdown, PlanStatus};
use hpmpc::rng;
use hpmpc::series::format_timestamp;
use hpmpc::sim::{
    horizon_inputs, load_weather_csv, make_forecast, mpc_controller, run_closed_loop, Policy, SimTrace,
    WeatherSeries,
};

use crate::config::{controller_model, scenario, RunConfig};

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

fn load_weather(cfg: &RunConfig) -> Result<WeatherSeries> {
    Ok(load_weather_csv(cfg.weather_path()?)?)
}

pub fn identify(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let path = cfg.paths.training.as_deref().context("paths.training is not set")?;
    let series = load_training_csv(path)?;
    let id = hpmpc::ident::identify(&series, &cfg.identify_options())?;
    Ok(vec![write_json(out, "model.json", &id)?, write_json(out, "fit_report.json", &id.report)?])
}

#[derive(Debug, Serialize)]
struct PlanReport {
    start: String,
    t0: f64,
    status: PlanStatus,
    delta: f64,
    pi_t_base: f64,
    first_setpoint: f64,
    peak_kw: f64,
    mean_planned_ppd: f64,
    breakdown: ObjectiveBreakdown,
    objective: f64,
}

fn plan_at(cfg: &RunConfig, start: Option<&str>) -> Result<(hpmpc::mpc::MpcDecision, PlanReport)> {
    let w = load_weather(cfg)?;
    let k = cfg.start_index(&w, start)?;
    let ctl = controller_model(cfg)?;
    let s = scenario(cfg, &ctl, Policy::Mpc, &w, k, 1)?;
    s.validate(&w)?;
    let mut controller = mpc_controller(&s)?;
    let seed = rng::derive_indexed(rng::derive_seed(s.seed, "forecast"), 0);
    let forecast = make_forecast(&w, k, s.mpc.horizon, &s.forecast_error, seed)?;
    let clock = w.timestamps[k];
    let inputs = horizon_inputs(&s, &forecast, clock)?;
    let d = mpc_step(&mut controller, s.t0, &inputs, clock)?;
    let report = PlanReport {
        start: format_timestamp(&clock),
        t0: s.t0,
        status: d.plan.status,
        delta: d.plan.delta,
        pi_t_base: controller.tuning.pi_t_base,
        first_setpoint: d.setpoint,
        peak_kw: d.plan.peak,
        mean_planned_ppd: mean_planned_ppd(&d.plan.temperatures, &s.comfort)?,
        breakdown: d.plan.breakdown,
        objective: d.plan.breakdown.total(),
    };
    Ok((d, report))
}

pub fn plan(cfg: &RunConfig, start: Option<&str>, out: &Path) -> Result<Vec<PathBuf>> {
    let (d, report) = plan_at(cfg, start)?;
    let (csv_path, mut w) = create(out, "plan.csv")?;
    write_plan_csv(&mut w, &d.plan)?;
    w.flush()?;
    Ok(vec![csv_path, write_json(out, "plan.json", &report)?])
}

pub fn tune(cfg: &RunConfig, start: Option<&str>, out: &Path) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct TuneReport {
        start: String,
        pi_t_base: f64,
        grid: Vec<f64>,
        ppd_ceiling: f64,
        mean_planned_ppd: f64,
    }
    let (_, report) = plan_at(cfg, start)?;
    let t = TuneReport {
        start: report.start,
        pi_t_base: report.pi_t_base,
        grid: cfg.mpc.tuning.grid.clone(),
        ppd_ceiling: cfg.mpc.tuning.ppd_ceiling,
        mean_planned_ppd: report.mean_planned_ppd,
    };
    Ok(vec![write_json(out, "tune.json", &t)?])
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub policy: String,
    pub hours: f64,
    pub energy_kwh: f64,
    pub element_kwh: f64,
    pub peak_kw: f64,
    pub mean_t_in: f64,
    pub mean_ppd: f64,
    pub defrost_h: f64,
}

pub fn summarize(label: &str, t: &SimTrace) -> TraceSummary {
    let n = t.records.len().max(1) as f64;
    TraceSummary {
        policy: label.to_string(),
        hours: t.records.len() as f64 * t.dt,
        energy_kwh: t.records.iter().map(|r| r.p_total() * t.dt).sum(),
        element_kwh: t.records.iter().map(|r| r.p_elem * t.dt).sum(),
        peak_kw: t.records.iter().map(|r| r.p_total()).fold(0.0, f64::max),
        mean_t_in: t.records.iter().map(|r| r.t_in).sum::<f64>() / n,
        mean_ppd: t.records.iter().map(|r| r.ppd).sum::<f64>() / n,
        defrost_h: t.records.iter().filter(|r| r.defrost).count() as f64 * t.dt,
    }
}

fn write_trace(out: &Path, label: &str, t: &SimTrace) -> Result<PathBuf> {
    let (path, mut w) = create(out, &format!("trace_{label}.csv"))?;
    t.write_csv(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn run_policy(cfg: &RunConfig, w: &WeatherSeries, policy: Policy) -> Result<SimTrace> {
    let k = cfg.start_index(w, None)?;
    let ctl = controller_model(cfg)?;
    let s = scenario(cfg, &ctl, policy, w, k, cfg.scenario.hours)?;
    Ok(run_closed_loop(&s, w)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Mpc,
    Baseline,
}

pub fn simulate(cfg: &RunConfig, which: PolicyChoice, out: &Path) -> Result<Vec<PathBuf>> {
    let w = load_weather(cfg)?;
    let (label, policy) = match which {
        PolicyChoice::Mpc => ("mpc", Policy::Mpc),
        PolicyChoice::Baseline => ("baseline", cfg.baseline.clone()),
    };
    let trace = run_policy(cfg, &w, policy)?;
    Ok(vec![write_trace(out, label, &trace)?, write_json(out, &format!("summary_{label}.json"), &summarize(label, &trace))?])
}

/// Per-trace statistics shared by `compare` and `analyze`.
#[derive(Debug, Clone, Serialize)]
pub struct TraceAnalysis {
    pub summary: TraceSummary,
    pub slope: Option<SlopeEstimate>,
    pub slope_error: Option<String>,
    pub stages: StageStatistics,
}

fn analyse(cfg: &RunConfig, label: &str, t: &SimTrace, w: &WeatherSeries) -> Result<(TraceAnalysis, Vec<DailyRecord>)> {
    let days = daily_aggregate(t, w, IndoorSource::Measured, cfg.plant.n_stages(), label)?;
    let (slope, slope_error) = match fit_energy_line(&days, cfg.analysis.offset) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let stages = stage_statistics(&days, cfg.plant.n_stages());
    Ok((TraceAnalysis { summary: summarize(label, t), slope, slope_error, stages }, days))
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub mpc: String,
    pub baseline: String,
    /// `1 - m / m_base`, %.
    pub slope_savings_pct: Option<f64>,
    pub savings: Option<SavingsReport>,
    /// `1 - E / E_base` over the whole run, %.
    pub energy_savings_pct: f64,
    pub peak_reduction_kw: f64,
    /// Ratio of top-stage turn-on shares; absent without baseline top-stage events.
    pub top_stage_share_ratio: Option<f64>,
}

fn compare_pair(cfg: &RunConfig, mpc: &TraceAnalysis, base: &TraceAnalysis) -> Result<Comparison> {
    let (slope_savings_pct, savings) = match (mpc.slope, base.slope) {
        (Some(m), Some(b)) => {
            let seed = rng::derive_seed(cfg.seed, "savings");
            let rep = relative_savings_mc(m.into(), b.into(), cfg.analysis.savings_samples, seed)?;
            (Some(100.0 * (1.0 - m.mean / b.mean)), Some(rep))
        }
        _ => (None, None),
    };
    let top_stage_share_ratio = match (mpc.stages.top_stage_share, base.stages.top_stage_share) {
        (Some(m), Some(b)) if b > 0.0 => Some(m / b),
        (None, Some(b)) if b > 0.0 => Some(0.0),
        _ => None,
    };
    Ok(Comparison {
        mpc: mpc.summary.policy.clone(),
        baseline: base.summary.policy.clone(),
        slope_savings_pct,
        savings,
        energy_savings_pct: 100.0 * (1.0 - mpc.summary.energy_kwh / base.summary.energy_kwh),
        peak_reduction_kw: base.summary.peak_kw - mpc.summary.peak_kw,
        top_stage_share_ratio,
    })
}

#[derive(Debug, Serialize)]
struct CompareReport {
    seed: u64,
    tau: Option<f64>,
    traces: Vec<TraceAnalysis>,
    comparison: Comparison,
}

fn write_tables(out: &Path, days: &[DailyRecord], stats: &[StageStatistics], cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (daily, mut w) = create(out, "daily.csv")?;
    write_daily_csv(&mut w, days)?;
    w.flush()?;
    let (hist, mut w) = create(out, "stage_histogram.csv")?;
    write_stage_histogram_csv(&mut w, stats, &cfg.plant.stages)?;
    w.flush()?;
    Ok(vec![daily, hist])
}

pub fn compare(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let w = load_weather(cfg)?;
    let k = cfg.start_index(&w, None)?;
    let ctl = controller_model(cfg)?;
    let mpc_cfg = scenario(cfg, &ctl, Policy::Mpc, &w, k, cfg.scenario.hours)?;
    let base_cfg = scenario(cfg, &ctl, cfg.baseline.clone(), &w, k, cfg.scenario.hours)?;
    let mpc_trace = run_closed_loop(&mpc_cfg, &w)?;
    let base_trace = run_closed_loop(&base_cfg, &w)?;
    let (a_mpc, mut days) = analyse(cfg, "mpc", &mpc_trace, &w)?;
    let (a_base, days_base) = analyse(cfg, "baseline", &base_trace, &w)?;
    days.extend(days_base);
    let comparison = compare_pair(cfg, &a_mpc, &a_base)?;
    let mut written = vec![write_trace(out, "mpc", &mpc_trace)?, write_trace(out, "baseline", &base_trace)?];
    written.extend(write_tables(out, &days, &[a_mpc.stages.clone(), a_base.stages.clone()], cfg)?);
    let report = CompareReport { seed: cfg.seed, tau: mpc_cfg.mpc.tau, traces: vec![a_mpc, a_base], comparison };
    written.push(write_json(out, "report.json", &report)?);
    Ok(written)
}

pub fn read_seasonal_temps(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["date", "t_out_mean_c"] {
        anyhow::bail!("{}: expected header date,t_out_mean_c, got {}", path.display(), header.join(","));
    }
    let mut temps = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let t: f64 = row[1]
            .trim()
            .parse()
            .with_context(|| format!("{}: row {}: bad temperature {:?}", path.display(), i + 1, &row[1]))?;
        temps.push(t);
    }
    Ok(temps)
}

pub fn seasonal(cfg: &RunConfig, temps: Vec<f64>, m: NormalDist, m_base: NormalDist) -> Result<SeasonalReport> {
    let a = &cfg.analysis;
    let inp = SeasonalInputs {
        daily_t_out: temps,
        t_ref: a.seasonal_t_ref,
        gamma: NormalDist::from_interval(a.gamma_low, a.gamma_high, a.gamma_z),
        m,
        m_base,
        pi_e: cfg.mpc.pi_e,
        offset: a.offset,
    };
    Ok(seasonal_savings_mc(&inp, a.seasonal_samples, rng::derive_seed(cfg.seed, "seasonal"))?)
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    traces: Vec<TraceAnalysis>,
    comparisons: Vec<Comparison>,
    seasonal: Option<SeasonalReport>,
}

fn trace_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    stem.strip_prefix("trace_").map(str::to_string).unwrap_or(stem)
}

pub fn analyze(cfg: &RunConfig, traces: &[PathBuf], baseline: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>> {
    let w = load_weather(cfg)?;
    let load = |p: &Path| -> Result<SimTrace> {
        let f = File::open(p).with_context(|| format!("cannot open trace {}", p.display()))?;
        SimTrace::read_csv(f).with_context(|| format!("in trace {}", p.display()))
    };
    let mut analyses = Vec::new();
    let mut days = Vec::new();
    for p in traces {
        let (a, d) = analyse(cfg, &trace_label(p), &load(p)?, &w)?;
        analyses.push(a);
        days.extend(d);
    }
    let base = match baseline {
        Some(p) => {
            let (a, d) = analyse(cfg, &trace_label(p), &load(p)?, &w)?;
            days.extend(d);
            Some(a)
        }
        None => None,
    };
    let comparisons = match &base {
        Some(b) => analyses.iter().map(|a| compare_pair(cfg, a, b)).collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let seasonal = match &cfg.paths.seasonal_temps {
        Some(path) => {
            let slopes = match (analyses.first().and_then(|a| a.slope), base.as_ref().and_then(|b| b.slope)) {
                (Some(m), Some(b)) => (m.into(), b.into()),
                _ => (cfg.analysis.slope_mpc, cfg.analysis.slope_baseline),
            };
            Some(seasonal(cfg, read_seasonal_temps(path)?, slopes.0, slopes.1)?)
        }
        None => None,
    };
    let mut stats: Vec<StageStatistics> = analyses.iter().map(|a| a.stages.clone()).collect();
    if let Some(b) = &base {
        stats.push(b.stages.clone());
        analyses.push(b.clone());
    }
    let mut written = write_tables(out, &days, &stats, cfg)?;
    written.push(write_json(out, "analysis.json", &AnalyzeReport { traces: analyses, comparisons, seasonal })?);
    Ok(written)
}
