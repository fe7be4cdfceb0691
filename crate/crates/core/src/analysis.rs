//! Evaluation statistics: daily energy against indoor-outdoor temperature
//! difference, slope-ratio savings, seasonal cost savings and backup-stage
//! usage.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use log::warn;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{SimTrace, WeatherSeries};

/// Balance-point offset, °C.
pub const DEFAULT_OFFSET: f64 = 8.0;
const CHUNK: usize = 1 << 16;

/// Which indoor temperature enters the daily temperature difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndoorSource {
    Measured,
    Reference(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub policy: String,
    /// Mean indoor minus mean outdoor temperature, °C.
    pub delta_t: f64,
    pub mean_t_out: f64,
    pub energy_kwh: f64,
    pub element_kwh: f64,
    pub element_on_h: f64,
    pub peak_kw: f64,
    /// Turn-on events starting this day, by the highest stage each reached (index 0 is stage 1).
    pub stage_events: Vec<usize>,
    pub mean_ppd: f64,
}

/// A contiguous run of element operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub start: NaiveDateTime,
    pub max_stage: usize,
    pub duration_h: f64,
}

pub fn stage_events(trace: &SimTrace) -> Vec<StageEvent> {
    let mut events: Vec<StageEvent> = Vec::new();
    let mut prev_on = false;
    for r in &trace.records {
        let on = r.stage > 0;
        if on && !prev_on {
            events.push(StageEvent { start: r.timestamp, max_stage: r.stage, duration_h: 0.0 });
        }
        if on {
            let e = events.last_mut().expect("event opened on rising edge");
            e.max_stage = e.max_stage.max(r.stage);
            e.duration_h += trace.dt;
        }
        prev_on = on;
    }
    events
}

fn weather_at(w: &WeatherSeries, t: &NaiveDateTime) -> Option<f64> {
    let hour = t.with_minute(0)?.with_second(0)?;
    w.index_of(&hour).map(|k| w.t_out[k])
}

/// Per-day totals over complete days of `trace`; incomplete days are dropped.
pub fn daily_aggregate(
    trace: &SimTrace,
    weather: &WeatherSeries,
    indoor: IndoorSource,
    n_stages: usize,
    policy: &str,
) -> Result<Vec<DailyRecord>> {
    if !(trace.dt > 0.0) {
        return Err(Error::InvalidParameter("trace step must be positive".into()));
    }
    let per_day = (24.0 / trace.dt).round() as usize;
    let mut days: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
    for (i, r) in trace.records.iter().enumerate() {
        days.entry(r.timestamp.date()).or_default().push(i);
    }
    let events = stage_events(trace);
    let mut out = Vec::new();
    for (date, idx) in days {
        if idx.len() != per_day {
            warn!("dropping incomplete day {date} ({} of {per_day} records)", idx.len());
            continue;
        }
        let n = idx.len() as f64;
        let mut t_out_sum = 0.0;
        for &i in &idx {
            let ts = trace.records[i].timestamp;
            t_out_sum += weather_at(weather, &ts).ok_or_else(|| {
                Error::InsufficientData(format!("no outdoor temperature for {ts}"))
            })?;
        }
        let mean_t_out = t_out_sum / n;
        let mean_t_in = match indoor {
            IndoorSource::Measured => idx.iter().map(|&i| trace.records[i].t_in).sum::<f64>() / n,
            IndoorSource::Reference(t) => t,
        };
        let mut hist = vec![0; n_stages];
        for e in events.iter().filter(|e| e.start.date() == date) {
            let s = e.max_stage.min(n_stages).max(1);
            hist[s - 1] += 1;
        }
        let recs = idx.iter().map(|&i| &trace.records[i]);
        out.push(DailyRecord {
            date,
            policy: policy.to_string(),
            delta_t: mean_t_in - mean_t_out,
            mean_t_out,
            energy_kwh: recs.clone().map(|r| r.p_total() * trace.dt).sum(),
            element_kwh: recs.clone().map(|r| r.p_elem * trace.dt).sum(),
            element_on_h: recs.clone().filter(|r| r.stage > 0).count() as f64 * trace.dt,
            peak_kw: recs.clone().map(|r| r.p_total()).fold(0.0, f64::max),
            stage_events: hist,
            mean_ppd: recs.map(|r| r.ppd).sum::<f64>() / n,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// kWh/°C.
    pub mean: f64,
    pub std: f64,
    pub offset: f64,
    pub n: usize,
}

/// Through-origin least squares of daily energy on `delta_t - offset`, over the
/// days with `delta_t > offset`.
pub fn fit_energy_line(records: &[DailyRecord], offset: f64) -> Result<SlopeEstimate> {
    let pts: Vec<(f64, f64)> =
        records.iter().filter(|r| r.delta_t > offset).map(|r| (r.delta_t - offset, r.energy_kwh)).collect();
    fit_through_origin(&pts, offset)
}

pub fn fit_through_origin(pts: &[(f64, f64)], offset: f64) -> Result<SlopeEstimate> {
    if pts.is_empty() {
        return Err(Error::NoHeatingData(format!("every day has a temperature difference at or below {offset} °C")));
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} heating-regime days; need at least 3", pts.len())));
    }
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let m = sxy / sxx;
    let ssr: f64 = pts.iter().map(|(x, y)| (y - m * x).powi(2)).sum();
    let s2 = ssr / (pts.len() - 1) as f64;
    Ok(SlopeEstimate { mean: m, std: (s2 / sxx).sqrt(), offset, n: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    /// %.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalDist {
    pub mean: f64,
    pub std: f64,
}

impl NormalDist {
    pub fn point(mean: f64) -> Self {
        Self { mean, std: 0.0 }
    }

    /// Normal with the given symmetric central interval at `z` standard scores.
    pub fn from_interval(low: f64, high: f64, z: f64) -> Self {
        Self { mean: 0.5 * (low + high), std: 0.5 * (high - low) / z }
    }

    fn sampler(&self) -> Result<Normal<f64>> {
        Normal::new(self.mean, self.std)
            .map_err(|e| Error::InvalidParameter(format!("bad normal ({}, {}): {e}", self.mean, self.std)))
    }
}

impl From<SlopeEstimate> for NormalDist {
    fn from(s: SlopeEstimate) -> Self {
        Self { mean: s.mean, std: s.std }
    }
}

fn positive_draw(d: &Normal<f64>, r: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = d.sample(r);
        if v > 0.0 {
            return v;
        }
    }
}

/// Runs `n` draws in fixed-size chunks, each on its own seeded stream, and
/// concatenates them in chunk order.
fn chunked_draws<F>(n: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(rng::derive_indexed(seed, c as u64));
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| draw(&mut r)).collect()
        })
        .collect();
    parts.concat()
}

/// Mean accumulated about the first value, so identical draws return that value exactly.
fn shifted_mean(v: &[f64]) -> f64 {
    let x0 = v[0];
    x0 + v.iter().map(|x| x - x0).sum::<f64>() / v.len() as f64
}

/// Linearly interpolated `p`-quantile; reorders `v`.
fn quantile(v: &mut [f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut a, upper) = v.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return a;
    }
    let b = upper.iter().copied().fold(f64::INFINITY, f64::min);
    a + (b - a) * frac
}

fn summarise(mut v: Vec<f64>) -> SavingsReport {
    let mean = shifted_mean(&v);
    let ci_low = quantile(&mut v, 0.025);
    let ci_high = quantile(&mut v, 0.975);
    SavingsReport { mean, ci_low, ci_high, samples: v.len() }
}

/// Distribution of `1 - m / m_base` in percent.
pub fn relative_savings_mc(mpc: NormalDist, base: NormalDist, n: usize, seed: u64) -> Result<SavingsReport> {
    if n < 10_000 {
        return Err(Error::InvalidParameter(format!("need at least 10^4 draws, got {n}")));
    }
    if !(base.mean > 0.0) {
        return Err(Error::InvalidParameter("baseline slope mean must be positive".into()));
    }
    let (dm, db) = (mpc.sampler()?, base.sampler()?);
    let draws = chunked_draws(n, seed, |r| {
        let m = dm.sample(r);
        let mb = positive_draw(&db, r);
        100.0 * (1.0 - m / mb)
    });
    Ok(summarise(draws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalInputs {
    /// Daily mean outdoor temperatures, °C.
    pub daily_t_out: Vec<f64>,
    pub t_ref: f64,
    /// Indoor temperature reduction under MPC, °C.
    pub gamma: NormalDist,
    pub m: NormalDist,
    pub m_base: NormalDist,
    /// $/kWh.
    pub pi_e: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalReport {
    /// Cost savings, $.
    pub savings: SavingsReport,
    /// Savings relative to baseline cost, %.
    pub relative: SavingsReport,
}

/// Baseline and MPC seasonal energy for one parameter draw, kWh.
pub fn seasonal_energy(temps: &[f64], t_ref: f64, gamma: f64, m: f64, m_base: f64, offset: f64) -> (f64, f64) {
    let mut base = 0.0;
    let mut mpc = 0.0;
    for &t in temps {
        base += m_base * (t_ref - t - offset).max(0.0);
        mpc += m * (t_ref - gamma - t - offset).max(0.0);
    }
    (base, mpc)
}

pub fn seasonal_savings_mc(inp: &SeasonalInputs, n: usize, seed: u64) -> Result<SeasonalReport> {
    if inp.daily_t_out.is_empty() {
        return Err(Error::InsufficientData("no daily temperatures".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let (dg, dm, db) = (inp.gamma.sampler()?, inp.m.sampler()?, inp.m_base.sampler()?);
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(rng::derive_indexed(seed, c as u64));
            let len = CHUNK.min(n - c * CHUNK);
            let mut cost = Vec::with_capacity(len);
            let mut rel = Vec::with_capacity(len);
            for _ in 0..len {
                let g = dg.sample(&mut r);
                let m = positive_draw(&dm, &mut r);
                let mb = positive_draw(&db, &mut r);
                let (base, mpc) = seasonal_energy(&inp.daily_t_out, inp.t_ref, g, m, mb, inp.offset);
                cost.push(inp.pi_e * (base - mpc));
                rel.push(if base > 0.0 { 100.0 * (base - mpc) / base } else { 0.0 });
            }
            (cost, rel)
        })
        .collect();
    let (cost, rel): (Vec<Vec<f64>>, Vec<Vec<f64>>) = parts.into_iter().unzip();
    Ok(SeasonalReport { savings: summarise(cost.concat()), relative: summarise(rel.concat()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatistics {
    pub policy: String,
    /// Event counts by highest stage reached (index 0 is stage 1).
    pub counts: Vec<usize>,
    pub total_events: usize,
    /// Share of events reaching the top stage; absent without events.
    pub top_stage_share: Option<f64>,
    /// Mean element power while any element is on, kW; absent without element use.
    pub conditional_mean_element_kw: Option<f64>,
}

pub fn stage_statistics(records: &[DailyRecord], n_stages: usize) -> StageStatistics {
    let mut counts = vec![0; n_stages];
    let (mut kwh, mut hours) = (0.0, 0.0);
    for r in records {
        for (c, e) in counts.iter_mut().zip(&r.stage_events) {
            *c += e;
        }
        kwh += r.element_kwh;
        hours += r.element_on_h;
    }
    let total: usize = counts.iter().sum();
    StageStatistics {
        policy: records.first().map(|r| r.policy.clone()).unwrap_or_default(),
        top_stage_share: (total > 0).then(|| *counts.last().unwrap_or(&0) as f64 / total as f64),
        conditional_mean_element_kw: (hours > 0.0).then(|| kwh / hours),
        counts,
        total_events: total,
    }
}

pub fn write_daily_csv<W: Write>(out: W, records: &[DailyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n_stages = records.iter().map(|r| r.stage_events.len()).max().unwrap_or(0);
    let mut header: Vec<String> = [
        "date",
        "policy",
        "delta_t_c",
        "mean_t_out_c",
        "energy_kwh",
        "element_kwh",
        "element_on_h",
        "peak_kw",
        "mean_ppd_pct",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n_stages).map(|s| format!("events_stage{s}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.date.to_string(),
            r.policy.clone(),
            format!("{:.4}", r.delta_t),
            format!("{:.4}", r.mean_t_out),
            format!("{:.4}", r.energy_kwh),
            format!("{:.4}", r.element_kwh),
            format!("{:.4}", r.element_on_h),
            format!("{:.4}", r.peak_kw),
            format!("{:.4}", r.mean_ppd),
        ];
        row.extend((0..n_stages).map(|s| r.stage_events.get(s).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stage_histogram_csv<W: Write>(out: W, stats: &[StageStatistics], stage_kw: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "stage", "element_kw", "events", "share"])?;
    for s in stats {
        for (i, &c) in s.counts.iter().enumerate() {
            let share = if s.total_events > 0 { c as f64 / s.total_events as f64 } else { 0.0 };
            w.write_record([
                s.policy.clone(),
                (i + 1).to_string(),
                stage_kw.get(i).map_or(String::new(), |p| format!("{p:.2}")),
                c.to_string(),
                format!("{share:.4}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
