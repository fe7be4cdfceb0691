//! Receding-horizon supervisory controller.
//!
//! Each hour the controller plans indoor temperatures, thermal powers and
//! electric powers over the horizon by solving a linear program: the convex
//! power map enters through its two affine majorants, the peak through one
//! epigraph variable, and comfort through slack variables bounded by the band
//! half-width. The first planned temperature is sent to the thermostat.

use std::io::Write;

use chrono::{Duration, NaiveDateTime};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus};
use crate::model::EffectiveModel;
use crate::plant::electric_power_convex;
use crate::series::hour_of_day;

const PLAN_TOL: f64 = 1e-6;
/// Extra band width tried, in order, when the plan is infeasible.
const RELAX_STEPS: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    /// $/kg.
    pub pi_g: f64,
    /// kg/kWh per step.
    pub mu: Vec<f64>,
}

/// One open-loop problem. Entry `l` of every trajectory belongs to the step
/// from `T(l)` to `T(l+1)`; `t_ref[l]` and `pi_t[l]` score `T(l+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSpec {
    pub model: EffectiveModel,
    pub t0: f64,
    pub theta: Vec<f64>,
    pub q_e: Vec<f64>,
    pub eta: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub pi_d: f64,
    pub pi_t: Vec<f64>,
    pub t_ref: Vec<f64>,
    pub delta: f64,
    pub p_bar: f64,
    pub p_r_bar: f64,
    pub emission: Option<Emission>,
    /// Set-point tracking time constant, h.
    pub tau: Option<f64>,
    /// Largest planned temperature change, °C/h.
    pub rate_limit: Option<f64>,
}

impl OcpSpec {
    pub fn horizon(&self) -> usize {
        self.theta.len()
    }

    pub fn dt(&self) -> f64 {
        self.model.dt
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.horizon();
        if l == 0 {
            return Err(Error::InvalidParameter("horizon must be at least one step".into()));
        }
        let mut lens = vec![
            ("q_e", self.q_e.len()),
            ("eta", self.eta.len()),
            ("pi_e", self.pi_e.len()),
            ("pi_t", self.pi_t.len()),
            ("t_ref", self.t_ref.len()),
        ];
        if let Some(e) = &self.emission {
            lens.push(("mu", e.mu.len()));
        }
        for (name, n) in lens {
            if n != l {
                return Err(Error::DimensionMismatch(format!("{name} has length {n}, horizon is {l}")));
            }
        }
        if self.pi_e.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidParameter("energy price must be strictly positive in every step".into()));
        }
        if !(self.pi_d >= 0.0) || self.pi_t.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter("prices must be non-negative".into()));
        }
        if let Some(e) = &self.emission {
            if !(e.pi_g >= 0.0) || e.mu.iter().any(|&m| !(m >= 0.0)) {
                return Err(Error::InvalidParameter("emission price and intensity must be non-negative".into()));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("comfort half-width must be >= 0, got {}", self.delta)));
        }
        if !(self.p_bar > 0.0) || !(self.p_r_bar >= 0.0) {
            return Err(Error::InvalidParameter("plant capacities must be positive".into()));
        }
        if self.eta.iter().any(|&e| !(e >= 1.0)) {
            return Err(Error::InvalidParameter("COP forecasts must be at least 1".into()));
        }
        if self.tau.is_some_and(|t| !(t > 0.0)) || self.rate_limit.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::InvalidParameter("tau and rate limit must be positive when set".into()));
        }
        let finite = [&self.theta, &self.q_e, &self.t_ref].iter().all(|v| v.iter().all(|x| x.is_finite()));
        if !finite || !self.t0.is_finite() {
            return Err(Error::InvalidParameter("forecasts must be finite".into()));
        }
        Ok(())
    }

    fn capacity(&self, l: usize) -> f64 {
        self.eta[l] * self.p_bar + self.p_r_bar
    }

    fn energy_weight(&self, l: usize) -> f64 {
        self.pi_e[l] + self.emission.as_ref().map_or(0.0, |e| e.pi_g * e.mu[l])
    }

    /// Same problem with every price multiplied by `lambda`.
    pub fn scaled_prices(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.pi_e.iter_mut().for_each(|p| *p *= lambda);
        s.pi_t.iter_mut().for_each(|p| *p *= lambda);
        s.pi_d *= lambda;
        if let Some(e) = s.emission.as_mut() {
            e.pi_g *= lambda;
        }
        s
    }
}

/// Column layout of the LP built by [`build_ocp_lp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcpIndex {
    pub horizon: usize,
    pub tracking: bool,
}

impl OcpIndex {
    /// `T(l+1)`.
    pub fn t(&self, l: usize) -> usize {
        l
    }
    pub fn q(&self, l: usize) -> usize {
        self.horizon + l
    }
    pub fn p(&self, l: usize) -> usize {
        2 * self.horizon + l
    }
    pub fn z(&self) -> usize {
        3 * self.horizon
    }
    pub fn s(&self, l: usize) -> usize {
        3 * self.horizon + 1 + l
    }
    /// Commanded set-point `u(l)`, present only with tracking.
    pub fn u(&self, l: usize) -> usize {
        4 * self.horizon + 1 + l
    }
    pub fn n_vars(&self) -> usize {
        4 * self.horizon + 1 + if self.tracking { self.horizon } else { 0 }
    }
}

pub fn build_ocp_lp(spec: &OcpSpec) -> Result<(LpProblem, OcpIndex)> {
    spec.validate()?;
    let l_len = spec.horizon();
    let ix = OcpIndex { horizon: l_len, tracking: spec.tau.is_some() };
    let mut lp = LpProblem::new(ix.n_vars());
    let (a, r, dt) = (spec.model.a, spec.model.r, spec.dt());

    lp.c[ix.z()] = spec.pi_d;
    for l in 0..l_len {
        lp.c[ix.p(l)] = dt * spec.energy_weight(l);
        lp.c[ix.s(l)] = dt * spec.pi_t[l];
        lp.set_bounds(ix.t(l), f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(ix.q(l), 0.0, spec.capacity(l));
        lp.set_bounds(ix.s(l), 0.0, spec.delta);
        if ix.tracking {
            lp.set_bounds(ix.u(l), f64::NEG_INFINITY, f64::INFINITY);
        }
    }

    for l in 0..l_len {
        // T(l+1) - a T(l) - (1-a) R Q(l) = (1-a)(theta + R q_e)
        let mut rhs = (1.0 - a) * (spec.theta[l] + r * spec.q_e[l]);
        let mut row = vec![(ix.t(l), 1.0), (ix.q(l), -(1.0 - a) * r)];
        if l == 0 {
            rhs += a * spec.t0;
        } else {
            row.push((ix.t(l - 1), -a));
        }
        lp.add_eq(&row, rhs);

        if let Some(tau) = spec.tau {
            let b = (-dt / tau).exp();
            let mut row = vec![(ix.t(l), 1.0), (ix.u(l), -(1.0 - b))];
            let rhs = if l == 0 {
                b * spec.t0
            } else {
                row.push((ix.t(l - 1), -b));
                0.0
            };
            lp.add_eq(&row, rhs);
        }

        let eta = spec.eta[l];
        lp.add_le(&[(ix.q(l), 1.0 / eta), (ix.p(l), -1.0)], 0.0);
        lp.add_le(&[(ix.q(l), 1.0), (ix.p(l), -1.0)], (eta - 1.0) * spec.p_bar);
        lp.add_le(&[(ix.p(l), 1.0), (ix.z(), -1.0)], 0.0);
        lp.add_le(&[(ix.t(l), 1.0), (ix.s(l), -1.0)], spec.t_ref[l]);
        lp.add_le(&[(ix.t(l), -1.0), (ix.s(l), -1.0)], -spec.t_ref[l]);

        if let Some(rate) = spec.rate_limit {
            let lim = rate * dt;
            if l == 0 {
                lp.add_le(&[(ix.t(0), 1.0)], spec.t0 + lim);
                lp.add_le(&[(ix.t(0), -1.0)], lim - spec.t0);
            } else {
                lp.add_le(&[(ix.t(l), 1.0), (ix.t(l - 1), -1.0)], lim);
                lp.add_le(&[(ix.t(l), -1.0), (ix.t(l - 1), 1.0)], lim);
            }
        }
    }
    Ok((lp, ix))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanStatus {
    Optimal,
    /// Solved after widening the band to `delta`.
    ComfortRelaxed { delta: f64 },
    /// No band width worked; the plan tracks the reference.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub demand: f64,
    pub energy: f64,
    pub discomfort: f64,
    pub emission: f64,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.demand + self.energy + self.discomfort + self.emission
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpPlan {
    pub status: PlanStatus,
    /// Planned indoor temperatures `T(1..=L)`.
    pub temperatures: Vec<f64>,
    /// Commands for the thermostat; equal to `temperatures` without tracking.
    pub setpoints: Vec<f64>,
    pub q_c: Vec<f64>,
    pub p: Vec<f64>,
    pub peak: f64,
    pub breakdown: ObjectiveBreakdown,
    /// Band half-width the plan satisfies.
    pub delta: f64,
}

fn breakdown(spec: &OcpSpec, temps: &[f64], p: &[f64], peak: f64) -> ObjectiveBreakdown {
    let dt = spec.dt();
    let mut b = ObjectiveBreakdown { demand: spec.pi_d * peak, ..Default::default() };
    for l in 0..spec.horizon() {
        b.energy += dt * spec.pi_e[l] * p[l];
        b.discomfort += dt * spec.pi_t[l] * (temps[l] - spec.t_ref[l]).abs();
        if let Some(e) = &spec.emission {
            b.emission += dt * e.pi_g * e.mu[l] * p[l];
        }
    }
    b
}

fn check_plan(spec: &OcpSpec, plan: &OcpPlan) -> Result<()> {
    let (a, r) = (spec.model.a, spec.model.r);
    let mut prev = spec.t0;
    for l in 0..spec.horizon() {
        let t = prev * a + (1.0 - a) * (spec.theta[l] + r * (plan.q_c[l] + spec.q_e[l]));
        let fail = |what: &str| Err(Error::PlanInvariant(format!("step {l}: {what}")));
        if (t - plan.temperatures[l]).abs() > PLAN_TOL {
            return fail(&format!("dynamics residual {:e}", t - plan.temperatures[l]));
        }
        let exact = electric_power_convex(plan.q_c[l], spec.eta[l], spec.p_bar);
        if (exact - plan.p[l]).abs() > PLAN_TOL {
            return fail(&format!("power epigraph not tight (P = {}, map gives {exact})", plan.p[l]));
        }
        if plan.q_c[l] < -PLAN_TOL || plan.q_c[l] > spec.capacity(l) + PLAN_TOL {
            return fail(&format!("thermal power {} outside capacity", plan.q_c[l]));
        }
        if (plan.temperatures[l] - spec.t_ref[l]).abs() > plan.delta + PLAN_TOL {
            return fail("temperature outside comfort band");
        }
        prev = plan.temperatures[l];
    }
    Ok(())
}

fn solve_at_delta(spec: &OcpSpec) -> Result<Option<OcpPlan>> {
    let (lp, ix) = build_ocp_lp(spec)?;
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(None),
        LpStatus::Unbounded => return Err(Error::Lp("open-loop problem reported unbounded".into())),
        LpStatus::IterationLimit => return Err(Error::Lp("open-loop problem hit the iteration limit".into())),
    }
    let l_len = spec.horizon();
    let temperatures: Vec<f64> = (0..l_len).map(|l| sol.x[ix.t(l)]).collect();
    let q_c: Vec<f64> = (0..l_len).map(|l| sol.x[ix.q(l)]).collect();
    let p: Vec<f64> = (0..l_len).map(|l| sol.x[ix.p(l)]).collect();
    let setpoints = if ix.tracking { (0..l_len).map(|l| sol.x[ix.u(l)]).collect() } else { temperatures.clone() };
    let peak = p.iter().fold(0.0f64, |m, v| m.max(*v));
    let plan = OcpPlan {
        status: PlanStatus::Optimal,
        breakdown: breakdown(spec, &temperatures, &p, peak),
        temperatures,
        setpoints,
        q_c,
        p,
        peak,
        delta: spec.delta,
    };
    check_plan(spec, &plan)?;
    Ok(Some(plan))
}

/// Reference-tracking plan used when no band width is feasible.
fn fallback_plan(spec: &OcpSpec) -> OcpPlan {
    let (a, r) = (spec.model.a, spec.model.r);
    let l_len = spec.horizon();
    let mut temps = Vec::with_capacity(l_len);
    let mut q_c = Vec::with_capacity(l_len);
    let mut prev = spec.t0;
    for l in 0..l_len {
        let want = ((spec.t_ref[l] - a * prev) / (1.0 - a) - spec.theta[l]) / r - spec.q_e[l];
        let q = want.clamp(0.0, spec.capacity(l));
        let t = a * prev + (1.0 - a) * (spec.theta[l] + r * (q + spec.q_e[l]));
        temps.push(t);
        q_c.push(q);
        prev = t;
    }
    let p: Vec<f64> = (0..l_len).map(|l| electric_power_convex(q_c[l], spec.eta[l], spec.p_bar)).collect();
    let peak = p.iter().fold(0.0f64, |m, v| m.max(*v));
    let delta = temps.iter().zip(&spec.t_ref).fold(spec.delta, |m, (t, r)| m.max((t - r).abs()));
    OcpPlan {
        status: PlanStatus::Fallback,
        breakdown: breakdown(spec, &temps, &p, peak),
        setpoints: spec.t_ref.clone(),
        temperatures: temps,
        q_c,
        p,
        peak,
        delta,
    }
}

/// Solves the open-loop problem, widening the band when it is infeasible.
pub fn solve_ocp(spec: &OcpSpec) -> Result<OcpPlan> {
    if let Some(plan) = solve_at_delta(spec)? {
        return Ok(plan);
    }
    for extra in RELAX_STEPS {
        let relaxed = OcpSpec { delta: spec.delta + extra, ..spec.clone() };
        if let Some(mut plan) = solve_at_delta(&relaxed)? {
            plan.status = PlanStatus::ComfortRelaxed { delta: relaxed.delta };
            return Ok(plan);
        }
    }
    warn!("open-loop problem infeasible even with the band widened by 2 °C; tracking the reference");
    Ok(fallback_plan(spec))
}

pub fn write_plan_csv<W: Write>(w: W, plan: &OcpPlan) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "setpoint_c", "q_c_kw", "p_kw"])?;
    for l in 0..plan.setpoints.len() {
        out.write_record([
            (l + 1).to_string(),
            format!("{:.4}", plan.setpoints[l]),
            format!("{:.4}", plan.q_c[l]),
            format!("{:.4}", plan.p[l]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortInputs {
    pub air_temp: f64,
    pub radiant_temp: f64,
    /// %.
    pub rh: f64,
    /// m/s.
    pub air_speed: f64,
    /// met.
    pub met: f64,
    /// clo.
    pub clo: f64,
}

impl ComfortInputs {
    pub fn validate(&self) -> Result<()> {
        if !(0.8..=4.0).contains(&self.met) || !(0.0..=2.0).contains(&self.clo) || !(self.air_speed >= 0.0) {
            return Err(Error::InvalidParameter(format!("comfort inputs out of range: {self:?}")));
        }
        if !(0.0..=100.0).contains(&self.rh) || !self.air_temp.is_finite() || !self.radiant_temp.is_finite() {
            return Err(Error::InvalidParameter(format!("comfort inputs out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Fixed occupant and room conditions; mean radiant temperature follows air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComfortContext {
    pub rh: f64,
    pub air_speed: f64,
    pub met: f64,
    pub clo: f64,
}

impl Default for ComfortContext {
    fn default() -> Self {
        Self { rh: 40.0, air_speed: 0.1, met: 1.1, clo: 1.0 }
    }
}

impl ComfortContext {
    pub fn inputs(&self, t: f64) -> ComfortInputs {
        ComfortInputs { air_temp: t, radiant_temp: t, rh: self.rh, air_speed: self.air_speed, met: self.met, clo: self.clo }
    }

    pub fn ppd_at(&self, t: f64) -> Result<f64> {
        Ok(ppd(pmv(&self.inputs(t))?))
    }
}

const PMV_MAX_ITER: usize = 150;

/// Fanger predicted mean vote.
pub fn pmv(c: &ComfortInputs) -> Result<f64> {
    c.validate()?;
    let (ta, tr, vel) = (c.air_temp, c.radiant_temp, c.air_speed);
    let pa = c.rh * 10.0 * (16.6536 - 4030.183 / (ta + 235.0)).exp();
    let icl = 0.155 * c.clo;
    let m = c.met * 58.15;
    let mw = m;
    let fcl = if icl <= 0.078 { 1.0 + 1.29 * icl } else { 1.05 + 0.645 * icl };
    let hcf = 12.1 * vel.sqrt();
    let taa = ta + 273.0;
    let tra = tr + 273.0;
    let tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1);

    let p1 = icl * fcl;
    let p2 = p1 * 3.96;
    let p3 = p1 * 100.0;
    let p4 = p1 * taa;
    let p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0).powi(4);
    let mut xn = tcla / 100.0;
    let mut xf = tcla / 50.0;
    let mut hc = hcf;
    let mut n = 0;
    while (xn - xf).abs() > 0.00015 {
        xf = (xf + xn) / 2.0;
        let hcn = 2.38 * (100.0 * xf - taa).abs().powf(0.25);
        hc = hcf.max(hcn);
        xn = (p5 + p4 * hc - p2 * xf.powi(4)) / (100.0 + p3 * hc);
        n += 1;
        if n > PMV_MAX_ITER {
            return Err(Error::PmvNonConvergence(PMV_MAX_ITER));
        }
    }
    let tcl = 100.0 * xn - 273.0;

    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);
    let hl2 = if mw > 58.15 { 0.42 * (mw - 58.15) } else { 0.0 };
    let hl3 = 1.7e-5 * m * (5867.0 - pa);
    let hl4 = 0.0014 * m * (34.0 - ta);
    let hl5 = 3.96 * fcl * (xn.powi(4) - (tra / 100.0).powi(4));
    let hl6 = fcl * hc * (tcl - ta);
    let ts = 0.303 * (-0.036 * m).exp() + 0.028;
    Ok(ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6))
}

/// Predicted percentage dissatisfied, %.
pub fn ppd(pmv: f64) -> f64 {
    100.0 - 95.0 * (-(0.03353 * pmv.powi(4) + 0.2179 * pmv.powi(2))).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    /// Candidate base prices, ascending, $/°C/h.
    pub grid: Vec<f64>,
    pub day_multiplier: f64,
    pub night_multiplier: f64,
    /// Day hours are `[day_start, day_end)`.
    pub day_start: f64,
    pub day_end: f64,
    /// %.
    pub ppd_ceiling: f64,
    pub retune_hours: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            grid: crate::ident::log_grid(0.01, 5.0, 12),
            day_multiplier: 1.1,
            night_multiplier: 0.2,
            day_start: 7.0,
            day_end: 22.0,
            ppd_ceiling: 10.0,
            retune_hours: 12.0,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        let ascending = self.grid.windows(2).all(|w| w[1] > w[0]);
        if self.grid.is_empty() || !ascending || self.grid[0] <= 0.0 {
            return Err(Error::InvalidParameter("tuning grid must be non-empty, positive and ascending".into()));
        }
        if !(self.day_multiplier > 0.0) || !(self.night_multiplier > 0.0) {
            return Err(Error::InvalidParameter("price multipliers must be positive".into()));
        }
        if !(self.retune_hours > 0.0) {
            return Err(Error::InvalidParameter("retune interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    pub pi_t_base: f64,
    pub last_tuned: Option<NaiveDateTime>,
    pub config: TuningConfig,
}

impl TuningState {
    pub fn new(config: TuningConfig) -> Self {
        Self { pi_t_base: config.grid[0], last_tuned: None, config }
    }

    pub fn due(&self, now: NaiveDateTime) -> bool {
        self.last_tuned.is_none_or(|t| {
            (now - t).num_seconds() as f64 >= self.config.retune_hours * 3600.0 - 1e-6
        })
    }
}

pub fn day_night_modulation(pi_t_base: f64, hour: f64, cfg: &TuningConfig) -> f64 {
    let day = hour >= cfg.day_start && hour < cfg.day_end;
    pi_t_base * if day { cfg.day_multiplier } else { cfg.night_multiplier }
}

/// Time-average PPD of a planned temperature trajectory.
pub fn mean_planned_ppd(temps: &[f64], comfort: &ComfortContext) -> Result<f64> {
    let mut sum = 0.0;
    for &t in temps {
        sum += comfort.ppd_at(t)?;
    }
    Ok(sum / temps.len() as f64)
}

/// Lowest grid price whose plan keeps the time-average PPD under the ceiling.
/// `hours[l]` is the hour of day scored by step `l`.
pub fn tune_discomfort_price(
    template: &OcpSpec,
    hours: &[f64],
    tuning: &TuningConfig,
    comfort: &ComfortContext,
) -> Result<f64> {
    tuning.validate()?;
    if hours.len() != template.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "{} hours for a horizon of {}",
            hours.len(),
            template.horizon()
        )));
    }
    let outcomes: Vec<bool> = tuning
        .grid
        .par_iter()
        .map(|&price| {
            let spec = OcpSpec {
                pi_t: hours.iter().map(|&h| day_night_modulation(price, h, tuning)).collect(),
                ..template.clone()
            };
            match solve_ocp(&spec).and_then(|plan| mean_planned_ppd(&plan.temperatures, comfort)) {
                Ok(v) => v <= tuning.ppd_ceiling,
                Err(e) => {
                    warn!("tuning candidate {price} failed: {e}");
                    false
                }
            }
        })
        .collect();
    match outcomes.iter().position(|&ok| ok) {
        Some(i) => Ok(tuning.grid[i]),
        None => {
            let max = *tuning.grid.last().unwrap();
            warn!("no discomfort price meets the PPD ceiling; using the grid maximum {max}");
            Ok(max)
        }
    }
}

/// Forecast-dependent inputs for one controller call.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonInputs {
    pub theta: Vec<f64>,
    pub q_e: Vec<f64>,
    pub eta: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub t_ref: Vec<f64>,
    pub mu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSettings {
    pub model: EffectiveModel,
    pub pi_d: f64,
    pub delta: f64,
    pub p_bar: f64,
    pub p_r_bar: f64,
    pub pi_g: Option<f64>,
    pub tau: Option<f64>,
    pub rate_limit: Option<f64>,
    pub comfort: ComfortContext,
    /// Fixed base discomfort price; disables tuning when set.
    pub fixed_pi_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcController {
    pub settings: MpcSettings,
    pub tuning: TuningState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcDecision {
    pub setpoint: f64,
    pub plan: OcpPlan,
    /// Modulated price for the first step.
    pub pi_t: f64,
    pub retuned: bool,
}

impl MpcController {
    pub fn new(settings: MpcSettings, tuning: TuningConfig) -> Result<Self> {
        tuning.validate()?;
        let mut state = TuningState::new(tuning);
        if let Some(p) = settings.fixed_pi_t {
            state.pi_t_base = p;
        }
        Ok(Self { settings, tuning: state })
    }

    fn spec(&self, t_now: f64, inputs: &HorizonInputs, pi_t: Vec<f64>) -> OcpSpec {
        let s = &self.settings;
        OcpSpec {
            model: s.model,
            t0: t_now,
            theta: inputs.theta.clone(),
            q_e: inputs.q_e.clone(),
            eta: inputs.eta.clone(),
            pi_e: inputs.pi_e.clone(),
            pi_d: s.pi_d,
            pi_t,
            t_ref: inputs.t_ref.clone(),
            delta: s.delta,
            p_bar: s.p_bar,
            p_r_bar: s.p_r_bar,
            emission: match (s.pi_g, &inputs.mu) {
                (Some(pi_g), Some(mu)) => Some(Emission { pi_g, mu: mu.clone() }),
                _ => None,
            },
            tau: s.tau,
            rate_limit: s.rate_limit,
        }
    }
}

/// One receding-horizon call at `clock`; retunes first when due.
pub fn mpc_step(
    ctl: &mut MpcController,
    t_now: f64,
    inputs: &HorizonInputs,
    clock: NaiveDateTime,
) -> Result<MpcDecision> {
    let l_len = inputs.theta.len();
    let lens = [inputs.q_e.len(), inputs.eta.len(), inputs.pi_e.len(), inputs.t_ref.len()];
    if l_len == 0 || lens.iter().any(|&n| n != l_len) {
        return Err(Error::ForecastCoverage(format!("forecast slices have lengths {l_len} and {lens:?}")));
    }
    let dt = ctl.settings.model.dt;
    let hours: Vec<f64> = (0..l_len)
        .map(|l| hour_of_day(&(clock + Duration::seconds(((l + 1) as f64 * dt * 3600.0).round() as i64))))
        .collect();
    let mut retuned = false;
    if ctl.settings.fixed_pi_t.is_none() && ctl.tuning.due(clock) {
        let template = ctl.spec(t_now, inputs, vec![0.0; l_len]);
        ctl.tuning.pi_t_base = tune_discomfort_price(&template, &hours, &ctl.tuning.config, &ctl.settings.comfort)?;
        ctl.tuning.last_tuned = Some(clock);
        retuned = true;
    }
    let pi_t: Vec<f64> =
        hours.iter().map(|&h| day_night_modulation(ctl.tuning.pi_t_base, h, &ctl.tuning.config)).collect();
    let first_pi_t = pi_t[0];
    let spec = ctl.spec(t_now, inputs, pi_t);
    let plan = solve_ocp(&spec)?;
    Ok(MpcDecision { setpoint: plan.setpoints[0], plan, pi_t: first_pi_t, retuned })
}
