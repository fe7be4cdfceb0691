//! Single-state thermal circuit of the house.
//!
//! The indoor node (air plus shallow mass) exchanges heat with a deep-mass node
//! held at a constant temperature `t_m` through `r_m`, and with outdoors
//! through `r_out`. Collapsing the two resistive branches gives an effective
//! boundary temperature and resistance, and with piecewise-constant inputs the
//! first-order ODE has the exact discrete update
//! `T(k+1) = a T(k) + (1 - a) [theta(k) + R (q_c(k) + q_e(k))]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identified RC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// Indoor to outdoor resistance, °C/kW.
    pub r_out: f64,
    /// Indoor to deep-mass resistance, °C/kW. May be `+inf` (open mass branch).
    pub r_m: f64,
    /// Indoor thermal capacitance, kWh/°C.
    pub c: f64,
    /// Deep-mass temperature, °C.
    pub t_m: f64,
}

impl ThermalParams {
    pub fn new(r_out: f64, r_m: f64, c: f64, t_m: f64) -> Result<Self> {
        let p = Self { r_out, r_m, c, t_m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_out > 0.0 && self.r_out.is_finite()) {
            return Err(Error::InvalidParameter(format!("r_out must be positive, got {}", self.r_out)));
        }
        if !(self.r_m > 0.0) {
            return Err(Error::InvalidParameter(format!("r_m must be positive, got {}", self.r_m)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        if !self.t_m.is_finite() {
            return Err(Error::InvalidParameter("t_m must be finite".into()));
        }
        Ok(())
    }
}

/// Discrete-time model on a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    /// Effective resistance, °C/kW.
    pub r: f64,
    /// Discrete dynamics parameter, in (0, 1).
    pub a: f64,
    /// Step length, h.
    pub dt: f64,
}

/// One step's state and inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInput {
    /// Indoor temperature, °C.
    pub t: f64,
    /// Effective boundary temperature, °C.
    pub theta: f64,
    /// Controlled HVAC thermal power, kW.
    pub q_c: f64,
    /// Exogenous thermal power, kW.
    pub q_e: f64,
}

/// Drivers of one step, without the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDrivers {
    pub theta: f64,
    pub q_c: f64,
    pub q_e: f64,
}

/// Resistance-weighted blend of mass and outdoor temperature.
pub fn effective_boundary_temperature(p: &ThermalParams, t_out: f64) -> f64 {
    if p.r_m.is_infinite() {
        return t_out;
    }
    (p.r_out * p.t_m + p.r_m * t_out) / (p.r_m + p.r_out)
}

/// Parallel combination of `r_m` and `r_out`.
pub fn effective_resistance(p: &ThermalParams) -> f64 {
    if p.r_m.is_infinite() {
        return p.r_out;
    }
    p.r_m * p.r_out / (p.r_m + p.r_out)
}

pub fn discretize(p: &ThermalParams, dt: f64) -> Result<EffectiveModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    p.validate()?;
    let r = effective_resistance(p);
    let a = (-dt / (r * p.c)).exp();
    Ok(EffectiveModel { r, a, dt })
}

impl EffectiveModel {
    /// Rebuild from a known `a` (as produced by the mass-parameter fit).
    pub fn from_parts(r: f64, a: f64, dt: f64) -> Result<Self> {
        if !(r > 0.0) || !(a > 0.0 && a < 1.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "effective model needs r > 0, 0 < a < 1, dt > 0 (r={r}, a={a}, dt={dt})"
            )));
        }
        Ok(Self { r, a, dt })
    }

    /// Capacitance implied by `a`: `C = -dt / (R ln a)`.
    pub fn capacitance(&self) -> f64 {
        -self.dt / (self.r * self.a.ln())
    }

    /// Thermal power that holds `t` fixed against `theta` and `q_e`.
    pub fn steady_hold_power(&self, t: f64, theta: f64, q_e: f64) -> f64 {
        (t - theta) / self.r - q_e
    }
}

pub fn step(m: &EffectiveModel, s: &StateInput) -> f64 {
    m.a * s.t + (1.0 - m.a) * (s.theta + m.r * (s.q_c + s.q_e))
}

/// Chains [`step`] over `inputs`; the result starts with `t0`.
pub fn simulate_trajectory(m: &EffectiveModel, t0: f64, inputs: &[StepDrivers]) -> Vec<f64> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(t0);
    let mut t = t0;
    for d in inputs {
        t = step(
            m,
            &StateInput {
                t,
                theta: d.theta,
                q_c: d.q_c,
                q_e: d.q_e,
            },
        );
        out.push(t);
    }
    out
}
