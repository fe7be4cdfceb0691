//! Heating equipment: COP curve, electric-power map, device-level thermostat
//! emulation and a memoryless defrost model.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the capacity check, kW.
const CAPACITY_TOL: f64 = 1e-6;
const EPS_H: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    /// Heat pump electric capacity including compressor and fans, kW.
    pub p_bar: f64,
    /// Total resistance element capacity, kW.
    pub p_r_bar: f64,
    /// Ascending element stage powers, kW. The last equals `p_r_bar`.
    pub stages: Vec<f64>,
    /// COP = c0 + c1 T_out + c2 T_out².
    pub cop_coeffs: [f64; 3],
    pub cop_floor: f64,
    /// Declared outdoor operating range of the COP curve, °C.
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl PlantConfig {
    /// 4.5 kW heat pump, 19.2 kW of elements in three stages. The COP curve
    /// passes through the rated seasonal COP of 2.5 at about 1 °C.
    pub fn reference() -> Self {
        Self {
            p_bar: 4.5,
            p_r_bar: 19.2,
            stages: vec![9.6, 14.4, 19.2],
            cop_coeffs: [2.45, 0.055, 0.0004],
            cop_floor: 1.2,
            t_min: -25.0,
            t_max: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.p_bar > 0.0) {
            return bad(format!("p_bar must be positive, got {}", self.p_bar));
        }
        if self.stages.is_empty() {
            return bad("element stages must be non-empty".into());
        }
        if self.stages.windows(2).any(|w| !(w[1] > w[0])) || !(self.stages[0] > 0.0) {
            return bad(format!("element stages must be positive and ascending: {:?}", self.stages));
        }
        if (self.stages[self.stages.len() - 1] - self.p_r_bar).abs() > 1e-9 {
            return bad(format!("last stage {} must equal p_r_bar {}", self.stages[self.stages.len() - 1], self.p_r_bar));
        }
        if !(self.cop_floor > 1.0) {
            return bad(format!("cop_floor must exceed 1, got {}", self.cop_floor));
        }
        if !(self.t_max > self.t_min) {
            return bad("COP operating range is empty".into());
        }
        // The quadratic's minimum over the range is at an endpoint or the vertex.
        let [_, c1, c2] = self.cop_coeffs;
        let mut probes = vec![self.t_min, self.t_max];
        if c2 != 0.0 {
            let v = -c1 / (2.0 * c2);
            if v > self.t_min && v < self.t_max {
                probes.push(v);
            }
        }
        if probes.iter().any(|&t| !self.raw_cop(t).is_finite()) {
            return bad("COP coefficients must be finite".into());
        }
        Ok(())
    }

    fn raw_cop(&self, t: f64) -> f64 {
        let [c0, c1, c2] = self.cop_coeffs;
        c0 + c1 * t + c2 * t * t
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Element power of a 1-based stage index; 0 means off.
    pub fn stage_power(&self, stage: usize) -> f64 {
        if stage == 0 {
            0.0
        } else {
            self.stages[stage - 1]
        }
    }
}

/// Heat pump COP at the given outdoor temperature.
pub fn cop(cfg: &PlantConfig, t_out: f64) -> f64 {
    let t = if t_out < cfg.t_min || t_out > cfg.t_max {
        warn!(
            "outdoor temperature {t_out:.2} °C outside COP range [{}, {}]; clamping",
            cfg.t_min, cfg.t_max
        );
        t_out.clamp(cfg.t_min, cfg.t_max)
    } else {
        t_out
    };
    cfg.raw_cop(t).max(cfg.cop_floor)
}

/// Heat pump thermal capacity plus elements.
pub fn plant_capacity(cfg: &PlantConfig, eta: f64) -> f64 {
    eta * cfg.p_bar + cfg.p_r_bar
}

/// Electric power drawn to deliver `q_c`, in the convex form
/// `q_c/eta + (1 - 1/eta) max(0, q_c - eta p_bar)`.
pub fn electric_power(cfg: &PlantConfig, q_c: f64, eta: f64) -> Result<f64> {
    let capacity = plant_capacity(cfg, eta);
    if q_c > capacity + CAPACITY_TOL {
        return Err(Error::DemandExceedsCapacity { demand: q_c, capacity });
    }
    if q_c < -CAPACITY_TOL {
        return Err(Error::InvalidParameter(format!("thermal power must be non-negative, got {q_c}")));
    }
    Ok(electric_power_convex(q_c, eta, cfg.p_bar))
}

pub fn electric_power_convex(q_c: f64, eta: f64, p_bar: f64) -> f64 {
    q_c / eta + (1.0 - 1.0 / eta) * (q_c - eta * p_bar).max(0.0)
}

/// Heat pump alone up to its capacity, elements at unity COP beyond it.
pub fn electric_power_piecewise(q_c: f64, eta: f64, p_bar: f64) -> f64 {
    if q_c <= eta * p_bar {
        q_c / eta
    } else {
        p_bar + (q_c - eta * p_bar)
    }
}

/// Tuning of the emulated device-level thermostat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceControllerConfig {
    /// Proportional gain as a fraction of heat pump thermal capacity per °C.
    pub kp_fraction: f64,
    /// Integral time, h. `None` gives a pure proportional loop.
    pub integral_time_h: Option<f64>,
    /// Tracking error above which element staging is considered, °C.
    pub stage_up_threshold: f64,
    /// Time the error must persist above the threshold before each stage-up, h.
    pub stage_dwell_h: f64,
    pub min_on_h: f64,
    pub min_off_h: f64,
    /// Elements switch off once the error falls to this value, °C.
    pub stage_down_error: f64,
}

impl Default for DeviceControllerConfig {
    fn default() -> Self {
        Self {
            kp_fraction: 0.5,
            integral_time_h: Some(0.75),
            stage_up_threshold: 1.0,
            stage_dwell_h: 0.25,
            min_on_h: 0.25,
            min_off_h: 0.25,
            stage_down_error: 0.0,
        }
    }
}

impl DeviceControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kp_fraction > 0.0
            && self.integral_time_h.is_none_or(|t| t > 0.0)
            && self.stage_up_threshold > 0.0
            && self.stage_dwell_h >= 0.0
            && self.min_on_h >= 0.0
            && self.min_off_h >= 0.0
            && self.stage_down_error < self.stage_up_threshold;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid device controller config: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefrostConfig {
    /// Frost can form only below this outdoor temperature, °C.
    pub t_out_ceiling: f64,
    pub rh_low: f64,
    pub rh_high: f64,
    /// Expected events per day while conditions stay in the band.
    pub events_per_day: f64,
    pub duration_h: f64,
    /// 1-based element stage run during defrost.
    pub element_stage: usize,
}

impl Default for DefrostConfig {
    fn default() -> Self {
        Self {
            t_out_ceiling: 0.0,
            rh_low: 70.0,
            rh_high: 80.0,
            events_per_day: 2.7,
            duration_h: 0.25,
            element_stage: 1,
        }
    }
}

impl DefrostConfig {
    pub fn validate(&self, plant: &PlantConfig) -> Result<()> {
        let ok = self.duration_h > 0.0
            && self.events_per_day >= 0.0
            && self.events_per_day <= 24.0 / self.duration_h
            && self.rh_low <= self.rh_high
            && self.element_stage <= plant.n_stages();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid defrost config: {self:?}")))
        }
    }

    pub fn in_band(&self, t_out: f64, rh: f64) -> bool {
        t_out < self.t_out_ceiling && rh >= self.rh_low && rh <= self.rh_high
    }

    /// Per-step start probability.
    pub fn step_probability(&self, dt: f64) -> f64 {
        (self.events_per_day * dt / 24.0).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Active element stage, 0 = none.
    pub stage: usize,
    /// Time spent in the current stage, h.
    pub stage_on_h: f64,
    /// Remaining minimum off-time per stage (index 0 is stage 1), h.
    pub off_timers: Vec<f64>,
    /// How long the tracking error has stayed above the stage-up threshold, h.
    pub above_threshold_h: f64,
    /// Integral term of the heat pump loop, kW.
    pub integral_kw: f64,
    pub defrost_active: bool,
    /// Defrost time left after the current step, h.
    pub defrost_remaining_h: f64,
}

impl DeviceState {
    pub fn new(plant: &PlantConfig) -> Self {
        Self {
            stage: 0,
            stage_on_h: 0.0,
            off_timers: vec![0.0; plant.n_stages()],
            above_threshold_h: 0.0,
            integral_kw: 0.0,
            defrost_active: false,
            defrost_remaining_h: 0.0,
        }
    }
}

/// What the equipment delivered over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceOutput {
    /// Net thermal power into the house, kW.
    pub q_c: f64,
    /// Compressor and fans, kW.
    pub p_hp: f64,
    /// Resistance elements, kW.
    pub p_elem: f64,
    /// Element stage that ran this step.
    pub stage: usize,
}

impl DeviceOutput {
    pub fn p_total(&self) -> f64 {
        self.p_hp + self.p_elem
    }
}

/// One step of the emulated manufacturer thermostat.
///
/// The heat pump follows a PI loop on the tracking error, saturating at
/// `eta p_bar`. Elements stage up one at a time after the error has stayed above
/// the threshold for the dwell time, and all switch off once the error is gone
/// and the current stage has met its minimum on-time. During defrost the heat
/// pump runs reversed at full capacity and at least `defrost.element_stage` runs.
#[allow(clippy::too_many_arguments)]
pub fn device_controller_step(
    state: &DeviceState,
    setpoint: f64,
    t_in: f64,
    cfg: &PlantConfig,
    dev: &DeviceControllerConfig,
    defrost: &DefrostConfig,
    eta: f64,
    dt: f64,
) -> (DeviceOutput, DeviceState) {
    let mut next = state.clone();
    let hp_cap = eta * cfg.p_bar;
    let err = setpoint - t_in;
    let kp = dev.kp_fraction * hp_cap;

    for t in next.off_timers.iter_mut() {
        *t = (*t - dt).max(0.0);
    }
    if next.stage > 0 {
        next.stage_on_h += dt;
    }

    // Heat pump loop.
    let q_hp = if state.defrost_active {
        -hp_cap
    } else {
        if let Some(ti) = dev.integral_time_h {
            next.integral_kw = (next.integral_kw + kp / ti * err * dt).clamp(0.0, hp_cap);
        }
        (kp * err + next.integral_kw).clamp(0.0, hp_cap)
    };
    let p_hp = q_hp.abs() / eta;

    // Element staging.
    if next.stage > 0 && err <= dev.stage_down_error && next.stage_on_h + EPS_H >= dev.min_on_h {
        for k in 0..next.stage {
            next.off_timers[k] = dev.min_off_h;
        }
        next.stage = 0;
        next.stage_on_h = 0.0;
        next.above_threshold_h = 0.0;
    } else if err > dev.stage_up_threshold {
        let can_step = next.stage < cfg.n_stages()
            && next.above_threshold_h + EPS_H >= dev.stage_dwell_h
            && next.off_timers[next.stage] <= EPS_H
            && (next.stage == 0 || next.stage_on_h + EPS_H >= dev.min_on_h);
        if can_step {
            next.stage += 1;
            next.stage_on_h = 0.0;
            next.above_threshold_h = 0.0;
        }
        next.above_threshold_h += dt;
    } else {
        next.above_threshold_h = 0.0;
    }

    let stage = if state.defrost_active {
        next.stage.max(defrost.element_stage)
    } else {
        next.stage
    };
    let p_elem = cfg.stage_power(stage);
    let out = DeviceOutput {
        q_c: q_hp + p_elem,
        p_hp,
        p_elem,
        stage,
    };
    (out, next)
}

/// Advance the defrost state machine by one step. Returns whether a new event
/// started. One uniform draw is consumed on every call so the random stream
/// stays aligned across policies.
pub fn defrost_step<R: Rng + ?Sized>(
    state: &DeviceState,
    t_out: f64,
    rh: f64,
    rng: &mut R,
    d: &DefrostConfig,
    dt: f64,
) -> (bool, DeviceState) {
    let mut next = state.clone();
    let u: f64 = rng.random();
    if state.defrost_remaining_h > EPS_H {
        next.defrost_active = true;
        next.defrost_remaining_h = (state.defrost_remaining_h - dt).max(0.0);
        return (false, next);
    }
    if d.in_band(t_out, rh) && u < d.step_probability(dt) {
        next.defrost_active = true;
        next.defrost_remaining_h = (d.duration_h - dt).max(0.0);
        (true, next)
    } else {
        next.defrost_active = false;
        next.defrost_remaining_h = 0.0;
        (false, next)
    }
}
