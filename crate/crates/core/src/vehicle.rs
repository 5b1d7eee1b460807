//! Longitudinal point-mass dynamics.
//!
//! The state is `[s, v]`; the control `u` is traction (or braking) force per
//! unit mass. Resistances are aerodynamic drag, rolling friction and grade.
//! Integration is forward Euler, and velocity is clamped at zero because
//! rolling resistance only opposes motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    pub drag_coeff: f64,
    /// kg/m^3
    pub air_density: f64,
    /// m^2
    pub frontal_area: f64,
    pub rolling_coeff: f64,
    /// rad
    pub road_grade: f64,
    /// m/s^2, per-unit-mass force bounds
    pub u_min: f64,
    pub u_max: f64,
    /// rotating-mass factor applied in the power demand
    pub mass_factor: f64,
    pub eta_transmission: f64,
    pub eta_motor: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1000.0,
            drag_coeff: 0.3,
            air_density: 1.205,
            frontal_area: 2.25,
            rolling_coeff: 0.008,
            road_grade: 0.0,
            u_min: -3.0,
            u_max: 2.5,
            mass_factor: 1.05,
            eta_transmission: 0.9,
            eta_motor: 0.95,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.frontal_area > 0.0
            && self.air_density > 0.0
            && self.drag_coeff >= 0.0
            && self.rolling_coeff >= 0.0
            && self.mass_factor >= 1.0
            && self.u_min < 0.0
            && 0.0 < self.u_max
            && self.eta_transmission > 0.0
            && self.eta_transmission <= 1.0
            && self.eta_motor > 0.0
            && self.eta_motor <= 1.0
            && self.road_grade.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("vehicle params {self:?}")))
        }
    }

    /// Aerodynamic coefficient `½ C_d ρ_a A` (N per (m/s)^2).
    pub fn aero(&self) -> f64 {
        0.5 * self.drag_coeff * self.air_density * self.frontal_area
    }

    /// Per-unit-mass drag coefficient: `p̂` contains `-drag_per_mass * v²`.
    pub fn drag_per_mass(&self) -> f64 {
        self.aero() / self.mass
    }

    /// Recuperation efficiency used by the speed planner's fuel surrogate.
    pub fn eta_recuperation(&self) -> f64 {
        self.eta_motor * self.eta_transmission
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub s: f64,
    pub v: f64,
    pub t: f64,
}

impl VehicleState {
    pub fn new(s: f64, v: f64, t: f64) -> Self {
        Self { s, v, t }
    }
}

/// Passive (uncontrolled) acceleration: drag, rolling friction and grade.
pub fn passive_accel(params: &VehicleParams, v: f64) -> f64 {
    -params.drag_per_mass() * v * v
        - params.rolling_coeff * GRAVITY
        - GRAVITY * params.road_grade.sin()
}

/// d p̂ / dv
pub fn passive_accel_dv(params: &VehicleParams, v: f64) -> f64 {
    -2.0 * params.drag_per_mass() * v
}

/// One forward-Euler step. Velocity is clamped at zero.
/// Largest speed from which a vehicle braking at `brake` after `reaction`
/// seconds still stops within `room` metres, with its derivative in `room`.
pub fn safe_speed(room: f64, brake: f64, reaction: f64) -> (f64, f64) {
    if room <= 0.0 || brake <= 0.0 {
        return (0.0, 0.0);
    }
    let r = (reaction * reaction + 2.0 * room / brake).sqrt();
    (brake * (r - reaction), 1.0 / r)
}

pub fn step_dynamics(
    state: VehicleState,
    params: &VehicleParams,
    u: f64,
    dt: f64,
) -> Result<VehicleState> {
    if !(state.s.is_finite() && state.v.is_finite() && state.t.is_finite()) {
        return Err(Error::NonFinite("vehicle state"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("control"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
    }
    Ok(euler(state, params, u, dt))
}

#[inline]
pub(crate) fn euler(state: VehicleState, params: &VehicleParams, u: f64, dt: f64) -> VehicleState {
    let v_next = (state.v + (passive_accel(params, state.v) + u) * dt).max(0.0);
    VehicleState {
        s: state.s + state.v * dt,
        v: v_next,
        t: state.t + dt,
    }
}
