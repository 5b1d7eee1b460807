use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal-resistance equivalent circuit. Open-circuit voltage and
/// resistance are affine in SOC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryModel {
    pub capacity_ah: f64,
    pub nominal_voltage: f64,
    pub v_oc_base: f64,
    pub v_oc_slope: f64,
    pub r_in_base: f64,
    pub r_in_slope: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub i_min: f64,
    pub i_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            capacity_ah: 6.0,
            nominal_voltage: 250.0,
            v_oc_base: 235.0,
            v_oc_slope: 37.5,
            r_in_base: 0.12,
            r_in_slope: -0.04,
            p_min: -30e3,
            p_max: 30e3,
            i_min: -120.0,
            i_max: 120.0,
            soc_min: 0.4,
            soc_max: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryStep {
    pub soc: f64,
    /// A, positive when discharging
    pub current: f64,
    pub saturated: bool,
}

impl BatteryModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.capacity_ah > 0.0
            && self.soc_min < self.soc_max
            && self.p_min < self.p_max
            && self.i_min < self.i_max
            && [self.soc_min, self.soc_max]
                .iter()
                .all(|&s| self.v_oc(s) > 0.0 && self.r_in(s) > 0.0)
            && [self.soc_min, self.soc_max]
                .iter()
                .all(|&s| self.v_oc(s).powi(2) - 4.0 * self.r_in(s) * self.p_max >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("battery model {self:?}")))
        }
    }

    /// Coulombs.
    pub fn capacity_c(&self) -> f64 {
        self.capacity_ah * 3600.0
    }

    pub fn v_oc(&self, soc: f64) -> f64 {
        self.v_oc_base + self.v_oc_slope * soc
    }

    pub fn r_in(&self, soc: f64) -> f64 {
        self.r_in_base + self.r_in_slope * soc
    }

    pub fn current(&self, soc: f64, p_b: f64) -> Result<f64> {
        terminal_current(self.v_oc(soc), self.r_in(soc), p_b)
    }

    pub fn clamp_soc(&self, soc: f64) -> f64 {
        soc.clamp(self.soc_min, self.soc_max)
    }
}

/// `I = (V_oc - sqrt(V_oc^2 - 4 r P)) / 2r`.
pub fn terminal_current(v_oc: f64, r_in: f64, p_b: f64) -> Result<f64> {
    let disc = v_oc * v_oc - 4.0 * r_in * p_b;
    if disc.is_nan() || disc < 0.0 {
        return Err(Error::SqrtDomain(disc));
    }
    Ok((v_oc - disc.sqrt()) / (2.0 * r_in))
}

/// One Euler step of `dSOC/dt = -I / Q_b`.
pub fn battery_step(soc: f64, p_b: f64, model: &BatteryModel, dt: f64) -> Result<BatteryStep> {
    let current = model.current(soc, p_b)?;
    let raw = soc - current * dt / model.capacity_c();
    let clamped = model.clamp_soc(raw);
    Ok(BatteryStep {
        soc: clamped,
        current,
        saturated: clamped != raw,
    })
}
