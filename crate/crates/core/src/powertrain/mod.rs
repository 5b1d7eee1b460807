//! Parallel hybrid plant: power demand at the wheels, engine operating point,
//! power balance through the motor, and battery state of charge.

mod battery;
mod engine;

use serde::{Deserialize, Serialize};

pub use battery::{battery_step, terminal_current, BatteryModel, BatteryStep};
pub use engine::{fuel_rate, EfficiencyMap, EngineModel, EngineOutput, EngineParams};

use crate::error::Result;
use crate::vehicle::{VehicleParams, GRAVITY};

/// Traction power at the wheels (W), SI units throughout. Negative when
/// braking.
pub fn power_demand(v: f64, a: f64, params: &VehicleParams) -> f64 {
    params.mass_factor * params.mass * a * v
        + params.aero() * v * v * v
        + params.mass * GRAVITY * (params.rolling_coeff + params.road_grade.sin()) * v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    /// battery terminal power after clamping (W)
    pub p_b: f64,
    /// power the balance asked of the battery before clamping
    pub p_b_request: f64,
    pub clamped: bool,
}

/// Battery power closing `P_dem = (P_en + P_b η) η_tr`. The motor
/// efficiency divides on discharge and multiplies on charge.
pub fn split_power(
    p_dem: f64,
    p_en: f64,
    params: &VehicleParams,
    battery: &BatteryModel,
) -> PowerSplit {
    let net = p_dem / params.eta_transmission - p_en;
    let p_b_request = if net >= 0.0 {
        net / params.eta_motor
    } else {
        net * params.eta_motor
    };
    let p_b = p_b_request.clamp(battery.p_min, battery.p_max);
    PowerSplit {
        p_b,
        p_b_request,
        clamped: p_b != p_b_request,
    }
}

/// Motor-side efficiency factor for a battery power direction.
pub fn motor_factor(p_b: f64, eta_motor: f64) -> f64 {
    if p_b >= 0.0 {
        eta_motor
    } else {
        1.0 / eta_motor
    }
}

/// `(P_en + P_b η_eff) η_tr`
pub fn recombine(p_en: f64, p_b: f64, params: &VehicleParams) -> f64 {
    (p_en + p_b * motor_factor(p_b, params.eta_motor)) * params.eta_transmission
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Soc,
    Throttle,
    EngineTorque,
    EngineSpeed,
    BatteryPower,
    BatteryCurrent,
}

/// Serializable parameter set for [`Powertrain`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PowertrainParams {
    pub vehicle: VehicleParams,
    pub engine: EngineParams,
    pub battery: BatteryModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PowertrainParams", into = "PowertrainParams")]
pub struct Powertrain {
    pub vehicle: VehicleParams,
    pub battery: BatteryModel,
    engine: EngineModel,
}

impl From<PowertrainParams> for Powertrain {
    fn from(p: PowertrainParams) -> Self {
        Self::new(p.vehicle, p.engine, p.battery)
    }
}

impl From<Powertrain> for PowertrainParams {
    fn from(p: Powertrain) -> Self {
        Self {
            vehicle: p.vehicle,
            engine: p.engine.params,
            battery: p.battery,
        }
    }
}

impl Default for Powertrain {
    fn default() -> Self {
        PowertrainParams::default().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowertrainStep {
    pub engine: EngineOutput,
    pub split: PowerSplit,
    pub current: f64,
    pub soc: f64,
    pub soc_saturated: bool,
}

impl Powertrain {
    pub fn new(vehicle: VehicleParams, engine: EngineParams, battery: BatteryModel) -> Self {
        Self {
            vehicle,
            battery,
            engine: EngineModel::new(engine),
        }
    }

    pub fn engine_model(&self) -> &EngineModel {
        &self.engine
    }

    pub fn engine_params(&self) -> &EngineParams {
        &self.engine.params
    }

    pub fn engine_output(&self, throttle: f64, v: f64) -> EngineOutput {
        self.engine_model().output(throttle, v)
    }

    /// Apply a throttle against a demand for one step.
    pub fn step(&self, throttle: f64, soc: f64, v: f64, p_dem: f64, dt: f64) -> Result<PowertrainStep> {
        let engine = self.engine_output(throttle, v);
        let split = split_power(p_dem, engine.power, &self.vehicle, &self.battery);
        let b = battery_step(soc, split.p_b, &self.battery, dt)?;
        Ok(PowertrainStep {
            engine,
            split,
            current: b.current,
            soc: b.soc,
            soc_saturated: b.saturated,
        })
    }

    /// Box-constraint check for the operating point a throttle implies.
    pub fn violations(&self, throttle: f64, soc: f64, v: f64, p_dem: f64) -> Vec<Violation> {
        let engine = self.engine_output(throttle.clamp(0.0, 1.0), v);
        let split = split_power(p_dem, engine.power, &self.vehicle, &self.battery);
        self.check(throttle, soc, v, &engine, &split)
    }

    /// Violations of an already evaluated step taken from `soc`.
    pub fn step_violations(
        &self,
        throttle: f64,
        soc: f64,
        v: f64,
        step: &PowertrainStep,
    ) -> Vec<Violation> {
        self.check(throttle, soc, v, &step.engine, &step.split)
    }

    fn check(
        &self,
        throttle: f64,
        soc: f64,
        v: f64,
        engine: &EngineOutput,
        split: &PowerSplit,
    ) -> Vec<Violation> {
        let mut out = Vec::new();
        let b = &self.battery;
        if !(b.soc_min..=b.soc_max).contains(&soc) {
            out.push(Violation::Soc);
        }
        if !(0.0..=1.0).contains(&throttle) {
            out.push(Violation::Throttle);
        }
        let em = self.engine_model();
        if engine.torque < 0.0 || engine.torque > em.max_torque(engine.speed) + 1e-9 {
            out.push(Violation::EngineTorque);
        }
        let ep = self.engine_params();
        if ep.coupling_ratio * v > ep.n_max + 1e-9 {
            out.push(Violation::EngineSpeed);
        }
        // regen beyond the charge limit goes to the friction brakes unless
        // the engine itself is pushing charge in
        let over_discharge = split.p_b_request > b.p_max;
        let over_charge = split.p_b_request < b.p_min && engine.power > 0.0;
        if over_discharge || over_charge {
            out.push(Violation::BatteryPower);
        }
        match b.current(b.clamp_soc(soc), split.p_b) {
            Ok(i) if (b.i_min..=b.i_max).contains(&i) => {}
            _ => out.push(Violation::BatteryCurrent),
        }
        out
    }

    pub fn feasible(&self, throttle: f64, soc: f64, v: f64, a: f64) -> Vec<Violation> {
        self.violations(throttle, soc, v, power_demand(v, a, &self.vehicle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demand_examples() {
        let p = VehicleParams::default();
        assert_eq!(power_demand(0.0, 2.0, &p), 0.0);
        assert!((power_demand(10.0, 0.5, &p) - 6441.4875).abs() < 1e-6);
        assert!((power_demand(10.0, -1.0, &p) - (-9308.5125)).abs() < 1e-6);
    }

    #[test]
    fn split_examples() {
        let p = VehicleParams::default();
        let b = BatteryModel::default();
        let s = split_power(5000.0 * 0.9, 5000.0, &p, &b);
        assert!(s.p_b.abs() < 1e-9);

        let s = split_power(6441.5, 5000.0, &p, &b);
        assert!((s.p_b - (6441.5 / 0.9 - 5000.0) / 0.95).abs() < 1e-9);
        assert!((s.p_b - 2270.8).abs() < 0.05);

        let s = split_power(-9308.5, 0.0, &p, &b);
        assert!((s.p_b - (-9308.5 / 0.9 * 0.95)).abs() < 1e-9);
        assert!((s.p_b - (-9825.6)).abs() < 0.05);
        assert!(!s.clamped);

        let s = split_power(80e3, 0.0, &p, &b);
        assert!(s.clamped && s.p_b == b.p_max);
    }

    #[test]
    fn feasibility_examples() {
        let pt = Powertrain::default();
        assert!(pt.feasible(0.5, 0.6, 10.0, 0.0).is_empty());
        assert!(pt.feasible(0.5, 0.39, 10.0, 0.0).contains(&Violation::Soc));
        assert!(pt.feasible(1.2, 0.6, 10.0, 0.0).contains(&Violation::Throttle));
        // 2.5 m/s^2 at 20 m/s with the engine off overdraws the battery
        let v = pt.feasible(0.0, 0.6, 20.0, 2.5);
        assert!(v.contains(&Violation::BatteryPower));
    }

    #[test]
    fn zero_battery_power_keeps_soc_constant() {
        let pt = Powertrain::default();
        let mut soc = 0.6;
        for _ in 0..1000 {
            soc = battery_step(soc, 0.0, &pt.battery, 0.5).unwrap().soc;
        }
        assert_eq!(soc, 0.6);
    }

    proptest::proptest! {
        #[test]
        fn balance_residual(p_dem in -25e3f64..25e3, th in 0.0f64..1.0, v in 0.5f64..20.0) {
            let pt = Powertrain::default();
            let e = pt.engine_output(th, v);
            let s = split_power(p_dem, e.power, &pt.vehicle, &pt.battery);
            let back = recombine(e.power, s.p_b_request, &pt.vehicle);
            proptest::prop_assert!((back - p_dem).abs() <= 1e-9 * p_dem.abs().max(1.0));
        }
    }
}
