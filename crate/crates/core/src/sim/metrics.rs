use serde::{Deserialize, Serialize};

use crate::powertrain::{BatteryModel, EngineParams};

/// Fuel after crediting (or debiting) the net change in battery charge at
/// the engine-to-battery charging efficiency `eta_peak * eta_motor`.
pub fn soc_corrected_fuel(
    raw_fuel_g: f64,
    delta_soc: f64,
    battery: &BatteryModel,
    engine: &EngineParams,
    eta_motor: f64,
) -> f64 {
    let eta_path = engine.eta_peak * eta_motor;
    raw_fuel_g - delta_soc * battery.capacity_c() * battery.nominal_voltage / (engine.lhv * eta_path) * 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub id: usize,
    /// first time the goal was reached; `None` on timeout
    pub travel_time: Option<f64>,
    pub distance: f64,
    pub raw_fuel_g: f64,
    pub corrected_fuel_g: f64,
    pub soc_initial: f64,
    pub soc_final: f64,
    /// entries into standstill
    pub stops: usize,
    pub min_velocity: f64,
    /// stop lines crossed while red
    pub red_crossings: usize,
    /// ticks where the speed window could not be met
    pub window_violation_ticks: usize,
    pub degraded_solves: usize,
    pub cold_states: usize,
    pub powertrain_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub controller: String,
    pub seed: u64,
    pub timeout: bool,
    pub ticks: usize,
    pub vehicles: Vec<VehicleMetrics>,
    pub fleet_mean_travel_time: Option<f64>,
    pub fleet_mean_corrected_fuel_g: f64,
    /// wall-clock seconds; not part of the deterministic output
    pub wall_clock_s: f64,
    pub higher_level_s: f64,
    pub lower_level_s: f64,
}

impl Metrics {
    pub(crate) fn finish(&mut self) {
        let n = self.vehicles.len() as f64;
        self.fleet_mean_travel_time = self
            .vehicles
            .iter()
            .map(|v| v.travel_time)
            .sum::<Option<f64>>()
            .map(|total| total / n);
        self.fleet_mean_corrected_fuel_g =
            self.vehicles.iter().map(|v| v.corrected_fuel_g).sum::<f64>() / n;
    }

    /// The metrics with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Metrics {
        Metrics {
            wall_clock_s: 0.0,
            higher_level_s: 0.0,
            lower_level_s: 0.0,
            ..self.clone()
        }
    }
}
