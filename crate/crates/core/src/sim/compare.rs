use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSaving {
    pub id: usize,
    pub travel_time_a: f64,
    pub travel_time_b: f64,
    pub travel_time_saving_pct: f64,
    pub fuel_a_g: f64,
    pub fuel_b_g: f64,
    pub fuel_saving_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub controller: String,
    pub mean_travel_time: f64,
    pub mean_corrected_fuel_g: f64,
    pub mean_wall_clock_s: f64,
    pub timeouts: usize,
}

/// Savings of arm `a` relative to arm `b`, positive when `a` is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub a: ArmSummary,
    pub b: ArmSummary,
    /// per vehicle, averaged over seeds
    pub vehicles: Vec<VehicleSaving>,
    pub travel_time_saving_pct: f64,
    pub fuel_saving_pct: f64,
    pub wall_clock_saving_pct: f64,
}

fn saving(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        (b - a) / b * 100.0
    }
}

fn summary(runs: &[Metrics]) -> ArmSummary {
    let n = runs.len() as f64;
    let travel: Vec<f64> = runs
        .iter()
        .flat_map(|m| m.vehicles.iter().map(|v| v.travel_time.unwrap_or(f64::NAN)))
        .collect();
    ArmSummary {
        controller: runs.first().map(|m| m.controller.clone()).unwrap_or_default(),
        mean_travel_time: travel.iter().sum::<f64>() / travel.len().max(1) as f64,
        mean_corrected_fuel_g: runs.iter().map(|m| m.fleet_mean_corrected_fuel_g).sum::<f64>() / n,
        mean_wall_clock_s: runs.iter().map(|m| m.wall_clock_s).sum::<f64>() / n,
        timeouts: runs.iter().filter(|m| m.timeout).count(),
    }
}

/// Pair runs of two arms seed by seed. Both arms must cover the same seeds
/// with the same fleet.
pub fn compare(a: &[Metrics], b: &[Metrics]) -> Result<Comparison> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::GeometryMismatch(format!(
            "arms have {} and {} runs",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if x.seed != y.seed || x.vehicles.len() != y.vehicles.len() {
            return Err(Error::GeometryMismatch(format!(
                "run for seed {} ({} vehicles) paired with seed {} ({} vehicles)",
                x.seed,
                x.vehicles.len(),
                y.seed,
                y.vehicles.len()
            )));
        }
    }
    let fleet = a[0].vehicles.len();
    let n = a.len() as f64;
    let vehicles = (0..fleet)
        .map(|id| {
            let mean = |runs: &[Metrics], f: &dyn Fn(&super::VehicleMetrics) -> f64| {
                runs.iter().map(|m| f(&m.vehicles[id])).sum::<f64>() / n
            };
            let ta = mean(a, &|v| v.travel_time.unwrap_or(f64::NAN));
            let tb = mean(b, &|v| v.travel_time.unwrap_or(f64::NAN));
            let fa = mean(a, &|v| v.corrected_fuel_g);
            let fb = mean(b, &|v| v.corrected_fuel_g);
            VehicleSaving {
                id,
                travel_time_a: ta,
                travel_time_b: tb,
                travel_time_saving_pct: saving(ta, tb),
                fuel_a_g: fa,
                fuel_b_g: fb,
                fuel_saving_pct: saving(fa, fb),
            }
        })
        .collect();
    let sa = summary(a);
    let sb = summary(b);
    Ok(Comparison {
        seeds: a.iter().map(|m| m.seed).collect(),
        travel_time_saving_pct: saving(sa.mean_travel_time, sb.mean_travel_time),
        fuel_saving_pct: saving(sa.mean_corrected_fuel_g, sb.mean_corrected_fuel_g),
        wall_clock_saving_pct: saving(sa.mean_wall_clock_s, sb.mean_wall_clock_s),
        a: sa,
        b: sb,
        vehicles,
    })
}

impl Comparison {
    /// Plain-text table of per-vehicle and fleet savings.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "a = {}, b = {}, seeds {:?}", self.a.controller, self.b.controller, self.seeds);
        let _ = writeln!(
            out,
            "{:>7} {:>10} {:>10} {:>8} {:>10} {:>10} {:>8}",
            "vehicle", "time a", "time b", "save %", "fuel a", "fuel b", "save %"
        );
        for v in &self.vehicles {
            let _ = writeln!(
                out,
                "{:>7} {:>10.1} {:>10.1} {:>8.1} {:>10.2} {:>10.2} {:>8.1}",
                v.id,
                v.travel_time_a,
                v.travel_time_b,
                v.travel_time_saving_pct,
                v.fuel_a_g,
                v.fuel_b_g,
                v.fuel_saving_pct
            );
        }
        let _ = writeln!(
            out,
            "{:>7} {:>10.1} {:>10.1} {:>8.1} {:>10.2} {:>10.2} {:>8.1}",
            "fleet",
            self.a.mean_travel_time,
            self.b.mean_travel_time,
            self.travel_time_saving_pct,
            self.a.mean_corrected_fuel_g,
            self.b.mean_corrected_fuel_g,
            self.fuel_saving_pct
        );
        let _ = writeln!(
            out,
            "wall clock: a {:.2} s, b {:.2} s, saving {:.1} %",
            self.a.mean_wall_clock_s, self.b.mean_wall_clock_s, self.wall_clock_saving_pct
        );
        out
    }
}
