//! Comparison controllers: a car-following cruise law that stops at red
//! lights, and a short-horizon energy MPC for the power split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::TransitionModel;
use crate::powertrain::Powertrain;
use crate::rl::MdpSpec;
use crate::spat::LightState;
use crate::vehicle::{passive_accel, safe_speed, VehicleParams, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CruiseConfig {
    /// velocity gain (1/s)
    pub k_v: f64,
    /// gap gain (1/s^2)
    pub k_g: f64,
    pub headway: f64,
    /// distance short of the stop line where the vehicle comes to rest (m)
    pub stop_margin: f64,
    /// deceleration at which a red-light stop is started (m/s^2)
    pub comfort_brake: f64,
    pub safe_gap: f64,
    pub lead_brake_margin: f64,
}

impl Default for CruiseConfig {
    fn default() -> Self {
        Self {
            k_v: 0.4,
            k_g: 0.1,
            headway: 1.5,
            stop_margin: 2.0,
            comfort_brake: 2.0,
            safe_gap: 6.0,
            lead_brake_margin: 0.5,
        }
    }
}

impl CruiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_v > 0.0 && self.k_g > 0.0 && self.headway >= 0.0 && self.comfort_brake > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("cruise config {self:?}")))
        }
    }
}

/// Velocity tracking plus a headway term, with the passive resistance fed
/// forward, capped for safe following and overridden by a stop controller
/// when the light ahead is red and a comfortable stop has to begin.
/// `lead` is the position and speed of the vehicle ahead; `light` the
/// distance to the next stop line and its current phase.
pub fn cruise_control_accel(
    state: &VehicleState,
    v_tar: f64,
    lead: Option<(f64, f64)>,
    light: Option<(f64, LightState)>,
    cfg: &CruiseConfig,
    params: &VehicleParams,
    dt: f64,
) -> f64 {
    let v = state.v;
    let ph = passive_accel(params, v);
    let mut u = cfg.k_v * (v_tar - v) - ph;
    if let Some((s_lead, v_lead)) = lead {
        let gap = s_lead - state.s;
        u += cfg.k_g * (gap - cfg.headway * v);
        let brake = -params.u_min;
        let room = (s_lead + v_lead * dt) - (state.s + v * dt)
            + v_lead * v_lead / (2.0 * (brake + cfg.lead_brake_margin))
            - cfg.safe_gap;
        let (v_safe, _) = safe_speed(room, brake, 1.5 * dt);
        u = u.min((v_safe - v) / dt - ph);
    }
    if let Some((d, LightState::Red)) = light {
        let room = d - cfg.stop_margin;
        if room <= 0.5 {
            if d >= 0.0 {
                u = params.u_min;
            }
        } else {
            let need = v * v / (2.0 * room);
            let envelope = v * v / (2.0 * cfg.comfort_brake) + v * dt;
            // too close to stop: carry on through
            if room <= envelope && need <= -params.u_min - ph {
                u = u.min(-need - ph);
            }
        }
    }
    u.clamp(params.u_min, params.u_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandForecast {
    /// conditional expectation under the transition model
    Expectation,
    /// current demand held over the horizon
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyMpcConfig {
    pub horizon: usize,
    pub forecast: DemandForecast,
    /// scale on the terminal SOC cost `chi (soc - target)^2 dt / (1 - discount)`;
    /// 0 leaves only the stage costs
    pub terminal_weight: f64,
}

impl Default for EnergyMpcConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            forecast: DemandForecast::Expectation,
            terminal_weight: 1.0,
        }
    }
}

/// Speed and demand per step of the energy horizon; the first entry is the
/// current, measured step.
pub fn demand_forecast(
    p_dem: f64,
    v: f64,
    tpm: Option<&TransitionModel>,
    cfg: &EnergyMpcConfig,
) -> Vec<(f64, f64)> {
    let mut out = vec![(v, p_dem)];
    let rest = cfg.horizon.saturating_sub(1);
    match (cfg.forecast, tpm) {
        (DemandForecast::Expectation, Some(m)) => {
            let (n, k) = crate::markov::quantize(p_dem, v, m.spec());
            out.extend(m.expected_demand(n, k, rest).into_iter().map(|p| (v, p)));
        }
        _ => out.extend(std::iter::repeat_n((v, p_dem), rest)),
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDecision {
    pub throttle: f64,
    pub action: usize,
    pub expected_cost: f64,
}

/// Dynamic programming over the SOC grid of `spec` for the forecast horizon;
/// the first step starts from the exact SOC. Returns the first throttle.
pub fn mpc_energy_baseline(
    soc: f64,
    forecast: &[(f64, f64)],
    spec: &MdpSpec,
    powertrain: &Powertrain,
    cfg: &EnergyMpcConfig,
) -> Result<EnergyDecision> {
    if forecast.is_empty() {
        return Err(Error::InvalidParam("empty demand forecast".into()));
    }
    spec.validate()?;
    let levels = spec.soc_levels;
    let terminal = |x: f64| {
        let d = x - spec.soc_target;
        cfg.terminal_weight * spec.chi * d * d * spec.dt / (1.0 - spec.discount)
    };
    let interp = |values: &[f64], x: f64| {
        let f = ((x - spec.soc_lo) / spec.soc_step()).clamp(0.0, (levels - 1) as f64);
        let i = (f.floor() as usize).min(levels - 2);
        let w = f - i as f64;
        values[i] * (1.0 - w) + values[i + 1] * w
    };
    let cost = |th: f64, x: f64, (v, p): (f64, f64)| -> (f64, f64) {
        match crate::rl::energy_step(th, x, v, p, powertrain, spec) {
            Ok((r, next, _)) => (r, next),
            Err(_) => (spec.penalty, x),
        }
    };

    let mut next_values: Vec<f64> = (0..levels).map(|l| terminal(spec.soc_value(l))).collect();
    for &step in forecast[1..].iter().rev() {
        let values: Vec<f64> = (0..levels)
            .map(|l| {
                let x = spec.soc_value(l);
                (0..spec.n_actions())
                    .map(|a| {
                        let (r, nx) = cost(spec.throttle(a), x, step);
                        r + interp(&next_values, nx)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        next_values = values;
    }

    let mut best = EnergyDecision {
        throttle: 0.0,
        action: 0,
        expected_cost: f64::INFINITY,
    };
    for a in 0..spec.n_actions() {
        let th = spec.throttle(a);
        let (r, nx) = cost(th, soc, forecast[0]);
        let total = r + if forecast.len() == 1 {
            terminal(nx.clamp(spec.soc_lo, spec.soc_hi))
        } else {
            interp(&next_values, nx)
        };
        if total < best.expected_cost {
            best = EnergyDecision {
                throttle: th,
                action: a,
                expected_cost: total,
            };
        }
    }
    Ok(best)
}
