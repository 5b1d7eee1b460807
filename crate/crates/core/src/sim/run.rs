use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{soc_corrected_fuel, Metrics, VehicleMetrics};
use super::scenario::{ControllerPair, HigherLevel, LowerLevel, Scenario};
use super::trace::TraceRow;
use super::training::TrainedModels;
use crate::baselines::{cruise_control_accel, demand_forecast, mpc_energy_baseline};
use crate::error::{Error, Result};
use crate::mpc::{plan_step, HorizonPlan};
use crate::powertrain::power_demand;
use crate::rl::{act, charge_neutral_action};
use crate::spat::{light_phase, target_velocity, LightState};
use crate::vehicle::{step_dynamics, VehicleState};

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRow>,
    pub metrics: Metrics,
}

struct Vehicle {
    state: VehicleState,
    soc: f64,
    fuel_g: f64,
    active: bool,
    plan: Option<HorizonPlan>,
    m: VehicleMetrics,
}

#[derive(Clone, Copy)]
struct Command {
    u: f64,
    status: Option<crate::mpc::SolverStatus>,
    iterations: usize,
    residual: f64,
    window_violation: bool,
}

/// Closed-loop run of one controller pair on one seed. Each tick: speed
/// windows and higher-level control, vehicle dynamics, power demand from the
/// realized motion, lower-level throttle, then the powertrain and battery.
/// Vehicles leave the road once they pass the goal.
pub fn run_scenario(
    scn: &Scenario,
    controller: ControllerPair,
    seed: u64,
    models: Option<&TrainedModels>,
) -> Result<SimOutput> {
    scn.validate()?;
    let needs_models = matches!(controller.lower, LowerLevel::Rl | LowerLevel::MpcBaseline);
    let models = match models {
        Some(m) if m.tpms.len() >= scn.fleet_size && m.policies.len() >= scn.fleet_size => Some(m),
        Some(m) => {
            return Err(Error::GeometryMismatch(format!(
                "models cover {} vehicles, scenario has {}",
                m.tpms.len().min(m.policies.len()),
                scn.fleet_size
            )))
        }
        None if needs_models => {
            return Err(Error::InvalidParam(format!(
                "controller {controller} needs trained lower-level models"
            )))
        }
        None => None,
    };

    let wall = Instant::now();
    let mut higher_s = 0.0;
    let mut lower_s = 0.0;
    let dt = scn.dt;
    let params = scn.vehicle();
    let pt = &scn.powertrain;
    let corridor = &scn.corridor;

    let mut fleet: Vec<Vehicle> = scn
        .initial_fleet(seed)
        .into_iter()
        .enumerate()
        .map(|(id, state)| Vehicle {
            state,
            soc: scn.soc_initial,
            fuel_g: 0.0,
            active: true,
            plan: None,
            m: VehicleMetrics {
                id,
                travel_time: None,
                distance: 0.0,
                raw_fuel_g: 0.0,
                corrected_fuel_g: 0.0,
                soc_initial: scn.soc_initial,
                soc_final: scn.soc_initial,
                stops: 0,
                min_velocity: state.v,
                red_crossings: 0,
                window_violation_ticks: 0,
                degraded_solves: 0,
                cold_states: 0,
                powertrain_violations: 0,
            },
        })
        .collect();

    let max_ticks = (scn.time_cap / dt).round() as usize;
    let mut trace = Vec::new();
    let mut tick = 0;
    while tick < max_ticks && fleet.iter().any(|v| v.active) {
        let t = tick as f64 * dt;
        let ids: Vec<usize> = (0..fleet.len()).filter(|&i| fleet[i].active).collect();
        for &i in &ids {
            fleet[i].state.t = t;
        }

        let h0 = Instant::now();
        let commands: Vec<Command> = match controller.higher {
            HigherLevel::Mpc => {
                let states: Vec<VehicleState> = ids.iter().map(|&i| fleet[i].state).collect();
                let warm: Vec<Option<HorizonPlan>> =
                    ids.iter().map(|&i| fleet[i].plan.take()).collect();
                let plans = plan_step(&states, &warm, corridor, params, &scn.mpc)?;
                let cmds = plans
                    .iter()
                    .map(|p| Command {
                        u: p.controls[0],
                        status: Some(p.status),
                        iterations: p.iterations,
                        residual: p.residual,
                        window_violation: p.window_violation,
                    })
                    .collect();
                for (&i, p) in ids.iter().zip(plans) {
                    fleet[i].plan = Some(p);
                }
                cmds
            }
            HigherLevel::Cruise => ids
                .iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let st = fleet[i].state;
                    let lead = (pos > 0).then(|| {
                        let l = fleet[ids[pos - 1]].state;
                        (l.s, l.v)
                    });
                    let light = corridor
                        .next_light(st.s)
                        .map(|x| (x - st.s, light_phase(t, &corridor.timing)));
                    let v_tar = light
                        .and_then(|(d, _)| target_velocity(t, d, corridor).ok())
                        .unwrap_or(corridor.v_max);
                    Command {
                        u: cruise_control_accel(&st, v_tar, lead, light, &scn.cruise, params, dt),
                        status: None,
                        iterations: 0,
                        residual: 0.0,
                        window_violation: false,
                    }
                })
                .collect(),
        };
        higher_s += h0.elapsed().as_secs_f64();

        // realized motion and the demand it implies
        let mut motion = Vec::with_capacity(ids.len());
        for (&i, c) in ids.iter().zip(&commands) {
            let st = fleet[i].state;
            let next = step_dynamics(st, params, c.u, dt)?;
            let a = (next.v - st.v) / dt;
            let v_mid = st.v + 0.5 * a * dt;
            motion.push((next, a, v_mid, power_demand(v_mid, a, params)));
        }

        let l0 = Instant::now();
        let socs: Vec<f64> = ids.iter().map(|&i| fleet[i].soc).collect();
        let throttles: Vec<(f64, bool)> = ids
            .par_iter()
            .zip(motion.par_iter())
            .zip(socs.par_iter())
            .map(|((&i, &(_, _, v_mid, p_dem)), &soc)| -> Result<(f64, bool)> {
                Ok(match controller.lower {
                    LowerLevel::Rl => {
                        let pol = &models.expect("checked above").policies[i];
                        let d = act(&pol.q, &pol.spec, pt, soc, p_dem, v_mid);
                        (d.throttle, d.cold)
                    }
                    LowerLevel::MpcBaseline => {
                        let tpm = &models.expect("checked above").tpms[i];
                        let fc = demand_forecast(p_dem, v_mid, Some(tpm), &scn.energy_mpc);
                        let d = mpc_energy_baseline(soc, &fc, &scn.mdp, pt, &scn.energy_mpc)?;
                        (d.throttle, false)
                    }
                    LowerLevel::ChargeNeutral => {
                        let a = charge_neutral_action(&scn.mdp, pt, p_dem, v_mid);
                        (scn.mdp.throttle(a), false)
                    }
                })
            })
            .collect::<Result<_>>()?;
        lower_s += l0.elapsed().as_secs_f64();

        for (k, &i) in ids.iter().enumerate() {
            let (next, a, v_mid, p_dem) = motion[k];
            let (th, cold) = throttles[k];
            let c = commands[k];
            let veh = &mut fleet[i];
            let st = veh.state;
            let ps = pt.step(th, veh.soc, v_mid, p_dem, dt)?;
            let violations = pt.step_violations(th, veh.soc, v_mid, &ps).len();
            let fuel_rate = ps.engine.fuel_rate * 1e3;
            veh.fuel_g += fuel_rate * dt;

            let light = corridor.next_light(st.s);
            trace.push(TraceRow {
                t,
                id: i,
                s: st.s,
                v: st.v,
                u: c.u,
                a,
                soc: veh.soc,
                throttle: th,
                p_dem,
                p_en: ps.engine.power,
                p_b: ps.split.p_b,
                i_b: ps.current,
                fuel_rate,
                fuel_cum: veh.fuel_g,
                engine_speed: ps.engine.speed,
                engine_torque: ps.engine.torque,
                d_ia: light.map(|x| x - st.s),
                light_state: light.map(|_| light_phase(t, &corridor.timing)),
                solver_status: c.status,
                solver_iterations: c.iterations,
                solver_residual: c.residual,
                window_violation: c.window_violation,
                split_clamped: ps.split.clamped,
                cold_state: cold,
                violations,
            });

            let m = &mut veh.m;
            if st.v > 0.0 {
                for &x in corridor
                    .light_positions
                    .iter()
                    .filter(|&&x| st.s < x && x <= next.s)
                {
                    let crossing = t + (x - st.s) / st.v;
                    if light_phase(crossing, &corridor.timing) == LightState::Red {
                        m.red_crossings += 1;
                    }
                }
            }
            if st.v >= scn.stop_speed && next.v < scn.stop_speed {
                m.stops += 1;
            }
            m.min_velocity = m.min_velocity.min(next.v);
            m.window_violation_ticks += c.window_violation as usize;
            m.degraded_solves += c.status.is_some_and(|s| s.is_degraded()) as usize;
            m.cold_states += cold as usize;
            m.powertrain_violations += (violations > 0) as usize;

            veh.state = next;
            veh.soc = ps.soc;
            if next.s >= scn.goal {
                veh.active = false;
                m.travel_time = Some(t + dt);
            }
        }
        tick += 1;
    }

    let battery = &pt.battery;
    let mut vehicles: Vec<VehicleMetrics> = fleet
        .into_iter()
        .map(|v| {
            let mut m = v.m;
            m.distance = v.state.s;
            m.raw_fuel_g = v.fuel_g;
            m.soc_final = v.soc;
            m.corrected_fuel_g = soc_corrected_fuel(
                v.fuel_g,
                v.soc - m.soc_initial,
                battery,
                pt.engine_params(),
                params.eta_motor,
            );
            m
        })
        .collect();
    vehicles.sort_by_key(|m| m.id);
    let mut metrics = Metrics {
        controller: controller.to_string(),
        seed,
        timeout: vehicles.iter().any(|m| m.travel_time.is_none()),
        ticks: tick,
        vehicles,
        fleet_mean_travel_time: None,
        fleet_mean_corrected_fuel_g: 0.0,
        wall_clock_s: wall.elapsed().as_secs_f64(),
        higher_level_s: higher_s,
        lower_level_s: lower_s,
    };
    metrics.finish();
    Ok(SimOutput { trace, metrics })
}
