mod common;

use common::{lattice_oracle, random_instance};
use greenwave_core::mpc::{
    plan_step, schedule_weights, solve_horizon, stage_cost, wheel_power, HorizonProblem,
    LeadTrajectory, MpcConfig, MpcWeights, SolverStatus,
};
use greenwave_core::spat::{Corridor, LightState, SpeedWindow};
use greenwave_core::vehicle::{passive_accel, step_dynamics, VehicleParams, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn window(lo: f64, hi: f64, tar: f64) -> SpeedWindow {
    SpeedWindow {
        v_target: tar,
        v_lower: lo,
        v_upper: hi,
        window_index: 1,
        light_state: LightState::Green,
    }
}

#[test]
fn weight_schedule_endpoints() {
    let cfg = MpcConfig::default();
    let w = schedule_weights(&window(0.0, 20.0, 20.0), f64::INFINITY, 20.0, &cfg);
    assert_eq!((w.fuel, w.tracking, w.spacing, w.effort), (1.0, 0.0, 0.0, 0.05));
    let w = schedule_weights(&window(7.0, 7.0, 7.0), 0.0, 20.0, &cfg);
    assert_eq!((w.fuel, w.tracking, w.spacing), (0.0, 1.0, 0.5));
    let far = schedule_weights(&window(7.0, 7.0, 7.0), 1e6, 20.0, &cfg);
    assert!(far.spacing < 1e-12);
    let near = schedule_weights(&window(7.0, 7.0, 7.0), 5.0, 20.0, &cfg);
    let mid = schedule_weights(&window(7.0, 7.0, 7.0), 30.0, 20.0, &cfg);
    assert!(near.spacing > mid.spacing);
}

#[test]
fn stage_cost_examples() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let w = MpcWeights {
        fuel: 1.0,
        spacing: 1.0,
        tracking: 1.0,
        effort: 1.0,
    };
    assert_eq!(stage_cost(0.0, 0.0, 0.0, 0.0, None, 100.0, &w, &p, &cfg), 0.0);

    // v = 10, u = 0: 0.5*1.205*0.3*2.25*1000 + 1000*9.81*10*0.008
    let pw = wheel_power(10.0, 0.0, &p);
    assert!((pw - (406.6875 + 784.8)).abs() < 1e-9, "{pw}");
    let fuel_only = MpcWeights {
        fuel: 1.0,
        spacing: 0.0,
        tracking: 0.0,
        effort: 0.0,
    };
    let c = stage_cost(0.0, 10.0, 0.0, 10.0, None, 50.0, &fuel_only, &p, &cfg);
    let expect = pw / (0.9 * 42.5e6) * 1e3 * 0.5 / 50.0;
    assert!((c - expect).abs() < 1e-15);

    // braking adds the recuperation term with positive sign
    let braking = wheel_power(10.0, -1.0, &p);
    let eta_rec = 0.95 * 0.9;
    assert!((braking - pw - 10_000.0 * eta_rec).abs() < 1e-9);
}

#[test]
fn two_step_tracking_reaches_target_in_one_step() {
    let p = VehicleParams {
        u_min: -100.0,
        u_max: 100.0,
        ..VehicleParams::default()
    };
    let cfg = MpcConfig {
        horizon: 2,
        ..MpcConfig::default()
    };
    let w = MpcWeights {
        fuel: 0.0,
        spacing: 0.0,
        tracking: 1.0,
        effort: 0.0,
    };
    let x0 = VehicleState::new(0.0, 8.0, 0.0);
    let prob = HorizonProblem {
        x0,
        windows: vec![window(0.0, 20.0, 12.0); 2],
        weights: vec![w; 2],
        lead: None,
        params: &p,
        cfg: &cfg,
    };
    let plan = solve_horizon(&prob, None).unwrap();
    let expect = (12.0 - 8.0) / 0.5 - passive_accel(&p, 8.0);
    assert!((plan.controls[0] - expect).abs() < 1e-6, "{:?}", plan.controls);
    assert!((plan.velocities[1] - 12.0).abs() < 1e-6);
    assert!(plan.objective < 1e-10);
}

#[test]
fn gradients_match_central_differences() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let inst = random_instance(&mut rng, cfg.horizon, case % 2 == 0);
        let prob = inst.problem(&p, &cfg);
        // controls away from the fuel kink at u = 0
        let u: Vec<f64> = (0..cfg.horizon)
            .map(|_| {
                let x: f64 = rng.gen_range(0.1..1.5);
                if rng.gen_bool(0.5) {
                    x
                } else {
                    -x
                }
            })
            .collect();
        let g = prob.gradient(&u);
        for i in 0..u.len() {
            let h = 1e-6;
            let mut a = u.clone();
            let mut b = u.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (prob.objective(&a) - prob.objective(&b)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "case {case} i {i}: {} vs {fd}", g[i]);
        }

        let sig: Vec<f64> = (0..cfg.horizon).map(|_| rng.gen_range(0.1..0.9)).collect();
        let gs = prob.fraction_gradient(&sig);
        for i in 0..sig.len() {
            let h = 1e-6;
            let mut a = sig.clone();
            let mut b = sig.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (prob.fraction_objective(&a) - prob.fraction_objective(&b)) / (2.0 * h);
            let rel = (gs[i] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-3, "fractions case {case} i {i}: {} vs {fd}", gs[i]);
        }
    }
}

#[test]
fn plans_respect_bounds_and_windows() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..60 {
        let inst = random_instance(&mut rng, cfg.horizon, case % 3 == 0);
        let prob = inst.problem(&p, &cfg);
        let plan = solve_horizon(&prob, None).unwrap();
        let mut st = inst.x0;
        for (j, &u) in plan.controls.iter().enumerate() {
            assert!(u >= p.u_min && u <= p.u_max, "u {u}");
            st = step_dynamics(st, &p, u, cfg.dt).unwrap();
            assert_eq!(st.v, plan.velocities[j + 1]);
            assert_eq!(st.s, plan.positions[j + 1]);
            if !plan.window_violation {
                let w = &inst.windows[j];
                assert!(st.v >= w.v_lower - 1e-6 && st.v <= w.v_upper + 1e-6);
            }
        }
    }
}

#[test]
fn matches_lattice_oracle_on_short_horizons() {
    let p = VehicleParams::default();
    let cfg = MpcConfig {
        horizon: 5,
        ..MpcConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..8 {
        let inst = random_instance(&mut rng, 5, case % 2 == 1);
        let prob = inst.problem(&p, &cfg);
        let plan = solve_horizon(&prob, None).unwrap();
        let (oracle, _) = lattice_oracle(&prob, 21);
        assert!(
            plan.objective <= oracle * 1.02 + 1e-9,
            "case {case}: solver {} oracle {oracle}",
            plan.objective
        );
    }
}

#[test]
fn warm_start_at_optimum_is_a_fixed_point() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..20 {
        let inst = random_instance(&mut rng, cfg.horizon, false);
        let prob = inst.problem(&p, &cfg);
        let first = solve_horizon(&prob, None).unwrap();
        if first.status != SolverStatus::Converged {
            continue;
        }
        let again = solve_horizon(&prob, Some(&first.controls)).unwrap();
        assert!(again.iterations <= 2, "{}", again.iterations);
        assert!((again.objective - first.objective).abs() <= 1e-6 * first.objective.max(1.0));
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} converged instances");
}

#[test]
fn holds_speed_inside_window() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let corridor = Corridor::default();
    // green with lots of time: window [~v, 20], tracking a target equal to v
    let st = VehicleState::new(0.0, 12.0, 32.0);
    let plans = plan_step(&[st], &[None], &corridor, &p, &cfg).unwrap();
    let u = plans[0].controls[0];
    assert!(u > p.u_min && u <= p.u_max);
    assert!(plans[0].velocities.iter().all(|&v| v > 0.0));
}

#[test]
fn close_follower_brakes_harder_than_alone() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let corridor = Corridor::default();
    let lead = VehicleState::new(108.0, 10.0, 0.0);
    let follower = VehicleState::new(100.0, 12.0, 0.0);
    let pair = plan_step(&[lead, follower], &[None, None], &corridor, &p, &cfg).unwrap();
    let alone = plan_step(&[follower], &[None], &corridor, &p, &cfg).unwrap();
    assert!(pair[1].controls[0] < alone[0].controls[0]);
}

#[test]
fn follower_keeps_distance_when_lead_brakes_hard() {
    let p = VehicleParams::default();
    let cfg = MpcConfig::default();
    let corridor = Corridor {
        light_positions: vec![],
        ..Corridor::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..6 {
        let v0 = rng.gen_range(8.0..18.0);
        let gap0 = rng.gen_range(15.0..40.0);
        let mut lead = VehicleState::new(gap0, v0, 0.0);
        let mut fol = VehicleState::new(0.0, v0, 0.0);
        let mut warm = None;
        for _ in 0..120 {
            let t = lead.t;
            let lead_plan: Vec<f64> = vec![p.u_min; cfg.horizon];
            let mut ls = vec![lead.s];
            let mut lv = vec![lead.v];
            let mut x = lead;
            for &u in &lead_plan {
                x = step_dynamics(x, &p, u, cfg.dt).unwrap();
                ls.push(x.s);
                lv.push(x.v);
            }
            let traj = LeadTrajectory { s: ls, v: lv };
            let plan = greenwave_core::mpc::plan_vehicle(
                fol,
                Some(&traj),
                lead.s - fol.s,
                warm.as_deref(),
                &corridor,
                &p,
                &cfg,
            )
            .unwrap();
            fol = step_dynamics(fol, &p, plan.controls[0], cfg.dt).unwrap();
            lead = step_dynamics(lead, &p, p.u_min, cfg.dt).unwrap();
            assert!(lead.s - fol.s >= cfg.critical_distance / 2.0, "gap {} at {t}", lead.s - fol.s);
            warm = Some(greenwave_core::mpc::shift_controls(&plan));
        }
    }
}
