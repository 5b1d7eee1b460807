#![allow(dead_code)]

use greenwave_core::mpc::{wheel_power, HorizonProblem, LeadTrajectory, MpcConfig, MpcWeights};
use greenwave_core::spat::{LightState, SpeedWindow};
use greenwave_core::vehicle::{VehicleParams, VehicleState};
use rand::Rng;

pub struct Instance {
    pub x0: VehicleState,
    pub windows: Vec<SpeedWindow>,
    pub weights: Vec<MpcWeights>,
    pub lead: Option<LeadTrajectory>,
}

impl Instance {
    pub fn problem<'a>(&'a self, params: &'a VehicleParams, cfg: &'a MpcConfig) -> HorizonProblem<'a> {
        HorizonProblem {
            x0: self.x0,
            windows: self.windows.clone(),
            weights: self.weights.clone(),
            lead: self.lead.as_ref(),
            params,
            cfg,
        }
    }
}

/// Random instance with a window that contains the initial speed, all
/// weights active, and optionally a lead cruising ahead.
pub fn random_instance<R: Rng>(rng: &mut R, t: usize, with_lead: bool) -> Instance {
    let v0: f64 = rng.gen_range(4.0..16.0);
    let lo = (v0 - rng.gen_range(1.0..4.0)).max(0.0);
    let hi = (v0 + rng.gen_range(1.0..4.0)).min(20.0);
    let tar = rng.gen_range(lo..hi);
    let window = SpeedWindow {
        v_target: tar,
        v_lower: lo,
        v_upper: hi,
        window_index: 1,
        light_state: LightState::Green,
    };
    let w = MpcWeights {
        fuel: rng.gen_range(0.1..1.0),
        spacing: if with_lead { rng.gen_range(0.05..0.5) } else { 0.0 },
        tracking: rng.gen_range(0.1..1.0),
        effort: rng.gen_range(0.01..0.2),
    };
    let x0 = VehicleState::new(rng.gen_range(0.0..400.0), v0, 0.0);
    let lead = with_lead.then(|| {
        let gap = rng.gen_range(25.0..60.0);
        let vl = rng.gen_range(8.0..16.0);
        LeadTrajectory {
            s: (0..=t).map(|j| x0.s + gap + vl * 0.5 * j as f64).collect(),
            v: vec![vl; t + 1],
        }
    });
    Instance {
        x0,
        windows: vec![window; t],
        weights: vec![w; t],
        lead,
    }
}

/// Exhaustive search over `levels` evenly spaced fractions of each step's
/// feasible control range. The cost is re-derived here from the model
/// equations rather than taken from the solver.
pub fn lattice_oracle(problem: &HorizonProblem<'_>, levels: usize) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, Vec::new());
    let mut path = Vec::with_capacity(problem.horizon());
    dfs(problem, levels, problem.x0.s, problem.x0.v, 0.0, 0.0, &mut path, &mut best);
    best
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    prob: &HorizonProblem<'_>,
    levels: usize,
    s: f64,
    v: f64,
    fuel: f64,
    rest: f64,
    path: &mut Vec<f64>,
    best: &mut (f64, Vec<f64>),
) {
    let j = path.len();
    let p = prob.params;
    let c = prob.cfg;
    if j == prob.horizon() {
        let dist = (s - prob.x0.s).max(c.min_distance);
        let total = fuel / dist + rest;
        if total < best.0 {
            *best = (total, path.clone());
        }
        return;
    }
    let b = prob.bounds(j, s, v);
    let w = &prob.weights[j];
    for i in 0..levels {
        let u = b.lower + (b.upper - b.lower) * i as f64 / (levels - 1) as f64;
        let a = -(0.5 * p.air_density * p.drag_coeff * p.frontal_area / p.mass) * v * v
            - p.rolling_coeff * 9.81
            - 9.81 * p.road_grade.sin();
        let v1 = (v + (a + u) * c.dt).max(0.0);
        let s1 = s + v * c.dt;
        let fuel1 = fuel
            + w.fuel * 1e3 / (p.eta_transmission * c.lhv) * wheel_power(v, u, p) * c.dt;
        let mut rest1 =
            rest + w.effort * u * u + w.tracking * (v1 - prob.windows[j].v_target).powi(2);
        if let Some(l) = prob.lead {
            let x = c.critical_distance + c.headway * (v1 - l.v[j + 1]) + (s1 - l.s[j + 1]);
            rest1 += w.spacing * x * x;
        }
        path.push(u);
        dfs(prob, levels, s1, v1, fuel1, rest1, path, best);
        path.pop();
    }
}
