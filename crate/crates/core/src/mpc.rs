//! Receding-horizon speed planner. Each vehicle minimizes a fuel, spacing,
//! tracking and effort cost over a short horizon subject to its signal window
//! and control limits; the fleet is solved front to back so followers see the
//! plan of the vehicle ahead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spat::{Corridor, LightState, SpeedWindow};
use crate::vehicle::{
    passive_accel, passive_accel_dv, safe_speed, VehicleParams, VehicleState, GRAVITY,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcWeights {
    pub fuel: f64,
    pub spacing: f64,
    pub tracking: f64,
    pub effort: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// S_0 in the spacing residual (m)
    pub critical_distance: f64,
    /// t_hw in the spacing residual (s)
    pub headway: f64,
    /// projected-gradient residual for convergence
    pub tolerance: f64,
    pub max_iterations: usize,
    pub c_fuel: f64,
    pub c_spacing: f64,
    pub c_tracking: f64,
    pub c_effort: f64,
    pub gap_ref: f64,
    /// lower heating value used by the fuel surrogate (J/kg)
    pub lhv: f64,
    /// fuel-per-distance denominator floor (m)
    pub min_distance: f64,
    /// standstill gap the follower's safe-speed cap keeps (m)
    pub safe_gap: f64,
    /// extra deceleration assumed for the lead beyond u_min when it brakes
    pub lead_brake_margin: f64,
    /// windows aim this many seconds inside each green (s)
    pub arrival_margin: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.5,
            critical_distance: 10.0,
            headway: 1.5,
            tolerance: 1e-6,
            max_iterations: 50,
            c_fuel: 1.0,
            c_spacing: 0.5,
            c_tracking: 1.0,
            c_effort: 0.05,
            gap_ref: 20.0,
            lhv: 42.5e6,
            min_distance: 1.0,
            safe_gap: 6.0,
            lead_brake_margin: 0.5,
            arrival_margin: 0.5,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon >= 2
            && self.dt > 0.0
            && self.critical_distance > 0.0
            && self.headway > 0.0
            && self.tolerance > 0.0
            && self.max_iterations >= 1
            && [self.c_fuel, self.c_spacing, self.c_tracking, self.c_effort]
                .iter()
                .all(|&c| c >= 0.0)
            && self.gap_ref > 0.0
            && self.lhv > 0.0
            && self.min_distance > 0.0
            && self.safe_gap >= 0.0
            && self.arrival_margin >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("mpc config {self:?}")))
        }
    }
}

/// Wide windows favour fuel, narrow ones tracking; spacing weight decays
/// with the gap. `gap` is infinite for the leader. Without a green to aim
/// for (window index 0) the plan just tracks the target speed, otherwise a
/// fuel-only objective coasts to a halt on an open road.
pub fn schedule_weights(window: &SpeedWindow, gap: f64, v_span: f64, cfg: &MpcConfig) -> MpcWeights {
    let w = if window.window_index == 0 {
        0.0
    } else if v_span > 0.0 {
        (window.width() / v_span).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let spacing = if gap.is_finite() {
        cfg.c_spacing * (-gap.max(0.0) / cfg.gap_ref).exp()
    } else {
        0.0
    };
    MpcWeights {
        fuel: cfg.c_fuel * w,
        spacing,
        tracking: cfg.c_tracking * (1.0 - w),
        effort: cfg.c_effort,
    }
}

/// Wheel power of the fuel surrogate (W). Braking enters through the
/// recuperation term.
pub fn wheel_power(v: f64, u: f64, params: &VehicleParams) -> f64 {
    let base = params.aero() * v * v * v
        + params.mass * GRAVITY * v * (params.rolling_coeff + params.road_grade);
    if u > 0.0 {
        base + v * params.mass * u
    } else {
        base - params.eta_recuperation() * v * params.mass * u
    }
}

fn wheel_power_partials(v: f64, u: f64, params: &VehicleParams) -> (f64, f64) {
    let m = params.mass;
    let base = 3.0 * params.aero() * v * v + m * GRAVITY * (params.rolling_coeff + params.road_grade);
    if u > 0.0 {
        (base + m * u, v * m)
    } else {
        let e = params.eta_recuperation();
        (base - e * m * u, -e * v * m)
    }
}

/// Fuel surrogate in kg/s.
pub fn fuel_surrogate(v: f64, u: f64, params: &VehicleParams, lhv: f64) -> f64 {
    wheel_power(v, u, params) / (params.eta_transmission * lhv)
}

// grams per second per watt of wheel power
fn fuel_scale(params: &VehicleParams, cfg: &MpcConfig) -> f64 {
    1e3 / (params.eta_transmission * cfg.lhv)
}

/// Single-state cost with fuel in g/s over `distance`. `lead` is the
/// position and speed of the vehicle ahead.
#[allow(clippy::too_many_arguments)]
pub fn stage_cost(
    s: f64,
    v: f64,
    u: f64,
    v_tar: f64,
    lead: Option<(f64, f64)>,
    distance: f64,
    weights: &MpcWeights,
    params: &VehicleParams,
    cfg: &MpcConfig,
) -> f64 {
    let fuel = weights.fuel * fuel_scale(params, cfg) * wheel_power(v, u, params) * cfg.dt
        / distance.max(cfg.min_distance);
    let spacing = lead.map_or(0.0, |(sj, vj)| {
        let x = cfg.critical_distance + cfg.headway * (v - vj) + (s - sj);
        weights.spacing * x * x
    });
    fuel + spacing + weights.tracking * (v - v_tar).powi(2) + weights.effort * u * u
}

/// Predicted lead positions and speeds at horizon steps `0..=T`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeadTrajectory {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    /// line search could not make progress (typically a kink of the fuel term)
    Stalled,
    MaxIterations,
}

impl SolverStatus {
    pub fn is_degraded(self) -> bool {
        self != SolverStatus::Converged
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::Stalled => "stalled",
            SolverStatus::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPlan {
    pub controls: Vec<f64>,
    pub velocities: Vec<f64>,
    pub positions: Vec<f64>,
    pub objective: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub residual: f64,
    /// some step could not satisfy its window (or the safety cap won)
    pub window_violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds {
    pub lower: f64,
    pub upper: f64,
    pub violation: bool,
    dlo: (f64, f64),
    dhi: (f64, f64),
}

/// One vehicle's horizon problem. Step `j` applies `u_j` from state `j`;
/// window `j` constrains the velocity at `j + 1`.
#[derive(Debug, Clone)]
pub struct HorizonProblem<'a> {
    pub x0: VehicleState,
    pub windows: Vec<SpeedWindow>,
    pub weights: Vec<MpcWeights>,
    pub lead: Option<&'a LeadTrajectory>,
    pub params: &'a VehicleParams,
    pub cfg: &'a MpcConfig,
}

struct Rollout {
    s: Vec<f64>,
    v: Vec<f64>,
    u: Vec<f64>,
    // du/dσ and du/d(s, v) per step; zero sensitivities in control space
    du_dsig: Vec<f64>,
    du_dx: Vec<(f64, f64)>,
    stopped: Vec<bool>,
    violation: bool,
}

impl<'a> HorizonProblem<'a> {
    pub fn horizon(&self) -> usize {
        self.windows.len()
    }

    fn check(&self) -> Result<()> {
        let t = self.horizon();
        if t == 0 || self.weights.len() != t {
            return Err(Error::GeometryMismatch(format!(
                "{} windows vs {} weight sets",
                t,
                self.weights.len()
            )));
        }
        if let Some(l) = self.lead {
            if l.s.len() < t + 1 || l.v.len() < t + 1 {
                return Err(Error::GeometryMismatch(
                    "lead trajectory shorter than the horizon".into(),
                ));
            }
        }
        if !(self.x0.s.is_finite() && self.x0.v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        Ok(())
    }

    /// Feasible control range at step `j` from `(s, v)`: the window, the
    /// actuator limits, and behind a lead a safe-speed cap. Safety wins
    /// over the window when they conflict.
    pub fn bounds(&self, j: usize, s: f64, v: f64) -> StepBounds {
        let p = self.params;
        let dt = self.cfg.dt;
        let ph = passive_accel(p, v);
        let dph = passive_accel_dv(p, v);
        let w = &self.windows[j];
        let slope = -1.0 / dt - dph;
        let mut violation = false;

        let (mut lo, mut dlo) = ((w.v_lower - v) / dt - ph, (0.0, slope));
        let (mut hi, mut dhi) = ((w.v_upper - v) / dt - ph, (0.0, slope));
        if lo < p.u_min {
            lo = p.u_min;
            dlo = (0.0, 0.0);
        }
        if hi > p.u_max {
            hi = p.u_max;
            dhi = (0.0, 0.0);
        }
        if lo > p.u_max {
            lo = p.u_max;
            dlo = (0.0, 0.0);
            violation = true;
        }
        if hi < p.u_min {
            hi = p.u_min;
            dhi = (0.0, 0.0);
            violation = true;
        }
        if let Some(lead) = self.lead {
            let b = -p.u_min;
            let react = 1.5 * dt;
            let b_lead = b + self.cfg.lead_brake_margin;
            let g = lead.s[j + 1] - (s + v * dt) + lead.v[j + 1].powi(2) / (2.0 * b_lead)
                - self.cfg.safe_gap;
            let (v_safe, dvs_dg) = safe_speed(g, b, react);
            let cap = (v_safe - v) / dt - ph;
            if cap < hi {
                hi = cap;
                dhi = (-dvs_dg / dt, (-dvs_dg * dt - 1.0) / dt - dph);
                if hi < p.u_min {
                    hi = p.u_min;
                    dhi = (0.0, 0.0);
                }
            }
        }
        if lo > hi {
            lo = hi;
            dlo = dhi;
            violation = true;
        }
        StepBounds {
            lower: lo,
            upper: hi,
            violation,
            dlo,
            dhi,
        }
    }

    fn roll(&self, decisions: &[f64], fractions: bool) -> Rollout {
        let t = self.horizon();
        let p = self.params;
        let dt = self.cfg.dt;
        let mut r = Rollout {
            s: Vec::with_capacity(t + 1),
            v: Vec::with_capacity(t + 1),
            u: Vec::with_capacity(t),
            du_dsig: Vec::with_capacity(t),
            du_dx: Vec::with_capacity(t),
            stopped: Vec::with_capacity(t),
            violation: false,
        };
        let (mut s, mut v) = (self.x0.s, self.x0.v);
        r.s.push(s);
        r.v.push(v);
        for (j, &d) in decisions.iter().enumerate() {
            let u = if fractions {
                let b = self.bounds(j, s, v);
                r.violation |= b.violation;
                let width = b.upper - b.lower;
                r.du_dsig.push(width);
                r.du_dx.push((
                    (1.0 - d) * b.dlo.0 + d * b.dhi.0,
                    (1.0 - d) * b.dlo.1 + d * b.dhi.1,
                ));
                (b.lower + d * width).clamp(b.lower, b.upper)
            } else {
                r.du_dsig.push(1.0);
                r.du_dx.push((0.0, 0.0));
                d
            };
            let raw = v + (passive_accel(p, v) + u) * dt;
            r.stopped.push(raw < 0.0);
            s += v * dt;
            v = raw.max(0.0);
            r.u.push(u);
            r.s.push(s);
            r.v.push(v);
        }
        r
    }

    fn value_and_grad(&self, r: &Rollout, want_grad: bool) -> (f64, Vec<f64>) {
        let t = self.horizon();
        let p = self.params;
        let c = self.cfg;
        let dt = c.dt;
        let scale = fuel_scale(p, c);

        let raw_dist = r.s[t] - r.s[0];
        let dist = raw_dist.max(c.min_distance);
        let mut fuel_total = 0.0;
        let mut rest = 0.0;
        for j in 0..t {
            let w = &self.weights[j];
            fuel_total += w.fuel * scale * wheel_power(r.v[j], r.u[j], p) * dt;
            rest += w.effort * r.u[j] * r.u[j];
            rest += w.tracking * (r.v[j + 1] - self.windows[j].v_target).powi(2);
            if let Some(l) = self.lead {
                let x = self.spacing_residual(l, r, j + 1);
                rest += w.spacing * x * x;
            }
        }
        let value = fuel_total / dist + rest;
        if !want_grad {
            return (value, Vec::new());
        }

        // adjoint sweep; (ls, lv) is dJ/d(s_j, v_j) with decisions held fixed
        let mut grad = vec![0.0; t];
        let (mut ls, mut lv) = self.terminal_partials(r, t);
        if raw_dist > c.min_distance {
            ls -= fuel_total / (dist * dist);
        }
        for j in (0..t).rev() {
            let w = &self.weights[j];
            let (dv_dv, dv_du) = if r.stopped[j] {
                (0.0, 0.0)
            } else {
                (1.0 + passive_accel_dv(p, r.v[j]) * dt, dt)
            };
            let (pw_v, pw_u) = wheel_power_partials(r.v[j], r.u[j], p);
            let k = w.fuel * scale * dt / dist;
            let a = k * pw_u + 2.0 * w.effort * r.u[j] + lv * dv_du;
            grad[j] = a * r.du_dsig[j];
            let (du_ds, du_dv) = r.du_dx[j];
            let mut ls_j = ls + a * du_ds;
            let mut lv_j = ls * dt + lv * dv_dv + k * pw_v + a * du_dv;
            if j > 0 {
                let (ds, dv) = self.terminal_partials(r, j);
                ls_j += ds;
                lv_j += dv;
            }
            ls = ls_j;
            lv = lv_j;
        }
        (value, grad)
    }

    // partials of the spacing and tracking terms evaluated at state i (i >= 1)
    fn terminal_partials(&self, r: &Rollout, i: usize) -> (f64, f64) {
        let w = &self.weights[i - 1];
        let mut ds = 0.0;
        let mut dv = 2.0 * w.tracking * (r.v[i] - self.windows[i - 1].v_target);
        if let Some(l) = self.lead {
            let x = self.spacing_residual(l, r, i);
            ds += 2.0 * w.spacing * x;
            dv += 2.0 * w.spacing * x * self.cfg.headway;
        }
        (ds, dv)
    }

    fn spacing_residual(&self, lead: &LeadTrajectory, r: &Rollout, i: usize) -> f64 {
        self.cfg.critical_distance
            + self.cfg.headway * (r.v[i] - lead.v[i])
            + (r.s[i] - lead.s[i])
    }

    /// Positions and speeds `0..=T` under a control sequence.
    pub fn rollout(&self, controls: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.roll(controls, false);
        (r.s, r.v)
    }

    pub fn objective(&self, controls: &[f64]) -> f64 {
        self.value_and_grad(&self.roll(controls, false), false).0
    }

    /// Gradient with respect to the controls, treated as free variables.
    pub fn gradient(&self, controls: &[f64]) -> Vec<f64> {
        self.value_and_grad(&self.roll(controls, false), true).1
    }

    /// Controls placed at fraction `σ_j ∈ [0, 1]` of each step's feasible
    /// range along the resulting trajectory.
    pub fn controls_from_fractions(&self, fractions: &[f64]) -> Vec<f64> {
        self.roll(fractions, true).u
    }

    pub fn fraction_objective(&self, fractions: &[f64]) -> f64 {
        self.value_and_grad(&self.roll(fractions, true), false).0
    }

    pub fn fraction_gradient(&self, fractions: &[f64]) -> Vec<f64> {
        self.value_and_grad(&self.roll(fractions, true), true).1
    }

    /// Fractions reproducing `controls` as closely as the bounds allow.
    pub fn fractions_from_controls(&self, controls: &[f64]) -> Vec<f64> {
        let p = self.params;
        let dt = self.cfg.dt;
        let (mut s, mut v) = (self.x0.s, self.x0.v);
        let mut out = Vec::with_capacity(controls.len());
        for (j, &u) in controls.iter().enumerate() {
            let b = self.bounds(j, s, v);
            let width = b.upper - b.lower;
            let sig = if width > 1e-12 {
                ((u - b.lower) / width).clamp(0.0, 1.0)
            } else {
                0.5
            };
            let uc = b.lower + sig * width;
            s += v * dt;
            v = (v + (passive_accel(p, v) + uc) * dt).max(0.0);
            out.push(sig);
        }
        out
    }
}

fn projected_residual(sig: &[f64], g: &[f64]) -> f64 {
    sig.iter()
        .zip(g)
        .map(|(&x, &gi)| ((x - gi).clamp(0.0, 1.0) - x).abs())
        .fold(0.0, f64::max)
}

// Cholesky solve of (h + mu I) d = rhs, raising mu until it factorizes.
fn regularized_solve(h: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let scale = (0..n).map(|i| h[i * n + i].abs()).fold(1e-12, f64::max);
    let mut mu = 0.0;
    loop {
        if let Some(l) = cholesky(h, n, mu) {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut acc = rhs[i];
                for k in 0..i {
                    acc -= l[i * n + k] * y[k];
                }
                y[i] = acc / l[i * n + i];
            }
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let mut acc = y[i];
                for k in i + 1..n {
                    acc -= l[k * n + i] * x[k];
                }
                x[i] = acc / l[i * n + i];
            }
            return x;
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
}

fn cholesky(h: &[f64], n: usize, mu: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = h[i * n + j];
            if i == j {
                acc += mu;
            }
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return None;
                }
                l[i * n + i] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Projected Newton on the bounded fractions with a finite-difference
/// Hessian of the analytic gradient and an Armijo search along the
/// projection arc. The returned controls always lie inside their bounds.
pub fn solve_horizon(problem: &HorizonProblem<'_>, warm_start: Option<&[f64]>) -> Result<HorizonPlan> {
    problem.check()?;
    problem.cfg.validate()?;
    let t = problem.horizon();
    let cfg = problem.cfg;
    let mut sig = match warm_start {
        Some(u) if u.len() == t => problem.fractions_from_controls(u),
        Some(u) => {
            return Err(Error::GeometryMismatch(format!(
                "warm start has {} controls, horizon is {t}",
                u.len()
            )))
        }
        None => {
            // hold the current speed where the bounds allow
            let hold: Vec<f64> = vec![-passive_accel(problem.params, problem.x0.v); t];
            problem.fractions_from_controls(&hold)
        }
    };

    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;
    let mut r = problem.roll(&sig, true);
    let (mut value, mut g) = problem.value_and_grad(&r, true);
    let mut residual = projected_residual(&sig, &g);
    let h_step = 1e-7;
    let mut hess = vec![0.0; t * t];
    while iterations < cfg.max_iterations {
        if residual <= cfg.tolerance {
            status = SolverStatus::Converged;
            break;
        }
        let eps = residual.min(1e-3);
        let free: Vec<usize> = (0..t)
            .filter(|&i| !((sig[i] <= eps && g[i] > 0.0) || (sig[i] >= 1.0 - eps && g[i] < 0.0)))
            .collect();
        let mut d: Vec<f64> = g.iter().map(|&x| -x).collect();
        if !free.is_empty() {
            for &i in &free {
                let mut probe = sig.clone();
                let step = if sig[i] + h_step <= 1.0 { h_step } else { -h_step };
                probe[i] += step;
                let gp = problem.fraction_gradient(&probe);
                for k in 0..t {
                    hess[k * t + i] = (gp[k] - g[k]) / step;
                }
            }
            let n = free.len();
            let mut hf = vec![0.0; n * n];
            for (a, &i) in free.iter().enumerate() {
                for (b, &k) in free.iter().enumerate() {
                    hf[a * n + b] = 0.5 * (hess[i * t + k] + hess[k * t + i]);
                }
            }
            let rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
            let df = regularized_solve(&hf, n, &rhs);
            for (a, &i) in free.iter().enumerate() {
                d[i] = df[a];
            }
        }
        if g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            d = g.iter().map(|&x| -x).collect();
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = sig
                .iter()
                .zip(&d)
                .map(|(&x, &di)| (x + alpha * di).clamp(0.0, 1.0))
                .collect();
            let tr = problem.roll(&trial, true);
            let tv = problem.value_and_grad(&tr, false).0;
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&sig))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if tv.is_finite() && tv <= value + 1e-4 * decrease {
                accepted = Some((trial, tr, tv));
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((trial, tr, tv)) = accepted else {
            status = SolverStatus::Stalled;
            break;
        };
        let progress = value - tv;
        sig = trial;
        r = tr;
        let (v2, g2) = problem.value_and_grad(&r, true);
        value = v2;
        g = g2;
        residual = projected_residual(&sig, &g);
        if residual > cfg.tolerance && progress <= 1e-13 * value.abs().max(1.0) {
            status = SolverStatus::Stalled;
            break;
        }
    }
    if status == SolverStatus::MaxIterations && residual <= cfg.tolerance {
        status = SolverStatus::Converged;
    }

    Ok(HorizonPlan {
        controls: r.u.clone(),
        velocities: r.v.clone(),
        positions: r.s.clone(),
        objective: value,
        status,
        iterations,
        residual,
        window_violation: r.violation,
    })
}

/// Shift a plan one step forward, repeating its last control.
pub fn shift_controls(plan: &HorizonPlan) -> Vec<f64> {
    let mut u: Vec<f64> = plan.controls.iter().skip(1).copied().collect();
    if let Some(&last) = plan.controls.last() {
        u.push(last);
    }
    u
}

/// Windows along a predicted trajectory: window `j` is evaluated where and
/// when the velocity chosen at step `j` starts to move the vehicle.
pub fn windows_along(
    t0: f64,
    positions: &[f64],
    corridor: &Corridor,
    dt: f64,
    margin: f64,
) -> Vec<SpeedWindow> {
    positions
        .iter()
        .skip(1)
        .enumerate()
        .map(|(j, &s)| {
            let k = t0 + (j + 1) as f64 * dt;
            // only reachable with v_min > 0; fall back to the plain limits
            corridor.window_at_with_margin(k, s, margin).unwrap_or(SpeedWindow {
                v_target: corridor.v_min,
                v_lower: corridor.v_min,
                v_upper: corridor.v_max,
                window_index: 0,
                light_state: LightState::Red,
            })
        })
        .collect()
}

fn same_windows(a: &[SpeedWindow], b: &[SpeedWindow]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        x.window_index == y.window_index
            && (x.v_lower - y.v_lower).abs() < 1e-3
            && (x.v_upper - y.v_upper).abs() < 1e-3
    })
}

/// Solve one vehicle's horizon, choosing windows along the predicted path
/// and re-solving once if the solution lands on different windows.
pub fn plan_vehicle(
    state: VehicleState,
    lead: Option<&LeadTrajectory>,
    gap: f64,
    warm: Option<&[f64]>,
    corridor: &Corridor,
    params: &VehicleParams,
    cfg: &MpcConfig,
) -> Result<HorizonPlan> {
    let t = cfg.horizon;
    let guess: Vec<f64> = match warm {
        Some(u) if u.len() == t => u.iter().map(|x| x.clamp(params.u_min, params.u_max)).collect(),
        _ => vec![-passive_accel(params, state.v); t],
    };
    let span = corridor.v_max - corridor.v_min;
    let build = |windows: Vec<SpeedWindow>| HorizonProblem {
        x0: state,
        weights: windows
            .iter()
            .map(|w| schedule_weights(w, gap, span, cfg))
            .collect(),
        windows,
        lead,
        params,
        cfg,
    };
    let mut pos = Vec::with_capacity(t + 1);
    let mut x = state;
    pos.push(x.s);
    for &u in &guess {
        x = crate::vehicle::euler(x, params, u, cfg.dt);
        pos.push(x.s);
    }
    let mut windows = windows_along(state.t, &pos, corridor, cfg.dt, cfg.arrival_margin);
    let mut plan = solve_horizon(&build(windows.clone()), Some(&guess))?;
    for _ in 0..2 {
        let next = windows_along(state.t, &plan.positions, corridor, cfg.dt, cfg.arrival_margin);
        if same_windows(&next, &windows) {
            break;
        }
        windows = next;
        let warm_u = plan.controls.clone();
        plan = solve_horizon(&build(windows.clone()), Some(&warm_u))?;
    }
    Ok(plan)
}

/// One MPC tick for the whole fleet. `fleet` is ordered front to back and
/// `warm` holds each vehicle's previous plan, if any. Each follower is
/// planned against the plan just computed for the vehicle ahead of it.
pub fn plan_step(
    fleet: &[VehicleState],
    warm: &[Option<HorizonPlan>],
    corridor: &Corridor,
    params: &VehicleParams,
    cfg: &MpcConfig,
) -> Result<Vec<HorizonPlan>> {
    if warm.len() != fleet.len() {
        return Err(Error::GeometryMismatch(format!(
            "{} vehicles but {} warm starts",
            fleet.len(),
            warm.len()
        )));
    }
    let mut plans: Vec<HorizonPlan> = Vec::with_capacity(fleet.len());
    for (i, state) in fleet.iter().enumerate() {
        let lead = plans.last().map(|p| LeadTrajectory {
            s: p.positions.clone(),
            v: p.velocities.clone(),
        });
        let gap = if i == 0 {
            f64::INFINITY
        } else {
            fleet[i - 1].s - state.s
        };
        let shifted = warm[i].as_ref().map(shift_controls);
        let plan = plan_vehicle(
            *state,
            lead.as_ref(),
            gap,
            shifted.as_deref(),
            corridor,
            params,
            cfg,
        )?;
        plans.push(plan);
    }
    Ok(plans)
}
