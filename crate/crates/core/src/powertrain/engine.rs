use serde::{Deserialize, Serialize};

/// Diesel engine with a single fixed coupling ratio to the wheels and a
/// synthetic Willans-style efficiency map.
///
/// Speeds are in rad/s. The efficiency surface is
/// `eta_peak * g_T(T / T_max(n)) * g_n(n)` with quadratic bumps peaking at
/// `peak_load` and mid-speed; it is sampled once onto a grid and
/// interpolated bilinearly, the way a measured map would be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineParams {
    pub n_min: f64,
    pub n_max: f64,
    pub torque_peak: f64,
    pub rated_power: f64,
    pub eta_peak: f64,
    pub peak_load: f64,
    /// depth of the load bump: g_T(0) = 1 - load_curvature
    pub load_curvature: f64,
    /// g_n at the speed-range ends = 1 - speed_curvature
    pub speed_curvature: f64,
    /// J/kg
    pub lhv: f64,
    /// rad/s per m/s
    pub coupling_ratio: f64,
    /// kg/s while spinning with no torque request
    pub idle_fuel_rate: f64,
    pub map_points: usize,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            n_min: 110.0,
            n_max: 390.0,
            torque_peak: 200.0,
            rated_power: 100e3,
            eta_peak: 0.36,
            peak_load: 0.75,
            load_curvature: 0.8,
            speed_curvature: 0.3,
            lhv: 42.5e6,
            coupling_ratio: 390.0 / 20.0,
            idle_fuel_rate: 0.15e-3,
            map_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyMap {
    speeds: Vec<f64>,
    torques: Vec<f64>,
    /// row-major [speed][torque]
    eta: Vec<f64>,
}

impl EfficiencyMap {
    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn torques(&self) -> &[f64] {
        &self.torques
    }

    pub fn at_node(&self, i_speed: usize, i_torque: usize) -> f64 {
        self.eta[i_speed * self.torques.len() + i_torque]
    }

    pub fn interpolate(&self, torque: f64, speed: f64) -> f64 {
        let (i, fx) = locate(&self.speeds, speed);
        let (j, fy) = locate(&self.torques, torque);
        let nt = self.torques.len();
        let e = |a: usize, b: usize| self.eta[a * nt + b];
        let lo = e(i, j) * (1.0 - fy) + e(i, j + 1) * fy;
        let hi = e(i + 1, j) * (1.0 - fy) + e(i + 1, j + 1) * fy;
        lo * (1.0 - fx) + hi * fx
    }
}

/// Cell index and fraction, clamped to the grid.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let i = i.min(n - 2);
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineOutput {
    /// Nm
    pub torque: f64,
    /// rad/s
    pub speed: f64,
    /// W
    pub power: f64,
    /// kg/s
    pub fuel_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineModel {
    pub params: EngineParams,
    map: EfficiencyMap,
}

impl Default for EngineModel {
    fn default() -> Self {
        Self::new(EngineParams::default())
    }
}

impl EngineModel {
    pub fn new(params: EngineParams) -> Self {
        let n = params.map_points.max(2);
        let speeds: Vec<f64> = (0..n)
            .map(|i| params.n_min + (params.n_max - params.n_min) * i as f64 / (n - 1) as f64)
            .collect();
        let torques: Vec<f64> = (0..n)
            .map(|i| params.torque_peak * i as f64 / (n - 1) as f64)
            .collect();
        let mut eta = Vec::with_capacity(n * n);
        for &sp in &speeds {
            for &tq in &torques {
                eta.push(analytic_efficiency(&params, tq, sp));
            }
        }
        Self {
            params,
            map: EfficiencyMap {
                speeds,
                torques,
                eta,
            },
        }
    }

    pub fn map(&self) -> &EfficiencyMap {
        &self.map
    }

    pub fn max_torque(&self, speed: f64) -> f64 {
        self.params
            .torque_peak
            .min(self.params.rated_power / speed.max(1e-9))
    }

    pub fn efficiency(&self, torque: f64, speed: f64) -> f64 {
        self.map.interpolate(torque, speed)
    }

    /// Engine speed for a road speed; below `n_min` the clutch slips.
    pub fn shaft_speed(&self, v: f64) -> f64 {
        (self.params.coupling_ratio * v).clamp(self.params.n_min, self.params.n_max)
    }

    /// Operating point and fuel rate for a throttle command.
    ///
    /// A spinning engine never burns less than the idle rate; with zero
    /// throttle at standstill the engine is off.
    pub fn output(&self, throttle: f64, v: f64) -> EngineOutput {
        let speed = self.shaft_speed(v);
        if throttle <= 0.0 {
            let fuel_rate = if v > 0.0 {
                self.params.idle_fuel_rate
            } else {
                0.0
            };
            return EngineOutput {
                torque: 0.0,
                speed,
                power: 0.0,
                fuel_rate,
            };
        }
        let torque = throttle * self.max_torque(speed);
        let power = torque * speed;
        let eta = self.efficiency(torque, speed);
        EngineOutput {
            torque,
            speed,
            power,
            fuel_rate: fuel_rate(power, eta, self.params.lhv).max(self.params.idle_fuel_rate),
        }
    }

    /// Grid CSV: speed_rad_s, torque_nm, efficiency.
    pub fn map_csv(&self) -> String {
        let mut out = String::from("speed_rad_s,torque_nm,efficiency\n");
        for (i, sp) in self.map.speeds.iter().enumerate() {
            for (j, tq) in self.map.torques.iter().enumerate() {
                out.push_str(&format!("{sp},{tq},{}\n", self.map.at_node(i, j)));
            }
        }
        out
    }
}

/// Fuel mass flow for a shaft power at a given efficiency (kg/s).
pub fn fuel_rate(power: f64, eta: f64, lhv: f64) -> f64 {
    power / (eta * lhv)
}

fn analytic_efficiency(p: &EngineParams, torque: f64, speed: f64) -> f64 {
    let t_max = p.torque_peak.min(p.rated_power / speed);
    let load = (torque / t_max).clamp(0.0, 1.0);
    let g_t = 1.0 - p.load_curvature * ((load - p.peak_load) / p.peak_load).powi(2);
    let mid = 0.5 * (p.n_min + p.n_max);
    let half = 0.5 * (p.n_max - p.n_min);
    let g_n = 1.0 - p.speed_curvature * ((speed - mid) / half).powi(2);
    p.eta_peak * g_t * g_n
}
