use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::FiniteMdp;
use super::qtable::QTable;
use super::train::{train, EpisodeStats, Environment, LearningSchedule, Step};
use crate::error::{Error, Result};
use crate::markov::{sample_next, QuantizerSpec, TransitionModel};
use crate::powertrain::Powertrain;

/// Grid and cost parameters of the power-split MDP. States are
/// (SOC level, demand bin, speed bin); actions are evenly spaced throttles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpSpec {
    pub soc_levels: usize,
    pub soc_lo: f64,
    pub soc_hi: f64,
    pub throttle_levels: usize,
    pub discount: f64,
    /// weight on squared SOC deviation
    pub chi: f64,
    pub penalty: f64,
    pub soc_target: f64,
    pub dt: f64,
    pub quantizer: QuantizerSpec,
}

impl Default for MdpSpec {
    fn default() -> Self {
        Self {
            soc_levels: 81,
            soc_lo: 0.4,
            soc_hi: 0.8,
            throttle_levels: 11,
            discount: 0.96,
            chi: 1000.0,
            penalty: 1000.0,
            soc_target: 0.6,
            dt: 0.5,
            quantizer: QuantizerSpec::default(),
        }
    }
}

impl MdpSpec {
    pub fn validate(&self) -> Result<()> {
        self.quantizer.validate()?;
        let ok = self.soc_levels >= 2
            && self.soc_lo < self.soc_hi
            && self.throttle_levels >= 2
            && (0.0..1.0).contains(&self.discount)
            && self.dt > 0.0
            && self.chi >= 0.0
            && self.penalty >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("mdp spec {self:?}")))
        }
    }

    pub fn n_states(&self) -> usize {
        self.soc_levels * self.quantizer.power_bins * self.quantizer.speed_bins
    }

    pub fn n_actions(&self) -> usize {
        self.throttle_levels
    }

    pub fn soc_step(&self) -> f64 {
        (self.soc_hi - self.soc_lo) / (self.soc_levels - 1) as f64
    }

    /// Nearest SOC level.
    pub fn soc_level(&self, soc: f64) -> usize {
        let x = ((soc - self.soc_lo) / self.soc_step()).round();
        if x.is_nan() || x <= 0.0 {
            0
        } else {
            (x as usize).min(self.soc_levels - 1)
        }
    }

    pub fn soc_value(&self, level: usize) -> f64 {
        self.soc_lo + level as f64 * self.soc_step()
    }

    pub fn throttle(&self, action: usize) -> f64 {
        action as f64 / (self.throttle_levels - 1) as f64
    }

    pub fn state_index(&self, soc_level: usize, n: usize, k: usize) -> usize {
        (soc_level * self.quantizer.power_bins + n) * self.quantizer.speed_bins + k
    }

    pub fn state(&self, soc: f64, p_dem: f64, v: f64) -> usize {
        self.state_index(
            self.soc_level(soc),
            self.quantizer.power_bin(p_dem),
            self.quantizer.speed_bin(v),
        )
    }
}

/// `[fuel + chi (soc - target)^2] dt`, plus the penalty when a constraint was
/// violated. `fuel_g_s` in grams per second.
pub fn stage_reward(fuel_g_s: f64, soc: f64, violated: bool, spec: &MdpSpec) -> f64 {
    let dev = soc - spec.soc_target;
    let base = (fuel_g_s + spec.chi * dev * dev) * spec.dt;
    if violated {
        base + spec.penalty
    } else {
        base
    }
}

/// Stage cost of applying `throttle` for one step from `soc`, charged on the
/// resulting SOC.
pub fn reward(
    throttle: f64,
    soc: f64,
    v: f64,
    p_dem: f64,
    powertrain: &Powertrain,
    spec: &MdpSpec,
) -> Result<f64> {
    Ok(evaluate(throttle, soc, v, p_dem, powertrain, spec)?.0)
}

/// (reward, next SOC, left the SOC window)
pub(crate) fn evaluate(
    throttle: f64,
    soc: f64,
    v: f64,
    p_dem: f64,
    powertrain: &Powertrain,
    spec: &MdpSpec,
) -> Result<(f64, f64, bool)> {
    let step = powertrain.step(throttle, soc, v, p_dem, spec.dt)?;
    let violated =
        step.soc_saturated || !powertrain.step_violations(throttle, soc, v, &step).is_empty();
    let r = stage_reward(step.engine.fuel_rate * 1e3, step.soc, violated, spec);
    Ok((r, step.soc, step.soc_saturated))
}

/// Recorded speed and demand, one sample per control step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveProfile {
    pub speed: Vec<f64>,
    pub demand: Vec<f64>,
}

/// Episodic simulator for training: speed replays a recorded profile, demand
/// evolves through the transition model, SOC is integrated continuously and
/// only quantized for indexing. Leaving the SOC window ends the episode as
/// absorbing; reaching the end of the profile truncates it.
pub struct EnergyEnv<'a> {
    spec: &'a MdpSpec,
    tpm: &'a TransitionModel,
    powertrain: &'a Powertrain,
    profiles: &'a [DriveProfile],
    current: usize,
    t: usize,
    soc: f64,
    n: usize,
}

impl<'a> EnergyEnv<'a> {
    pub fn new(
        spec: &'a MdpSpec,
        tpm: &'a TransitionModel,
        powertrain: &'a Powertrain,
        profiles: &'a [DriveProfile],
    ) -> Result<Self> {
        spec.validate()?;
        if tpm.spec() != &spec.quantizer {
            return Err(Error::GeometryMismatch(
                "transition model and MDP use different quantizers".into(),
            ));
        }
        if profiles.iter().all(|p| p.speed.len() < 2) {
            return Err(Error::TraceTooShort(0));
        }
        Ok(Self {
            spec,
            tpm,
            powertrain,
            profiles,
            current: 0,
            t: 0,
            soc: spec.soc_target,
            n: 0,
        })
    }

    fn speed_bin(&self, t: usize) -> usize {
        self.spec
            .quantizer
            .speed_bin(self.profiles[self.current].speed[t])
    }

    fn index(&self) -> usize {
        self.spec
            .state_index(self.spec.soc_level(self.soc), self.n, self.speed_bin(self.t))
    }
}

impl Environment for EnergyEnv<'_> {
    fn n_states(&self) -> usize {
        self.spec.n_states()
    }

    fn n_actions(&self) -> usize {
        self.spec.n_actions()
    }

    fn reset<R: Rng>(&mut self, rng: &mut R) -> usize {
        loop {
            self.current = rng.gen_range(0..self.profiles.len());
            if self.profiles[self.current].speed.len() >= 2 {
                break;
            }
        }
        let p = &self.profiles[self.current];
        self.t = 0;
        self.soc = self.spec.soc_target;
        self.n = self
            .spec
            .quantizer
            .power_bin(p.demand.first().copied().unwrap_or(0.0));
        self.index()
    }

    fn step<R: Rng>(&mut self, action: usize, rng: &mut R) -> Step {
        let q = &self.spec.quantizer;
        let v = self.profiles[self.current].speed[self.t];
        let k = q.speed_bin(v);
        let throttle = self.spec.throttle(action);
        let (reward, soc, left) =
            evaluate(throttle, self.soc, v, self.tpm.power_value(k, self.n), self.powertrain, self.spec)
                .unwrap_or((self.spec.penalty, self.soc, true));
        self.soc = soc;
        self.n = sample_next(self.tpm, self.n, k, rng);
        self.t += 1;
        let end = self.t + 1 >= self.profiles[self.current].speed.len();
        Step {
            reward,
            next: self.index(),
            terminal: left,
            done: left || end,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub spec: MdpSpec,
    pub schedule: LearningSchedule,
    pub q: QTable,
    pub curve: Vec<EpisodeStats>,
}

/// Q-learning on the energy MDP, optionally continuing from an earlier table.
pub fn train_energy_policy(
    spec: &MdpSpec,
    schedule: &LearningSchedule,
    tpm: &TransitionModel,
    powertrain: &Powertrain,
    profiles: &[DriveProfile],
    init: Option<QTable>,
    seed: u64,
) -> Result<TrainedPolicy> {
    let mut env = EnergyEnv::new(spec, tpm, powertrain, profiles)?;
    if let Some(q) = &init {
        if q.n_states() != spec.n_states() || q.n_actions() != spec.n_actions() {
            return Err(Error::GeometryMismatch(format!(
                "q-table is {}x{}, mdp needs {}x{}",
                q.n_states(),
                q.n_actions(),
                spec.n_states(),
                spec.n_actions()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = train(&mut env, schedule, spec.discount, init, &mut rng);
    Ok(TrainedPolicy {
        spec: spec.clone(),
        schedule: *schedule,
        q: out.q,
        curve: out.curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub throttle: f64,
    pub action: usize,
    /// the state was never visited in training; a fallback rule was used
    pub cold: bool,
}

/// Greedy throttle for the current state. Unvisited states fall back to the
/// throttle that keeps battery power closest to zero.
pub fn act(
    q: &QTable,
    spec: &MdpSpec,
    powertrain: &Powertrain,
    soc: f64,
    p_dem: f64,
    v: f64,
) -> Decision {
    let s = spec.state(soc, p_dem, v);
    if q.state_visits(s) > 0 {
        let action = q.greedy(s);
        return Decision {
            throttle: spec.throttle(action),
            action,
            cold: false,
        };
    }
    let action = charge_neutral_action(spec, powertrain, p_dem, v);
    Decision {
        throttle: spec.throttle(action),
        action,
        cold: true,
    }
}

/// Throttle level whose engine power leaves the battery request closest to
/// zero.
pub fn charge_neutral_action(spec: &MdpSpec, powertrain: &Powertrain, p_dem: f64, v: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for a in 0..spec.n_actions() {
        let p_en = powertrain.engine_output(spec.throttle(a), v).power;
        let split =
            crate::powertrain::split_power(p_dem, p_en, &powertrain.vehicle, &powertrain.battery);
        let score = split.p_b_request.abs();
        if score < best.0 {
            best = (score, a);
        }
    }
    best.1
}

impl TrainedPolicy {
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let qz = &s.quantizer;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "qtable {} {} {} {}",
            s.soc_levels, qz.power_bins, qz.speed_bins, s.throttle_levels
        );
        let _ = writeln!(out, "soc {} {}", s.soc_lo, s.soc_hi);
        let _ = writeln!(out, "power {} {}", qz.p_lo, qz.p_hi);
        let _ = writeln!(out, "speed {} {}", qz.v_lo, qz.v_hi);
        let _ = writeln!(
            out,
            "cost {} {} {} {} {}",
            s.discount, s.chi, s.penalty, s.soc_target, s.dt
        );
        let _ = writeln!(
            out,
            "schedule {} {} {} {}",
            self.q.episodes, self.schedule.episodes, self.schedule.epsilon0, self.schedule.epsilon_decay
        );
        for st in 0..self.q.n_states() {
            let row: Vec<String> = self.q.row(st).iter().map(|x| x.to_string()).collect();
            let visits: Vec<String> = (0..self.q.n_actions())
                .map(|a| self.q.visits(st, a).to_string())
                .collect();
            let _ = writeln!(out, "{} | {}", row.join(" "), visits.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "q-table",
            detail,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str, n: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing '{key}' line")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("expected '{key}', got '{line}'")));
            }
            let vals: Vec<f64> = it
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("{key}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(bad(format!("'{key}' needs {n} fields")));
            }
            Ok(vals)
        };
        let dims = header("qtable", 4)?;
        let soc = header("soc", 2)?;
        let power = header("power", 2)?;
        let speed = header("speed", 2)?;
        let cost = header("cost", 5)?;
        let sched = header("schedule", 4)?;
        let spec = MdpSpec {
            soc_levels: dims[0] as usize,
            soc_lo: soc[0],
            soc_hi: soc[1],
            throttle_levels: dims[3] as usize,
            discount: cost[0],
            chi: cost[1],
            penalty: cost[2],
            soc_target: cost[3],
            dt: cost[4],
            quantizer: QuantizerSpec {
                power_bins: dims[1] as usize,
                p_lo: power[0],
                p_hi: power[1],
                speed_bins: dims[2] as usize,
                v_lo: speed[0],
                v_hi: speed[1],
            },
        };
        spec.validate()?;
        let (ns, na) = (spec.n_states(), spec.n_actions());
        let mut q = QTable::new(ns, na);
        q.episodes = sched[0] as usize;
        let mut count = 0;
        for (st, line) in lines.enumerate() {
            if st >= ns {
                return Err(bad("too many rows".into()));
            }
            let (vals, visits) = line
                .split_once('|')
                .ok_or_else(|| bad(format!("row {st} lacks visit counts")))?;
            let vals: Vec<f64> = vals
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("row {st}: {e}"))))
                .collect::<Result<_>>()?;
            let visits: Vec<u32> = visits
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|e| bad(format!("row {st}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != na || visits.len() != na {
                return Err(bad(format!("row {st} has wrong width")));
            }
            for a in 0..na {
                q.set(st, a, vals[a]);
                q.set_visits(st, a, visits[a]);
            }
            count += 1;
        }
        if count != ns {
            return Err(bad(format!("expected {ns} rows, found {count}")));
        }
        Ok(Self {
            spec,
            schedule: LearningSchedule {
                episodes: sched[1] as usize,
                epsilon0: sched[2],
                epsilon_decay: sched[3],
            },
            q,
            curve: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Small explicit MDP over (SOC level, demand bin) at one fixed speed, with
/// demand following row `speed_bin` of `tpm`. A continuous next SOC is split
/// between its two neighbouring levels in proportion to distance, so the
/// model is exactly solvable by value iteration.
pub fn toy_energy_mdp(
    spec: &MdpSpec,
    tpm: &TransitionModel,
    powertrain: &Powertrain,
    speed_bin: usize,
    episode_len: usize,
) -> Result<FiniteMdp> {
    spec.validate()?;
    let qz = tpm.spec();
    let m = qz.power_bins;
    let ns = spec.soc_levels * m;
    let na = spec.n_actions();
    let v = qz.speed_center(speed_bin);
    let mut rewards = Vec::with_capacity(ns * na);
    let mut transitions = Vec::with_capacity(ns * na);
    for level in 0..spec.soc_levels {
        let soc = spec.soc_value(level);
        for n in 0..m {
            let p_dem = tpm.power_value(speed_bin, n);
            for a in 0..na {
                let th = spec.throttle(a);
                let step = powertrain.step(th, soc, v, p_dem, spec.dt)?;
                let violated = step.soc_saturated
                    || !powertrain.step_violations(th, soc, v, &step).is_empty();
                let next_soc = step.soc.clamp(spec.soc_lo, spec.soc_hi);
                rewards.push(stage_reward(
                    step.engine.fuel_rate * 1e3,
                    next_soc,
                    violated,
                    spec,
                ));
                let x = (next_soc - spec.soc_lo) / spec.soc_step();
                let lo = (x.floor() as usize).min(spec.soc_levels - 1);
                let hi = (lo + 1).min(spec.soc_levels - 1);
                let w_hi = if hi == lo { 0.0 } else { x - lo as f64 };
                let mut row = Vec::new();
                for (nn, &p) in tpm.row(speed_bin, n).iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    if w_hi < 1.0 {
                        row.push((lo * m + nn, p * (1.0 - w_hi)));
                    }
                    if w_hi > 0.0 {
                        row.push((hi * m + nn, p * w_hi));
                    }
                }
                transitions.push(row);
            }
        }
    }
    FiniteMdp::new(ns, na, rewards, transitions, episode_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        let spec = MdpSpec::default();
        let r = stage_reward(3.361, 0.65, false, &spec);
        assert!((r - 2.9305).abs() < 1e-9, "{r}");
        let pt = Powertrain::default();
        assert_eq!(reward(0.0, 0.6, 0.0, 0.0, &pt, &spec).unwrap(), 0.0);
        assert!((stage_reward(0.0, 0.6, true, &spec) - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn state_indexing_is_a_bijection() {
        let spec = MdpSpec::default();
        let mut seen = vec![false; spec.n_states()];
        for l in 0..spec.soc_levels {
            for n in 0..spec.quantizer.power_bins {
                for k in 0..spec.quantizer.speed_bins {
                    let i = spec.state_index(l, n, k);
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
        assert_eq!(spec.soc_level(0.6), 40);
        assert_eq!(spec.soc_level(0.1), 0);
        assert_eq!(spec.soc_level(0.95), 80);
        assert_eq!(spec.throttle(10), 1.0);
    }
}
