use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{CruiseConfig, EnergyMpcConfig};
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::powertrain::Powertrain;
use crate::rl::{LearningSchedule, MdpSpec};
use crate::spat::Corridor;
use crate::vehicle::{VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HigherLevel {
    Mpc,
    Cruise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerLevel {
    Rl,
    MpcBaseline,
    /// keeps battery power as close to zero as the throttle grid allows;
    /// used to record speed traces before any lower level is trained
    ChargeNeutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControllerPair {
    pub higher: HigherLevel,
    pub lower: LowerLevel,
}

impl ControllerPair {
    pub const MPC_RL: Self = Self {
        higher: HigherLevel::Mpc,
        lower: LowerLevel::Rl,
    };
    pub const MPC_MPCBASE: Self = Self {
        higher: HigherLevel::Mpc,
        lower: LowerLevel::MpcBaseline,
    };
    pub const CRUISE_RL: Self = Self {
        higher: HigherLevel::Cruise,
        lower: LowerLevel::Rl,
    };
    pub const CRUISE_MPCBASE: Self = Self {
        higher: HigherLevel::Cruise,
        lower: LowerLevel::MpcBaseline,
    };
}

impl fmt::Display for ControllerPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = match self.higher {
            HigherLevel::Mpc => "mpc",
            HigherLevel::Cruise => "cruise",
        };
        let l = match self.lower {
            LowerLevel::Rl => "rl",
            LowerLevel::MpcBaseline => "mpcbase",
            LowerLevel::ChargeNeutral => "neutral",
        };
        write!(f, "{h}+{l}")
    }
}

impl FromStr for ControllerPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (h, l) = s
            .split_once('+')
            .ok_or_else(|| Error::InvalidParam(format!("controller '{s}' is not <higher>+<lower>")))?;
        let higher = match h.trim() {
            "mpc" => HigherLevel::Mpc,
            "cruise" => HigherLevel::Cruise,
            other => return Err(Error::InvalidParam(format!("unknown higher level '{other}'"))),
        };
        let lower = match l.trim() {
            "rl" => LowerLevel::Rl,
            "mpcbase" => LowerLevel::MpcBaseline,
            "neutral" => LowerLevel::ChargeNeutral,
            other => return Err(Error::InvalidParam(format!("unknown lower level '{other}'"))),
        };
        Ok(Self { higher, lower })
    }
}

/// Speed traces for the lower level are recorded on these seeds, which are
/// kept apart from evaluation seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub profile_seeds: Vec<u64>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            profile_seeds: vec![1001, 1002, 1003],
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    pub fleet_size: usize,
    pub gap_min: f64,
    pub gap_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub goal: f64,
    pub dt: f64,
    pub time_cap: f64,
    pub soc_initial: f64,
    /// speed below which a vehicle counts as stopped (m/s)
    pub stop_speed: f64,
    pub corridor: Corridor,
    pub powertrain: Powertrain,
    pub mpc: MpcConfig,
    pub cruise: CruiseConfig,
    pub energy_mpc: EnergyMpcConfig,
    pub mdp: MdpSpec,
    pub schedule: LearningSchedule,
    pub training: TrainingConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            fleet_size: 8,
            gap_min: 10.0,
            gap_max: 20.0,
            speed_min: 10.0,
            speed_max: 15.0,
            goal: 5000.0,
            dt: 0.5,
            time_cap: 1200.0,
            soc_initial: 0.6,
            stop_speed: 0.1,
            corridor: Corridor::default(),
            powertrain: Powertrain::default(),
            mpc: MpcConfig::default(),
            cruise: CruiseConfig::default(),
            energy_mpc: EnergyMpcConfig::default(),
            mdp: MdpSpec::default(),
            schedule: LearningSchedule::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scn: Scenario = toml::from_str(text)?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn vehicle(&self) -> &VehicleParams {
        &self.powertrain.vehicle
    }

    pub fn validate(&self) -> Result<()> {
        self.corridor.validate()?;
        self.vehicle().validate()?;
        self.powertrain.battery.validate()?;
        self.mpc.validate()?;
        self.cruise.validate()?;
        self.mdp.validate()?;
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.fleet_size == 0 {
            return bad("fleet_size must be at least 1".into());
        }
        if !(self.gap_min >= 10.0 && self.gap_min <= self.gap_max) {
            return bad(format!("gap range [{}, {}] (minimum 10 m)", self.gap_min, self.gap_max));
        }
        if !(self.corridor.v_min <= self.speed_min
            && self.speed_min <= self.speed_max
            && self.speed_max <= self.corridor.v_max)
        {
            return bad(format!("initial speed range [{}, {}]", self.speed_min, self.speed_max));
        }
        if !(self.goal > 0.0 && self.dt > 0.0 && self.time_cap > self.dt) {
            return bad("goal, dt and time_cap must be positive".into());
        }
        if self.mpc.dt != self.dt || self.mdp.dt != self.dt {
            return Err(Error::GeometryMismatch(format!(
                "scenario dt {} but mpc dt {} and mdp dt {}",
                self.dt, self.mpc.dt, self.mdp.dt
            )));
        }
        if 2.0 * self.mpc.arrival_margin >= self.corridor.timing.green {
            return bad(format!("arrival margin {} does not fit in the green", self.mpc.arrival_margin));
        }
        if self.energy_mpc.horizon == 0 {
            return bad("energy_mpc.horizon must be at least 1".into());
        }
        Ok(())
    }

    /// Initial fleet, front vehicle first: the tail starts at 0 with random
    /// gaps and speeds drawn from the scenario ranges.
    pub fn initial_fleet(&self, seed: u64) -> Vec<VehicleState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaps: Vec<f64> = (1..self.fleet_size)
            .map(|_| rng.gen_range(self.gap_min..=self.gap_max))
            .collect();
        let speeds: Vec<f64> = (0..self.fleet_size)
            .map(|_| rng.gen_range(self.speed_min..=self.speed_max))
            .collect();
        let mut s = 0.0;
        let mut fleet = vec![VehicleState::new(0.0, 0.0, 0.0); self.fleet_size];
        for i in (0..self.fleet_size).rev() {
            fleet[i] = VehicleState::new(s, speeds[i], 0.0);
            if i > 0 {
                s += gaps[i - 1];
            }
        }
        fleet
    }
}
