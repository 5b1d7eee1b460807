//! Eco-driving for a platoon of hybrid vehicles through signalized
//! intersections: a speed-planning MPC on top, Q-learning for the engine and
//! battery split below, plus the baselines and the closed-loop simulator used
//! to compare them.

pub mod baselines;
pub mod error;
pub mod markov;
pub mod mpc;
pub mod powertrain;
pub mod rl;
pub mod sim;
pub mod spat;
pub mod vehicle;

pub use error::{Error, Result};
pub use markov::{estimate_tpm, quantize, QuantizerSpec, TransitionModel};
pub use powertrain::{power_demand, split_power, Powertrain, Violation};
pub use spat::{control_bounds, velocity_window, Corridor, LightState, SignalTiming, SpeedWindow};
pub use vehicle::{step_dynamics, VehicleParams, VehicleState};
