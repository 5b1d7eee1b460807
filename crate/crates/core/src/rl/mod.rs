//! Tabular Q-learning for the power-split problem, with a value-iteration
//! oracle used to verify it. Everything here minimizes cost.

mod energy;
mod oracle;
mod qtable;
mod train;

pub(crate) use energy::evaluate as energy_step;
pub use energy::{
    act, charge_neutral_action, reward, stage_reward, toy_energy_mdp, train_energy_policy, Decision, DriveProfile,
    EnergyEnv,
    MdpSpec, TrainedPolicy,
};
pub use oracle::{value_iteration_oracle, FiniteMdp, OracleSolution};
pub use qtable::{epsilon_greedy, q_update, QTable};
pub use train::{curve_csv, train, EpisodeStats, Environment, LearningSchedule, Step, TrainingOutcome};
