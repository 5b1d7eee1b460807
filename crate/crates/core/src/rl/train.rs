use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qtable::{epsilon_greedy, q_update, QTable};

/// Per-episode learning-rate and exploration decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningSchedule {
    pub episodes: usize,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
}

impl Default for LearningSchedule {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            epsilon0: 0.2,
            epsilon_decay: 0.99,
        }
    }
}

impl LearningSchedule {
    /// `1 / sqrt(k + 2)`
    pub fn learning_rate(&self, k: usize) -> f64 {
        1.0 / ((k + 2) as f64).sqrt()
    }

    /// `epsilon0 * decay^k`
    pub fn epsilon(&self, k: usize) -> f64 {
        self.epsilon0 * self.epsilon_decay.powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub reward: f64,
    pub next: usize,
    /// absorbing: no bootstrap from `next`
    pub terminal: bool,
    /// the episode ends here (terminal or truncated)
    pub done: bool,
}

pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset<R: Rng>(&mut self, rng: &mut R) -> usize;
    fn step<R: Rng>(&mut self, action: usize, rng: &mut R) -> Step;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub cost: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub q: QTable,
    pub curve: Vec<EpisodeStats>,
}

impl TrainingOutcome {
    /// Trailing moving average of episode cost ending at `episode`.
    pub fn moving_average(&self, episode: usize, window: usize) -> f64 {
        let end = (episode + 1).min(self.curve.len());
        let start = end.saturating_sub(window);
        let slice = &self.curve[start..end];
        slice.iter().map(|e| e.cost).sum::<f64>() / slice.len() as f64
    }

    pub fn curve_csv(&self) -> String {
        curve_csv(&self.curve)
    }
}

/// Training curve as CSV with columns `episode,cost,epsilon,gamma`.
pub fn curve_csv(curve: &[EpisodeStats]) -> String {
    let mut out = String::from("episode,cost,epsilon,gamma\n");
    for e in curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.episode, e.cost, e.epsilon, e.learning_rate
        ));
    }
    out
}

/// Tabular Q-learning with epsilon-greedy behaviour, starting from `init`
/// (a fresh zero table when `None`).
pub fn train<E: Environment, R: Rng>(
    env: &mut E,
    schedule: &LearningSchedule,
    discount: f64,
    init: Option<QTable>,
    rng: &mut R,
) -> TrainingOutcome {
    let mut q = init.unwrap_or_else(|| QTable::new(env.n_states(), env.n_actions()));
    let mut curve = Vec::with_capacity(schedule.episodes);
    for k in 0..schedule.episodes {
        let epsilon = schedule.epsilon(k);
        let lr = schedule.learning_rate(k);
        let mut s = env.reset(rng);
        let mut cost = 0.0;
        let mut steps = 0;
        loop {
            let a = epsilon_greedy(&q, s, epsilon, rng);
            let st = env.step(a, rng);
            let next = (!st.terminal).then_some(st.next);
            q_update(&mut q, s, a, st.reward, next, lr, discount);
            cost += st.reward;
            steps += 1;
            if st.done {
                break;
            }
            s = st.next;
        }
        q.episodes += 1;
        curve.push(EpisodeStats {
            episode: k,
            cost,
            epsilon,
            learning_rate: lr,
            steps,
        });
    }
    TrainingOutcome { q, curve }
}
