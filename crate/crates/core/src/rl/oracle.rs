use rand::Rng;

use super::train::{Environment, Step};
use crate::error::{Error, Result};

/// Explicit tabular MDP. `transitions[s * n_actions + a]` lists `(next, prob)`.
/// Episodes start uniformly at random and are truncated (with bootstrap) after
/// `episode_len` steps.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub rewards: Vec<f64>,
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub episode_len: usize,
    state: usize,
    t: usize,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rewards: Vec<f64>,
        transitions: Vec<Vec<(usize, f64)>>,
        episode_len: usize,
    ) -> Result<Self> {
        let n = n_states * n_actions;
        if rewards.len() != n || transitions.len() != n {
            return Err(Error::InvalidParam(format!(
                "expected {n} state-action entries, got {} rewards / {} transitions",
                rewards.len(),
                transitions.len()
            )));
        }
        for (i, row) in transitions.iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&(s, p)| s >= n_states || p < 0.0) {
                return Err(Error::InvalidParam(format!(
                    "transition row {i} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            rewards,
            transitions,
            episode_len: episode_len.max(1),
            state: 0,
            t: 0,
        })
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    /// One Bellman backup of `v` for the pair `(s, a)`.
    pub fn backup(&self, v: &[f64], s: usize, a: usize, discount: f64) -> f64 {
        self.reward(s, a)
            + discount
                * self
                    .successors(s, a)
                    .iter()
                    .map(|&(sn, p)| p * v[sn])
                    .sum::<f64>()
    }
}

impl Environment for FiniteMdp {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn reset<R: Rng>(&mut self, rng: &mut R) -> usize {
        self.t = 0;
        self.state = rng.gen_range(0..self.n_states);
        self.state
    }

    fn step<R: Rng>(&mut self, action: usize, rng: &mut R) -> Step {
        let reward = self.reward(self.state, action);
        let u: f64 = rng.gen();
        let row = self.successors(self.state, action);
        let mut acc = 0.0;
        let mut next = row.last().map_or(self.state, |&(s, _)| s);
        for &(s, p) in row {
            acc += p;
            if u < acc {
                next = s;
                break;
            }
        }
        self.state = next;
        self.t += 1;
        Step {
            reward,
            next,
            terminal: false,
            done: self.t >= self.episode_len,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// sup-norm change per sweep
    pub residuals: Vec<f64>,
}

/// Value iteration until the sup-norm change drops to `tol`.
pub fn value_iteration_oracle(mdp: &FiniteMdp, discount: f64, tol: f64) -> OracleSolution {
    let mut v = vec![0.0; mdp.n_states];
    let mut residuals = Vec::new();
    let mut policy = vec![0; mdp.n_states];
    loop {
        let mut next = vec![0.0; mdp.n_states];
        for s in 0..mdp.n_states {
            let mut best = f64::INFINITY;
            for a in 0..mdp.n_actions {
                let q = mdp.backup(&v, s, a, discount);
                if q < best {
                    best = q;
                    policy[s] = a;
                }
            }
            next[s] = best;
        }
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        residuals.push(delta);
        if delta <= tol || residuals.len() >= 100_000 {
            break;
        }
    }
    OracleSolution {
        values: v,
        iterations: residuals.len(),
        policy,
        residuals,
    }
}
