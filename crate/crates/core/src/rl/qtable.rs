use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u32>,
    pub episodes: usize,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            episodes: 0,
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions);
        Self {
            values,
            ..Self::new(n_states, n_actions)
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, q: f64) {
        self.values[s * self.n_actions + a] = q;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn visits(&self, s: usize, a: usize) -> u32 {
        self.visits[s * self.n_actions + a]
    }

    pub fn set_visits(&mut self, s: usize, a: usize, n: u32) {
        self.visits[s * self.n_actions + a] = n;
    }

    pub fn state_visits(&self, s: usize) -> u64 {
        self.visits[s * self.n_actions..(s + 1) * self.n_actions]
            .iter()
            .map(|&v| v as u64)
            .sum()
    }

    /// Lowest-cost action; ties go to the lowest index.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q < row[best] {
                best = a;
            }
        }
        best
    }

    pub fn min_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// With probability `epsilon` a uniform action, otherwise the greedy one.
/// Always consumes exactly two draws so seeded runs stay aligned.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    let explore: f64 = rng.gen();
    let pick = rng.gen_range(0..q.n_actions());
    if explore < epsilon {
        pick
    } else {
        q.greedy(s)
    }
}

/// `Q(s,a) += lr * (r + discount * min_a' Q(s',a') - Q(s,a))`; `next = None`
/// marks a terminal transition.
pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    next: Option<usize>,
    learning_rate: f64,
    discount: f64,
) {
    let future = next.map_or(0.0, |sn| discount * q.min_value(sn));
    let i = s * q.n_actions + a;
    q.values[i] += learning_rate * (r + future - q.values[i]);
    q.visits[i] = q.visits[i].saturating_add(1);
}
