use greenwave_core::markov::{estimate_tpm, QuantizerSpec};
use greenwave_core::rl::{
    act, toy_energy_mdp, train, train_energy_policy, value_iteration_oracle, DriveProfile, FiniteMdp,
    LearningSchedule, MdpSpec, QTable, TrainedPolicy,
};
use greenwave_core::Powertrain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_state() -> FiniteMdp {
    // s0: a0 costs 1 and moves to s1, a1 costs 2 and stays
    // s1: a0 costs 0.5 and moves to s0, a1 costs 3 and stays
    FiniteMdp::new(
        2,
        2,
        vec![1.0, 2.0, 0.5, 3.0],
        vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)], vec![(1, 1.0)]],
        100,
    )
    .unwrap()
}

/// Exact values of every deterministic policy of the two-state MDP, solving
/// `V = r + tau P V` by Cramer's rule; the optimum is the elementwise best.
fn two_state_by_enumeration(tau: f64) -> ([f64; 2], [usize; 2]) {
    let r = [[1.0, 2.0], [0.5, 3.0]];
    let next = [[1, 0], [0, 1]];
    let mut best = ([f64::INFINITY; 2], [0; 2]);
    for a0 in 0..2 {
        for a1 in 0..2 {
            let acts = [a0, a1];
            // (I - tau P) V = r
            let mut m = [[1.0, 0.0], [0.0, 1.0]];
            for s in 0..2 {
                m[s][next[s][acts[s]]] -= tau;
            }
            let rhs = [r[0][a0], r[1][a1]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let v = [
                (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
                (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
            ];
            if v[0] <= best.0[0] && v[1] <= best.0[1] {
                best = (v, acts);
            }
        }
    }
    best
}

#[test]
fn two_state_oracle_and_learner_agree_with_enumeration() {
    let (v, policy) = two_state_by_enumeration(0.96);
    assert_eq!(policy, [0, 0]);
    // alternating 1, 0.5: V0 = (1 + 0.96*0.5) / (1 - 0.96^2)
    assert!((v[0] - 1.48 / (1.0 - 0.9216)).abs() < 1e-9);

    let mut mdp = two_state();
    let oracle = value_iteration_oracle(&mdp, 0.96, 1e-12);
    assert_eq!(oracle.policy, policy.to_vec());
    for s in 0..2 {
        assert!((oracle.values[s] - v[s]).abs() < 1e-8);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = train(&mut mdp, &LearningSchedule::default(), 0.96, None, &mut rng);
    for s in 0..2 {
        assert_eq!(out.q.greedy(s), policy[s]);
        assert!((out.q.min_value(s) - v[s]).abs() / v[s] < 0.01);
    }
}

#[test]
fn zero_discount_learns_immediate_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (ns, na) = (6, 3);
    let rewards: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(0.0..5.0)).collect();
    let transitions = (0..ns * na)
        .map(|_| vec![(rng.gen_range(0..ns), 0.5), (rng.gen_range(0..ns), 0.5)])
        .collect();
    let mut mdp = FiniteMdp::new(ns, na, rewards.clone(), transitions, 20).unwrap();
    let sched = LearningSchedule {
        episodes: 3000,
        ..LearningSchedule::default()
    };
    let out = train(&mut mdp, &sched, 0.0, None, &mut rng);
    for s in 0..ns {
        let row = &rewards[s * na..(s + 1) * na];
        let want = (0..na).min_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(out.q.greedy(s), want, "state {s}");
        // Q climbs towards r from the zero start and never overshoots
        for a in 0..na {
            assert!(out.q.get(s, a) <= row[a] + 1e-12);
        }
        assert!((out.q.min_value(s) - row[want]).abs() < 0.01 * row[want]);
    }
}

#[test]
fn training_is_reproducible_per_seed() {
    let run = |seed| {
        let mut mdp = FiniteMdp::new(
            2,
            2,
            vec![1.0, 2.0, 0.5, 3.0],
            vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 1.0)], vec![(0, 0.3), (1, 0.7)], vec![(1, 1.0)]],
            50,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sched = LearningSchedule {
            episodes: 200,
            ..LearningSchedule::default()
        };
        train(&mut mdp, &sched, 0.9, None, &mut rng)
    };
    let (a, b, c) = (run(5), run(5), run(6));
    assert_eq!(a.q.values(), b.q.values());
    assert_eq!(a.curve, b.curve);
    assert_ne!(a.q.values(), c.q.values());
}

#[test]
fn curve_records_the_schedule() {
    let mut mdp = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sched = LearningSchedule {
        episodes: 50,
        ..LearningSchedule::default()
    };
    let out = train(&mut mdp, &sched, 0.9, None, &mut rng);
    assert_eq!(out.curve.len(), 50);
    for (k, e) in out.curve.iter().enumerate() {
        assert_eq!(e.episode, k);
        assert!((e.learning_rate - 1.0 / ((k + 2) as f64).sqrt()).abs() < 1e-15);
        assert!((e.epsilon - 0.2 * 0.99f64.powi(k as i32)).abs() < 1e-15);
        assert_eq!(e.steps, 100);
    }
    let csv = out.curve_csv();
    assert!(csv.starts_with("episode,cost,epsilon,gamma\n"));
    assert_eq!(csv.lines().count(), 51);
}

fn cruise_profile(len: usize, seed: u64) -> DriveProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: f64 = 12.0;
    let mut p = DriveProfile::default();
    for _ in 0..len {
        v = (v + rng.gen_range(-0.5..0.5)).clamp(2.0, 18.0);
        p.speed.push(v);
        p.demand.push(rng.gen_range(-5e3..15e3));
    }
    p
}

fn small_policy(episodes: usize) -> (TrainedPolicy, Vec<DriveProfile>) {
    let spec = MdpSpec::default();
    let profiles = vec![cruise_profile(200, 1), cruise_profile(200, 2)];
    let trace: Vec<(f64, f64)> = profiles
        .iter()
        .flat_map(|p| p.demand.iter().copied().zip(p.speed.iter().copied()))
        .collect();
    let tpm = estimate_tpm(&trace, &spec.quantizer).unwrap();
    let sched = LearningSchedule {
        episodes,
        ..LearningSchedule::default()
    };
    let pol = train_energy_policy(&spec, &sched, &tpm, &Powertrain::default(), &profiles, None, 9).unwrap();
    (pol, profiles)
}

#[test]
fn qtable_text_round_trip() {
    let (pol, _) = small_policy(20);
    let back = TrainedPolicy::from_text(&pol.to_text()).unwrap();
    assert_eq!(back.spec, pol.spec);
    assert_eq!(back.schedule, pol.schedule);
    assert_eq!(back.q.values(), pol.q.values());
    for s in 0..pol.q.n_states() {
        for a in 0..pol.q.n_actions() {
            assert_eq!(back.q.visits(s, a), pol.q.visits(s, a));
        }
    }
    assert!(TrainedPolicy::from_text("qtable 1 2").is_err());
}

#[test]
fn training_can_resume_from_a_table() {
    let (pol, profiles) = small_policy(20);
    let trace: Vec<(f64, f64)> = profiles
        .iter()
        .flat_map(|p| p.demand.iter().copied().zip(p.speed.iter().copied()))
        .collect();
    let tpm = estimate_tpm(&trace, &pol.spec.quantizer).unwrap();
    let pt = Powertrain::default();
    let more = train_energy_policy(&pol.spec, &pol.schedule, &tpm, &pt, &profiles, Some(pol.q.clone()), 10).unwrap();
    assert_eq!(more.q.episodes, 40);
    let wrong = QTable::new(3, 11);
    assert!(train_energy_policy(&pol.spec, &pol.schedule, &tpm, &pt, &profiles, Some(wrong), 10).is_err());
}

#[test]
fn unvisited_states_use_the_fallback() {
    let (pol, _) = small_policy(5);
    let pt = Powertrain::default();
    // a SOC far from the 0.6 start is never reached in five short episodes
    let d = act(&pol.q, &pol.spec, &pt, 0.41, 40e3, 19.0);
    assert!(d.cold);
    assert_eq!(d.throttle, pol.spec.throttle(d.action));
    let s = pol.spec.state(0.6, pol.spec.quantizer.power_center(0), 12.0);
    assert_eq!(pol.q.state_visits(s) > 0, !act(&pol.q, &pol.spec, &pt, 0.6, pol.spec.quantizer.power_center(0), 12.0).cold);
}

#[test]
fn toy_energy_mdp_is_a_valid_model() {
    let spec = MdpSpec {
        soc_levels: 9,
        quantizer: QuantizerSpec {
            power_bins: 5,
            p_lo: -10e3,
            p_hi: 20e3,
            speed_bins: 4,
            v_lo: 0.0,
            v_hi: 20.0,
        },
        ..MdpSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trace: Vec<(f64, f64)> = (0..2000)
        .map(|_| (rng.gen_range(-10e3..20e3), rng.gen_range(10.0..15.0)))
        .collect();
    let tpm = estimate_tpm(&trace, &spec.quantizer).unwrap();
    let mdp = toy_energy_mdp(&spec, &tpm, &Powertrain::default(), 2, 50).unwrap();
    assert_eq!(mdp.n_states, 45);
    assert_eq!(mdp.n_actions, 11);
    // every row is a distribution (checked by the constructor) over the
    // demand row, split across at most two SOC levels
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let succ = mdp.successors(s, a);
            let demand: f64 = succ.iter().map(|&(_, p)| p).sum();
            assert!((demand - 1.0).abs() < 1e-9);
            let mut levels: Vec<usize> = succ.iter().map(|&(ns, _)| ns / 5).collect();
            levels.sort_unstable();
            levels.dedup();
            assert!(levels.len() <= 2);
        }
    }
    let sol = value_iteration_oracle(&mdp, 0.96, 1e-10);
    assert!(sol.values.iter().all(|v| v.is_finite() && *v >= 0.0));
}
