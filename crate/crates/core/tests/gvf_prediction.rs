//! Differential and duration GVFs against exact solutions.

use continua::gvf::{one_hot, Cumulant, GvfLearner, GvfSpec, GvfTransition};
use continua::oracle::{bfs_distances, evaluate_policy, policy_chain};
use continua::testbeds::{ContinuingEnv, EnvId, TwoRooms, DOWN, HALLWAY, MOVE_LEFT, MOVE_RIGHT, UP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCALE: f64 = 1e-3;

fn river_swim_policy(p_right: f64, n: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 - p_right, p_right]; n]
}

/// Max over states of the expected differential TD error of `(v, rho)`.
fn differential_residual(env: &ContinuingEnv, pi: &[Vec<f64>], v: &[f64], rho: f64) -> f64 {
    let (p, r) = policy_chain(env.dynamics(), pi);
    (0..v.len())
        .map(|s| {
            let next: f64 = (0..v.len()).map(|t| p[(s, t)] * v[t]).sum();
            (SCALE * r[s] - rho + next - v[s]).abs()
        })
        .fold(0.0, f64::max)
}

fn learn_differential(seed: u64, p_right: f64, eta: f64, steps: u64, learner: &mut GvfLearner) -> ContinuingEnv {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = ContinuingEnv::new(EnvId::RiverSwim, &mut rng);
    let n = env.num_states();
    let spec = GvfSpec::differential(Cumulant::ScaledReward(SCALE), 0.0, eta);
    let mut x = one_hot(n, env.state());
    for _ in 0..steps {
        let a = usize::from(rng.random::<f64>() < p_right);
        let st = env.env_step(a, &mut rng).unwrap();
        let x_next = one_hot(n, st.observation);
        learner
            .gvf_step(&spec, &GvfTransition::on_policy(&x, &x_next, st.reward, st.observation))
            .unwrap();
        x = x_next;
    }
    env
}

#[test]
fn constant_step_differential_gvf_nearly_solves_bellman() {
    // The rate moves slowly: river-swim excursions are long, so a fast
    // rate only tracks the current excursion.
    let (alpha, eta) = (0.01, 1e-4);
    // Uniform random policy: every state is visited often enough for a
    // constant step-size to settle.
    let p_right = 0.5;
    let pi = river_swim_policy(p_right, 6);
    for seed in 0..5 {
        let mut learner = GvfLearner::new(6, alpha).unwrap();
        let env = learn_differential(seed, p_right, eta, 2_000_000, &mut learner);
        let res = differential_residual(&env, &pi, learner.weights(), learner.rho_bar());
        assert!(res <= 0.05, "seed {seed}: residual {res}");
        let truth = evaluate_policy(env.dynamics(), &pi, 0).unwrap();
        let rate_err = (learner.rho_bar() - SCALE * truth.gain).abs();
        assert!(rate_err < 0.02, "seed {seed}: rate error {rate_err}");
    }
}

/// Shortest-path walk to the hallway inside room 1.
fn hallway_walk(d: &[Option<usize>], s: usize) -> usize {
    let dyn_ = TwoRooms::dynamics();
    [UP, DOWN, MOVE_LEFT, MOVE_RIGHT]
        .into_iter()
        .find(|&a| {
            let t = dyn_.outcomes[s][a][0].next;
            d[t].zip(d[s]).is_some_and(|(dt, ds)| dt + 1 == ds)
        })
        .expect("a step closer exists")
}

#[test]
fn duration_gvf_learns_hallway_distances_beside_a_differential_gvf() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut env = ContinuingEnv::new(EnvId::TwoRooms, &mut rng);
    let n = env.num_states();
    let dist = bfs_distances(&TwoRooms::dynamics(), HALLWAY);
    let beta: Vec<f64> = (0..n).map(|s| f64::from(u8::from(s == HALLWAY))).collect();
    let duration = GvfSpec::duration(&beta, 0.0);
    let rate = GvfSpec::differential(Cumulant::Observation(HALLWAY), 0.0, 1e-3);
    let mut dur = GvfLearner::new(n, 0.1).unwrap();
    let mut diff = GvfLearner::new(n, 0.1).unwrap();

    env.set_state(0).unwrap();
    let mut x = one_hot(n, 0);
    for _ in 0..100_000 {
        let s = env.state();
        // From the hallway the walk restarts at a random room-1 cell.
        let s_next = if s == HALLWAY {
            let s0 = rng.random_range(0..HALLWAY);
            env.set_state(s0).unwrap();
            s0
        } else {
            env.env_step(hallway_walk(&dist, s), &mut rng).unwrap().observation
        };
        let x_next = one_hot(n, s_next);
        let tr = GvfTransition::on_policy(&x, &x_next, 0.0, s_next);
        dur.gvf_step(&duration, &tr).unwrap();
        diff.gvf_step(&rate, &tr).unwrap();
        x = x_next;
    }
    for s in 0..HALLWAY {
        let want = dist[s].unwrap() as f64;
        let got = dur.duration_predict(&one_hot(n, s));
        assert!((got - want).abs() <= 0.05 * want, "state {s}: {got} vs {want}");
    }
    // One hallway arrival per walk of mean length plus the restart step.
    let mean: f64 = (0..HALLWAY).map(|s| dist[s].unwrap() as f64).sum::<f64>() / HALLWAY as f64;
    let want = 1.0 / (mean + 1.0);
    assert!((diff.rho_bar() - want).abs() < 0.1 * want, "rate {} vs {want}", diff.rho_bar());
}
