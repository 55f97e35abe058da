//! Average-reward planning against closed forms and exact policy evaluation.

use continua::oracle::{bfs_distances, cesaro_gain, deterministic_policy, enumerate_optimal_gain};
use continua::planning::{prioritized_sweep, rvi_plan, PlanState, RviConfig, TabularModel};
use continua::testbeds::{ContinuingEnv, EnvId, TwoRooms, GOAL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(id: EnvId) -> RviConfig {
    RviConfig {
        tol: 1e-10,
        reference: if id == EnvId::TwoRooms { GOAL } else { 0 },
        aperiodicity: 0.5,
        ..RviConfig::default()
    }
}

#[test]
fn two_rooms_gain_is_one_over_mean_cycle_length() {
    // Each cycle: one teleport step, then a shortest walk back to the goal.
    let d = TwoRooms::dynamics();
    let dist = bfs_distances(&d, GOAL);
    let starts: Vec<f64> = (0..d.n_states).filter(|&s| s != GOAL).map(|s| dist[s].unwrap() as f64).collect();
    let mean = starts.iter().sum::<f64>() / starts.len() as f64;
    let sol = rvi_plan(&TabularModel::from_dynamics(&d), &config(EnvId::TwoRooms)).unwrap();
    assert!((sol.rho - 1.0 / (1.0 + mean)).abs() < 1e-8, "{} vs {}", sol.rho, 1.0 / (1.0 + mean));
}

#[test]
fn rvi_greedy_policy_earns_the_planned_gain_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for id in EnvId::ALL {
        let env = ContinuingEnv::new(id, &mut rng);
        let d = env.dynamics();
        let cfg = config(id);
        let sol = rvi_plan(&TabularModel::from_dynamics(d), &cfg).unwrap();
        assert!(sol.residual <= cfg.tol, "{id:?}: residual {}", sol.residual);
        let pi = deterministic_policy(d, &sol.policy);
        let start = vec![1.0 / d.n_states as f64; d.n_states];
        let g = cesaro_gain(d, &pi, &start);
        assert!((g - sol.rho).abs() < 1e-6, "{id:?}: policy gain {g} vs planned {}", sol.rho);
    }
}

#[test]
fn river_swim_gain_matches_exhaustive_enumeration() {
    let env = ContinuingEnv::new(EnvId::RiverSwim, &mut ChaCha8Rng::seed_from_u64(0));
    let (best, _) = enumerate_optimal_gain(env.dynamics()).unwrap();
    let sol = rvi_plan(&TabularModel::from_dynamics(env.dynamics()), &config(EnvId::RiverSwim)).unwrap();
    assert!((sol.rho - best).abs() < 1e-6);
}

#[test]
fn prioritized_sweeping_converges_to_the_rvi_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for id in EnvId::ALL {
        let env = ContinuingEnv::new(id, &mut rng);
        let model = TabularModel::from_dynamics(env.dynamics());
        let cfg = config(id);
        let exact = rvi_plan(&model, &cfg).unwrap();
        let theta_p = 1e-6;
        let mut plan = PlanState::new(model.n_states(), theta_p, 0.01, cfg.reference).unwrap();
        let mut used = 0;
        while !plan.queue.is_empty() && used < 10_000_000 {
            used += prioritized_sweep(&mut plan, &model, 1000);
        }
        assert!(plan.queue.is_empty(), "{id:?}: queue never drained");
        let scale = exact.v.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let dist = plan.v.iter().zip(&exact.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dist <= 1e-3 * scale, "{id:?}: distance {dist}");
        assert!((plan.rho - exact.rho).abs() <= 1e-3 * exact.rho.abs().max(1.0), "{id:?}: gain {} vs {}", plan.rho, exact.rho);
    }
}
