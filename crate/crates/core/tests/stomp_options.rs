//! Learned options and option models on the two-room problem.

use continua::oracle::{bfs_distances, option_model};
use continua::planning::{rvi_plan, RviConfig, TabularModel};
use continua::stomp::{make_subtask, plan_with_models, OptionModel, StompConfig, StompLearner};
use continua::testbeds::{ContinuingEnv, EnvId, TwoRooms, GOAL, HALLWAY};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEPS: u64 = 200_000;
const CONSOLIDATION: u64 = 20_000;

/// Learns a hallway option (bonus `hallway_bonus`) and a goal option
/// (bonus `goal_bonus`), then lets the models settle with policies frozen.
fn trained(seed: u64, hallway_bonus: f64, goal_bonus: f64) -> StompLearner {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = ContinuingEnv::new(EnvId::TwoRooms, &mut rng);
    let n = env.num_states();
    let subtasks = vec![
        (make_subtask(HALLWAY, hallway_bonus).unwrap(), (0..n).map(TwoRooms::in_room1).collect()),
        (make_subtask(GOAL, goal_bonus).unwrap(), (0..n).map(|s| s != GOAL).collect()),
    ];
    let mut learner = StompLearner::new(n, 4, &subtasks, StompConfig::default()).unwrap();
    for _ in 0..STEPS {
        learner.step(&mut env, &mut rng).unwrap();
    }
    learner.learn_policies = false;
    for _ in 0..CONSOLIDATION {
        learner.step(&mut env, &mut rng).unwrap();
    }
    learner
}

fn plan_cfg() -> RviConfig {
    RviConfig {
        tol: 1e-6,
        reference: GOAL,
        gain_step: 0.5,
        ..RviConfig::default()
    }
}

#[test]
fn hallway_option_walks_shortest_paths_and_its_model_lands_there() {
    let d = TwoRooms::dynamics();
    let dist = bfs_distances(&d, HALLWAY);
    for seed in 0..3 {
        let l = trained(seed, 1.0, 1.0);
        let (opt, model) = (&l.options[0], &l.models[0]);
        for s in (0..d.n_states).filter(|&s| TwoRooms::in_room1(s)) {
            assert_eq!(opt.beta[s], 0.0, "seed {seed}: option stops early at {s}");
            let next = d.outcomes[s][opt.policy[s]][0].next;
            assert_eq!(dist[next].unwrap() + 1, dist[s].unwrap(), "seed {seed}: detour at {s}");
            assert!(model.p_model[s][HALLWAY] >= 0.99, "seed {seed}: mass {} at {s}", model.p_model[s][HALLWAY]);
        }
    }
}

#[test]
fn learned_option_models_match_exact_solutions() {
    let d = TwoRooms::dynamics();
    for seed in 0..3 {
        let l = trained(seed, 1.0, 1.0);
        for (opt, model) in l.options.iter().zip(&l.models) {
            let exact = option_model(&d, &opt.policy_matrix(), &opt.beta, l.rho_bar).unwrap();
            for s in (0..d.n_states).filter(|&s| opt.initiation[s]) {
                assert!((exact.reward[s] - model.r_model[s]).abs() <= 1e-3, "seed {seed}: reward at {s}");
                assert!((exact.duration[s] - model.n_model[s]).abs() <= 1e-3, "seed {seed}: duration at {s}");
            }
        }
    }
}

#[test]
fn planning_with_options_loses_no_gain() {
    for seed in 0..3 {
        let l = trained(seed, 1.0, 1.0);
        let cfg = plan_cfg();
        let flat = plan_with_models(&l.primitive, &[], &cfg, l.rho_bar).unwrap();
        let models: Vec<&OptionModel> = l.models.iter().collect();
        let with = plan_with_models(&l.primitive, &models, &cfg, l.rho_bar).unwrap();
        assert!(with.rho >= flat.rho - 1e-5, "seed {seed}: {} vs flat {}", with.rho, flat.rho);
    }
}

#[test]
fn bonus_free_option_acts_near_optimally_where_it_continues() {
    let d = TwoRooms::dynamics();
    let model = TabularModel::from_dynamics(&d);
    let opt_sol = rvi_plan(&model, &RviConfig { tol: 1e-10, ..plan_cfg() }).unwrap();
    let q = |s: usize, a: usize| model.backup(s, a, &opt_sol.v, opt_sol.rho);
    for seed in 0..3 {
        let l = trained(seed, 1.0, 0.0);
        let opt = &l.options[1];
        let continuing: Vec<usize> = (0..d.n_states).filter(|&s| opt.initiation[s] && opt.beta[s] == 0.0).collect();
        assert!(!continuing.is_empty(), "seed {seed}: option never continues");
        for s in continuing {
            let best = (0..4).map(|a| q(s, a)).fold(f64::NEG_INFINITY, f64::max);
            let gap = best - q(s, opt.policy[s]);
            assert!(gap < 0.05, "seed {seed}: gap {gap} at {s}");
        }
    }
}
