use continua::features::{FeatureKind, FeaturePool, FeatureSearchLearner, FeatureStats, PoolConfig};
use continua::learner::LearnerConfig;
use continua::rng::SeedTree;
use continua::testbeds::{DriftConfig, DriftingSupervisedProcess};
use proptest::prelude::*;
use rand::SeedableRng;

fn cfg(n_max: usize, maturity_age: u64) -> PoolConfig {
    PoolConfig { n_max, maturity_age, ..PoolConfig::default() }
}

fn check_structure(pool: &FeaturePool) -> Result<(), TestCaseError> {
    prop_assert!(pool.len() <= pool.n_max());
    let f = pool.features();
    for def in f {
        for &p in &def.parents {
            prop_assert!(f[p].id < def.id, "parent {} not older than {}", f[p].id, def.id);
        }
        match &def.kind {
            FeatureKind::Product => prop_assert_eq!(def.parents.len(), 2),
            FeatureKind::Trace { decay } => {
                prop_assert_eq!(def.parents.len(), 1);
                prop_assert!(*decay > 0.0 && *decay < 1.0);
            }
            FeatureKind::Raw(_) => prop_assert!(def.parents.is_empty()),
            FeatureKind::LinearThreshold { signs, .. } => prop_assert_eq!(signs.len(), def.parents.len()),
        }
    }
    Ok(())
}

fn random_stats(pool: &FeaturePool, draws: &[f64]) -> Vec<FeatureStats> {
    (0..pool.len())
        .map(|i| FeatureStats { weight_abs: draws[i % draws.len()], alpha: 0.01, sigma: 1.0 })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_and_acyclicity_hold_through_replacement(
        seed in any::<u64>(),
        base in 1usize..6,
        extra in 0usize..20,
        expand in 0usize..40,
        draws in prop::collection::vec(0.0..2.0f64, 1..30),
        rounds in 1usize..20,
    ) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pool = FeaturePool::new(base, cfg(base + extra, 3)).unwrap();
        pool.expand_features(&mut rng, expand);
        check_structure(&pool)?;
        for r in 0..rounds {
            let stats = random_stats(&pool, &draws[r % draws.len()..]);
            for _ in 0..4 {
                pool.track_utility(&stats).unwrap();
            }
            let before = pool.len();
            let culled = pool.evaluate_and_replace(&stats, &mut rng).unwrap();
            prop_assert_eq!(pool.len(), before);
            for &i in &culled {
                prop_assert!(!pool.features()[i].is_raw());
                prop_assert_eq!(pool.features()[i].age, 0);
            }
            check_structure(&pool)?;
        }
    }

    #[test]
    fn features_younger_than_maturity_are_never_culled(
        seed in any::<u64>(),
        draws in prop::collection::vec(0.0..2.0f64, 1..30),
        maturity in 1u64..10,
    ) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pool = FeaturePool::new(3, cfg(15, maturity)).unwrap();
        pool.expand_features(&mut rng, 12);
        for _ in 0..30 {
            let stats = random_stats(&pool, &draws);
            pool.track_utility(&stats).unwrap();
            let young: Vec<u64> = pool.features().iter().filter(|f| f.age < maturity).map(|f| f.id).collect();
            let ids: Vec<u64> = pool.features().iter().map(|f| f.id).collect();
            let culled = pool.evaluate_and_replace(&stats, &mut rng).unwrap();
            for i in culled {
                prop_assert!(!young.contains(&ids[i]), "culled a feature younger than maturity");
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_replacements(
        seed in any::<u64>(),
        draws in prop::collection::vec(0.0..2.0f64, 1..30),
    ) {
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pool = FeaturePool::new(4, cfg(16, 2)).unwrap();
            pool.expand_features(&mut rng, 12);
            let mut log = Vec::new();
            for _ in 0..10 {
                let stats = random_stats(&pool, &draws);
                pool.track_utility(&stats).unwrap();
                pool.track_utility(&stats).unwrap();
                log.push(pool.evaluate_and_replace(&stats, &mut rng).unwrap());
            }
            (log, pool.features().to_vec())
        };
        prop_assert_eq!(run(), run());
    }
}

/// On a target with a product term, the matching product feature is found
/// and ranks in the top quartile by utility after 10^5 steps.
#[test]
fn true_product_feature_ranks_top_quartile() {
    let mut hits = 0;
    for seed in 0..30 {
        let tree = SeedTree::new(seed);
        let mut env_rng = tree.stream("env");
        let mut feat_rng = tree.stream("features");
        let dcfg = DriftConfig {
            dim: 8,
            n_relevant: 8,
            drift_std: 0.0,
            switch_period: 0,
            noise_std: 0.5,
            interactions: vec![(0, 1, 2.0)],
            ..DriftConfig::default()
        };
        let mut process = DriftingSupervisedProcess::new(dcfg, &mut env_rng).unwrap();
        let lcfg = LearnerConfig { theta_meta: 0.003, init_alpha: Some(0.1 / 24.0), ..LearnerConfig::default() };
        let mut learner = FeatureSearchLearner::new(8, cfg(24, 2000), lcfg, 0.001, 1000, &mut feat_rng).unwrap();
        for _ in 0..100_000 {
            let s = process.supervised_step(&mut env_rng);
            learner.step(&s.x, s.y_star, &mut feat_rng).unwrap();
        }
        let pool = learner.pool();
        if let Some(slot) = pool.find_raw_product(0, 1) {
            let rank = pool.ranking().iter().position(|&i| i == slot).unwrap();
            hits += usize::from(rank < pool.len() / 4);
        }
    }
    assert!(hits >= 24, "product feature in top quartile for {hits}/30 seeds");
}
