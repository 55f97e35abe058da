use super::{ContinuingEnv, Dynamics, EnvId, Outcome};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

const N: usize = 6;
const R_SMALL: f64 = 5.0;
const R_LARGE: f64 = 1000.0;

/// Six-state chain. LEFT always succeeds; RIGHT fights a current.
pub struct RiverSwim;

impl RiverSwim {
    pub const N_STATES: usize = N;
    pub const R_SMALL: f64 = R_SMALL;
    pub const R_LARGE: f64 = R_LARGE;

    pub fn build() -> ContinuingEnv {
        let mut outcomes = vec![vec![Vec::new(); 2]; N];
        for s in 0..N {
            let left = s.saturating_sub(1);
            let reward = if s == 0 { R_SMALL } else { 0.0 };
            outcomes[s][LEFT].push(Outcome {
                next: left,
                prob: 1.0,
                reward,
            });

            let right = &mut outcomes[s][RIGHT];
            match s {
                0 => {
                    right.push(Outcome { next: 1, prob: 0.60, reward: 0.0 });
                    right.push(Outcome { next: 0, prob: 0.40, reward: 0.0 });
                }
                s if s == N - 1 => {
                    right.push(Outcome { next: s, prob: 0.60, reward: R_LARGE });
                    right.push(Outcome { next: s - 1, prob: 0.40, reward: 0.0 });
                }
                s => {
                    right.push(Outcome { next: s + 1, prob: 0.35, reward: 0.0 });
                    right.push(Outcome { next: s, prob: 0.60, reward: 0.0 });
                    right.push(Outcome { next: s - 1, prob: 0.05, reward: 0.0 });
                }
            }
        }
        let params = vec![
            ("n_states".into(), N.to_string()),
            ("r_small".into(), R_SMALL.to_string()),
            ("r_large".into(), R_LARGE.to_string()),
            ("right_interior".into(), "0.35/0.60/0.05".into()),
            ("right_ends".into(), "0.60/0.40".into()),
        ];
        ContinuingEnv::from_parts(
            EnvId::RiverSwim,
            Dynamics {
                n_states: N,
                n_actions: 2,
                outcomes,
            },
            params,
            0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn left_is_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut env = RiverSwim::build();
        for _ in 0..100 {
            env.set_state(3).unwrap();
            let s = env.env_step(LEFT, &mut rng).unwrap();
            assert_eq!((s.observation, s.reward), (2, 0.0));
        }
        env.set_state(0).unwrap();
        let s = env.env_step(LEFT, &mut rng).unwrap();
        assert_eq!((s.observation, s.reward), (0, R_SMALL));
    }

    // Frequency-count oracle against the declared RIGHT table.
    #[test]
    fn right_frequencies_match_table() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut env = RiverSwim::build();
        let table = env.dynamics().clone();
        let n = 100_000;
        for s in 0..N {
            let mut counts = [0usize; N];
            for _ in 0..n {
                env.set_state(s).unwrap();
                counts[env.env_step(RIGHT, &mut rng).unwrap().observation] += 1;
            }
            let expected = table.next_distribution(s, RIGHT);
            for t in 0..N {
                let freq = counts[t] as f64 / n as f64;
                assert!((freq - expected[t]).abs() <= 0.01, "s={s} t={t} {freq}");
            }
        }
    }

    #[test]
    fn reward_support() {
        let env = RiverSwim::build();
        for row in &env.dynamics().outcomes {
            for outs in row {
                for o in outs {
                    assert!([0.0, R_SMALL, R_LARGE].contains(&o.reward));
                }
            }
        }
    }
}
