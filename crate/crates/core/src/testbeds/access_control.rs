use super::{ContinuingEnv, Dynamics, EnvId, Outcome};

pub const REJECT: usize = 0;
pub const ACCEPT: usize = 1;
pub const PRIORITIES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

const SERVERS: usize = 4;
const FREE_PROB: f64 = 0.04;

/// Access-control queuing: the head customer is accepted or rejected, busy
/// servers free up independently, and a new customer of uniform priority
/// arrives. State index is `free * 4 + priority_index`.
pub struct AccessControl;

impl AccessControl {
    pub const SERVERS: usize = SERVERS;
    pub const FREE_PROB: f64 = FREE_PROB;

    pub fn state_index(free: usize, priority: usize) -> usize {
        free * PRIORITIES.len() + priority
    }

    pub fn decode(s: usize) -> (usize, usize) {
        (s / PRIORITIES.len(), s % PRIORITIES.len())
    }

    pub fn build() -> ContinuingEnv {
        let np = PRIORITIES.len();
        let n_states = (SERVERS + 1) * np;
        let mut outcomes = vec![vec![Vec::new(); 2]; n_states];
        for s in 0..n_states {
            let (free, pi) = Self::decode(s);
            for a in [REJECT, ACCEPT] {
                let (free_after, reward) = if a == ACCEPT && free > 0 {
                    (free - 1, PRIORITIES[pi])
                } else {
                    (free, 0.0)
                };
                let busy = SERVERS - free_after;
                for released in 0..=busy {
                    let p_rel = binomial(busy, released, FREE_PROB);
                    for next_pi in 0..np {
                        outcomes[s][a].push(Outcome {
                            next: Self::state_index(free_after + released, next_pi),
                            prob: p_rel / np as f64,
                            reward,
                        });
                    }
                }
            }
        }
        let params = vec![
            ("servers".into(), SERVERS.to_string()),
            ("free_prob".into(), FREE_PROB.to_string()),
            ("priorities".into(), "1/2/4/8".into()),
        ];
        ContinuingEnv::from_parts(
            EnvId::AccessControl,
            Dynamics {
                n_states,
                n_actions: 2,
                outcomes,
            },
            params,
            Self::state_index(SERVERS, 0),
        )
    }
}

fn binomial(n: usize, k: usize, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}
