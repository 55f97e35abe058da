//! Evaluation environments: the drifting supervised stream and three
//! continuing (episode-free) control problems.

mod access_control;
mod river_swim;
mod supervised;
mod two_rooms;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use access_control::{AccessControl, ACCEPT, PRIORITIES, REJECT};
pub use river_swim::{RiverSwim, LEFT, RIGHT};
pub use supervised::{DriftConfig, DriftingSupervisedProcess, SupervisedSample};
pub use two_rooms::{TwoRooms, DOWN, GOAL, HALLWAY, LEFT as MOVE_LEFT, RIGHT as MOVE_RIGHT, UP};

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// Exact transition structure of a finite environment, indexed `[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub n_states: usize,
    pub n_actions: usize,
    pub outcomes: Vec<Vec<Vec<Outcome>>>,
}

impl Dynamics {
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.outcomes[s][a].iter().map(|o| o.prob * o.reward).sum()
    }

    /// Dense next-state distribution for `(s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.n_states];
        for o in &self.outcomes[s][a] {
            p[o.next] += o.prob;
        }
        p
    }

    fn sample<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Outcome {
        let outs = &self.outcomes[s][a];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for o in outs {
            acc += o.prob;
            if u < acc {
                return *o;
            }
        }
        *outs.last().expect("every (s, a) has at least one outcome")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    RiverSwim,
    AccessControl,
    TwoRooms,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::RiverSwim, EnvId::AccessControl, EnvId::TwoRooms];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::RiverSwim => "river_swim",
            EnvId::AccessControl => "access_control",
            EnvId::TwoRooms => "two_rooms",
        }
    }
}

impl std::str::FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown environment '{s}' (expected river_swim, access_control or two_rooms)"
                ))
            })
    }
}

/// What the agent sees after acting; the observation is the full state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    pub observation: usize,
}

/// A continuing environment: no terminal states and no resets.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuingEnv {
    id: EnvId,
    dynamics: Dynamics,
    params: Vec<(String, String)>,
    state: usize,
}

impl ContinuingEnv {
    pub(crate) fn from_parts(
        id: EnvId,
        dynamics: Dynamics,
        params: Vec<(String, String)>,
        state: usize,
    ) -> Self {
        Self {
            id,
            dynamics,
            params,
            state,
        }
    }

    /// Builds an environment with its declared parameterization, starting
    /// in its default state (two_rooms draws a random start cell).
    pub fn new<R: Rng + ?Sized>(id: EnvId, rng: &mut R) -> Self {
        match id {
            EnvId::RiverSwim => RiverSwim::build(),
            EnvId::AccessControl => AccessControl::build(),
            EnvId::TwoRooms => TwoRooms::build(rng),
        }
    }

    pub fn id(&self) -> EnvId {
        self.id
    }

    pub fn num_states(&self) -> usize {
        self.dynamics.n_states
    }

    pub fn num_actions(&self) -> usize {
        self.dynamics.n_actions
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn set_state(&mut self, s: usize) -> Result<()> {
        if s >= self.num_states() {
            return Err(Error::Input(format!("state {s} out of range")));
        }
        self.state = s;
        Ok(())
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    /// Name/value pairs describing the full parameterization.
    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn env_step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<EnvStep> {
        if action >= self.num_actions() {
            return Err(Error::Input(format!(
                "action {action} invalid for {} ({} actions)",
                self.id.name(),
                self.num_actions()
            )));
        }
        let o = self.dynamics.sample(self.state, action, rng);
        self.state = o.next;
        Ok(EnvStep {
            reward: o.reward,
            observation: o.next,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn dynamics_rows_are_distributions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for id in EnvId::ALL {
            let env = ContinuingEnv::new(id, &mut rng);
            let d = env.dynamics();
            for s in 0..d.n_states {
                for a in 0..d.n_actions {
                    let total: f64 = d.outcomes[s][a].iter().map(|o| o.prob).sum();
                    assert!((total - 1.0).abs() < 1e-12, "{id:?} s={s} a={a}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        for id in EnvId::ALL {
            let run = |seed| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut env = ContinuingEnv::new(id, &mut rng);
                (0..500)
                    .map(|t| {
                        let a = t % env.num_actions();
                        let s = env.env_step(a, &mut rng).unwrap();
                        (s.observation, s.reward.to_bits())
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(5), run(5));
        }
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut env = ContinuingEnv::new(EnvId::RiverSwim, &mut rng);
        assert!(matches!(env.env_step(2, &mut rng), Err(Error::Input(_))));
    }

    #[test]
    fn env_ids_parse() {
        for id in EnvId::ALL {
            assert_eq!(id.name().parse::<EnvId>().unwrap(), id);
        }
        assert!("jellybean".parse::<EnvId>().is_err());
    }
}
