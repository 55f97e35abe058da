//! Softmax actor-critic for bandits and continuing control.
//!
//! Preferences are linear in features (`h(a) = theta_a . x`); one-hot
//! features give the tabular case and a constant feature gives the bandit.
//! The critic is a differential TD learner whose rate estimate is the only
//! average-reward estimate the agent keeps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::gvf::{Cumulant, GvfLearner, GvfSpec, GvfTransition};
use crate::learner::dot;

/// Bound on each preference parameter; keeps every action probability away
/// from zero so the policy stays plastic.
pub const PREF_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    /// Row-major `n_actions x n_features`.
    theta: Vec<f64>,
    n_actions: usize,
    n_features: usize,
}

impl SoftmaxPolicy {
    pub fn new(n_actions: usize, n_features: usize) -> Result<Self> {
        if n_actions == 0 || n_features == 0 {
            return Err(Error::Config("policy needs at least one action and one feature".into()));
        }
        Ok(Self {
            theta: vec![0.0; n_actions * n_features],
            n_actions,
            n_features,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        check_dim("policy parameters", self.theta.len(), theta.len())?;
        for (t, &v) in self.theta.iter_mut().zip(theta) {
            *t = v.clamp(-PREF_CLAMP, PREF_CLAMP);
        }
        Ok(())
    }

    pub fn preferences(&self, feat: &[f64]) -> Vec<f64> {
        self.theta.chunks(self.n_features).map(|row| dot(row, feat)).collect()
    }

    pub fn probabilities(&self, feat: &[f64]) -> Vec<f64> {
        softmax(&self.preferences(feat))
    }

    /// Gradient of `ln pi(action | feat)` with respect to the parameters.
    pub fn grad_log_prob(&self, feat: &[f64], action: usize) -> Vec<f64> {
        let p = self.probabilities(feat);
        let mut g = vec![0.0; self.theta.len()];
        for b in 0..self.n_actions {
            let coef = if b == action { 1.0 } else { 0.0 } - p[b];
            for (gi, &x) in g[b * self.n_features..(b + 1) * self.n_features].iter_mut().zip(feat) {
                *gi = coef * x;
            }
        }
        g
    }

    /// Samples an action; returns it with its probability.
    pub fn policy_sample<R: Rng + ?Sized>(&self, feat: &[f64], rng: &mut R) -> Result<(usize, f64)> {
        check_dim("policy features", self.n_features, feat.len())?;
        let p = self.probabilities(feat);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &pa) in p.iter().enumerate() {
            acc += pa;
            if u < acc {
                return Ok((a, pa));
            }
        }
        let last = self.n_actions - 1;
        Ok((last, p[last]))
    }
}

/// Numerically stable softmax.
pub fn softmax(prefs: &[f64]) -> Vec<f64> {
    let m = prefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = prefs.iter().map(|&h| (h - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticConfig {
    pub alpha_critic: f64,
    /// Actor step-size as a multiple of the critic's.
    pub actor_ratio: f64,
    pub lambda_actor: f64,
    pub lambda_critic: f64,
    pub eta_rate: f64,
}

impl Default for ActorCriticConfig {
    fn default() -> Self {
        Self {
            alpha_critic: 0.1,
            actor_ratio: 0.1,
            lambda_actor: 0.0,
            lambda_critic: 0.0,
            eta_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticAgent {
    pub policy: SoftmaxPolicy,
    pub critic: GvfLearner,
    critic_spec: GvfSpec,
    z_theta: Vec<f64>,
    alpha_actor: f64,
    lambda_actor: f64,
}

impl ActorCriticAgent {
    pub fn new(n_actions: usize, n_features: usize, cfg: &ActorCriticConfig) -> Result<Self> {
        let alpha_actor = cfg.alpha_critic * cfg.actor_ratio;
        if !(alpha_actor > 0.0 && alpha_actor.is_finite()) {
            return Err(Error::Config("actor step-size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.lambda_actor) {
            return Err(Error::Config("lambda_actor must lie in [0, 1]".into()));
        }
        let critic_spec = GvfSpec::differential(Cumulant::Reward, cfg.lambda_critic, cfg.eta_rate);
        critic_spec.validate()?;
        let policy = SoftmaxPolicy::new(n_actions, n_features)?;
        Ok(Self {
            z_theta: vec![0.0; policy.theta.len()],
            policy,
            critic: GvfLearner::new(n_features, cfg.alpha_critic)?,
            critic_spec,
            alpha_actor,
            lambda_actor: cfg.lambda_actor,
        })
    }

    pub fn rho_bar(&self) -> f64 {
        self.critic.rho_bar()
    }

    /// One on-policy learning step after taking `action` in `feat_t`.
    /// Returns the critic's TD error.
    pub fn actor_critic_step(&mut self, feat_t: &[f64], action: usize, reward: f64, feat_next: &[f64]) -> Result<f64> {
        if action >= self.policy.n_actions {
            return Err(Error::Input(format!("action {action} out of range")));
        }
        check_finite("reward", reward)?;
        let grad = self.policy.grad_log_prob(feat_t, action);
        let tr = GvfTransition::on_policy(feat_t, feat_next, reward, 0);
        let delta = self.critic.gvf_step(&self.critic_spec, &tr)?;
        for ((z, t), g) in self.z_theta.iter_mut().zip(self.policy.theta.iter_mut()).zip(grad) {
            *z = self.lambda_actor * *z + g;
            *t = (*t + self.alpha_actor * delta * *z).clamp(-PREF_CLAMP, PREF_CLAMP);
        }
        Ok(delta)
    }
}
