//! General value functions: linear TD(lambda) prediction of an arbitrary
//! cumulant in discounted, differential (average-reward) and duration form.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::learner::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cumulant {
    Reward,
    /// `scale * reward`.
    ScaledReward(f64),
    Constant(f64),
    /// Value of a component of the next feature vector.
    Feature(usize),
    /// Indicator that the next observation equals the given state.
    Observation(usize),
}

impl Cumulant {
    pub fn value(&self, feat_next: &[f64], reward: f64, obs_next: usize) -> f64 {
        match *self {
            Cumulant::Reward => reward,
            Cumulant::ScaledReward(c) => c * reward,
            Cumulant::Constant(c) => c,
            Cumulant::Feature(i) => feat_next.get(i).copied().unwrap_or(0.0),
            Cumulant::Observation(s) => f64::from(u8::from(obs_next == s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Continuation {
    Constant(f64),
    /// Per-observation continuation probability `gamma(s')`.
    PerState(Vec<f64>),
}

impl Continuation {
    /// Continuation with termination probabilities `beta`, i.e. `1 - beta(s')`.
    pub fn until_termination(beta: &[f64]) -> Self {
        Continuation::PerState(beta.iter().map(|b| 1.0 - b).collect())
    }

    pub fn value(&self, obs_next: usize) -> f64 {
        match self {
            Continuation::Constant(g) => *g,
            Continuation::PerState(g) => g.get(obs_next).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GvfMode {
    Discounted,
    /// Undiscounted; a tracked rate is subtracted from the cumulant.
    Differential,
    /// Cumulant 1 until termination: predicts steps to termination.
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Accumulating,
    /// For binary features: active components are set to 1.
    Replacing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvfSpec {
    pub cumulant: Cumulant,
    pub continuation: Continuation,
    pub lambda: f64,
    pub mode: GvfMode,
    /// Rate-tracking step-size (differential mode only).
    pub eta_rate: f64,
    pub trace: TraceKind,
}

impl GvfSpec {
    pub fn discounted(cumulant: Cumulant, gamma: f64, lambda: f64) -> Self {
        Self {
            cumulant,
            continuation: Continuation::Constant(gamma),
            lambda,
            mode: GvfMode::Discounted,
            eta_rate: 0.0,
            trace: TraceKind::Accumulating,
        }
    }

    pub fn differential(cumulant: Cumulant, lambda: f64, eta_rate: f64) -> Self {
        Self {
            cumulant,
            continuation: Continuation::Constant(1.0),
            lambda,
            mode: GvfMode::Differential,
            eta_rate,
            trace: TraceKind::Accumulating,
        }
    }

    /// Expected steps until termination under `beta(s')`.
    pub fn duration(beta: &[f64], lambda: f64) -> Self {
        Self {
            cumulant: Cumulant::Constant(1.0),
            continuation: Continuation::until_termination(beta),
            lambda,
            mode: GvfMode::Duration,
            eta_rate: 0.0,
            trace: TraceKind::Accumulating,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.mode == GvfMode::Differential && self.continuation != Continuation::Constant(1.0) {
            return Err(Error::Config("differential mode requires gamma = 1".into()));
        }
        if self.mode == GvfMode::Duration && self.cumulant != Cumulant::Constant(1.0) {
            return Err(Error::Config("duration mode requires cumulant = 1".into()));
        }
        Ok(())
    }

    fn gamma_next(&self, obs_next: usize) -> f64 {
        match self.mode {
            GvfMode::Differential => 1.0,
            _ => self.continuation.value(obs_next),
        }
    }
}

/// One transition as seen by a GVF learner.
#[derive(Debug, Clone, Copy)]
pub struct GvfTransition<'a> {
    pub feat_t: &'a [f64],
    pub feat_next: &'a [f64],
    pub reward: f64,
    pub obs_next: usize,
    /// Importance-sampling ratio `pi(a|s) / mu(a|s)`; 1 on-policy.
    pub ratio: f64,
}

impl<'a> GvfTransition<'a> {
    pub fn on_policy(feat_t: &'a [f64], feat_next: &'a [f64], reward: f64, obs_next: usize) -> Self {
        Self {
            feat_t,
            feat_next,
            reward,
            obs_next,
            ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvfLearner {
    weights: Vec<f64>,
    z: Vec<f64>,
    rho_bar: f64,
    log_alpha: Vec<f64>,
    /// Meta step-size for per-weight TD step-size adaptation; 0 keeps them fixed.
    theta_meta: f64,
    h: Vec<f64>,
    /// Continuation of the previous transition, which decays the trace.
    last_gamma: f64,
    /// Step-size decay scale: step-sizes shrink as `d / (d + n)` with `n`
    /// the accumulated activity of a weight (steps, for the rate); 0 disables.
    decay: f64,
    activity: Vec<f64>,
    steps: f64,
}

impl GvfLearner {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("GVF step-size must be positive, got {alpha}")));
        }
        Ok(Self {
            weights: vec![0.0; n],
            z: vec![0.0; n],
            rho_bar: 0.0,
            log_alpha: vec![alpha.ln(); n],
            theta_meta: 0.0,
            h: vec![0.0; n],
            last_gamma: 0.0,
            decay: 0.0,
            activity: vec![0.0; n],
            steps: 0.0,
        })
    }

    /// Enables harmonically decaying step-sizes with scale `d` (0 disables).
    pub fn with_decay(mut self, d: f64) -> Self {
        self.decay = d.max(0.0);
        self
    }

    /// Enables per-weight step-size meta-learning (IDBD applied to TD).
    pub fn with_meta(mut self, theta: f64) -> Self {
        self.theta_meta = theta;
        self
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn traces(&self) -> &[f64] {
        &self.z
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn set_rho_bar(&mut self, rho: f64) {
        self.rho_bar = rho;
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        check_dim("GVF weights", self.dim(), w.len())?;
        self.weights.copy_from_slice(w);
        Ok(())
    }

    pub fn step_size(&self, i: usize) -> f64 {
        self.log_alpha[i].exp()
    }

    pub fn predict(&self, feat: &[f64]) -> f64 {
        dot(&self.weights, feat)
    }

    /// Clears the trace (e.g. when a new, unrelated segment of experience starts).
    pub fn reset_traces(&mut self) {
        self.z.iter_mut().for_each(|z| *z = 0.0);
        self.last_gamma = 0.0;
    }

    /// One TD(lambda) update; returns the TD error.
    pub fn gvf_step(&mut self, spec: &GvfSpec, tr: &GvfTransition<'_>) -> Result<f64> {
        check_dim("GVF features", self.dim(), tr.feat_t.len())?;
        check_dim("GVF next features", self.dim(), tr.feat_next.len())?;

        let decay = self.last_gamma * spec.lambda;
        for (z, &x) in self.z.iter_mut().zip(tr.feat_t) {
            *z = match spec.trace {
                TraceKind::Accumulating => decay * *z + x,
                TraceKind::Replacing if x != 0.0 => x,
                TraceKind::Replacing => decay * *z,
            } * tr.ratio;
        }

        let c = spec.cumulant.value(tr.feat_next, tr.reward, tr.obs_next);
        let gamma = spec.gamma_next(tr.obs_next);
        let v_t = self.predict(tr.feat_t);
        let v_next = self.predict(tr.feat_next);
        let delta = match spec.mode {
            GvfMode::Differential => c - self.rho_bar + v_next - v_t,
            GvfMode::Discounted | GvfMode::Duration => c + gamma * v_next - v_t,
        };
        let delta = check_finite("TD error", delta)?;

        let shrink = |n: f64| if self.decay > 0.0 { self.decay / (self.decay + n) } else { 1.0 };
        self.steps += 1.0;
        if spec.mode == GvfMode::Differential {
            self.rho_bar += shrink(self.steps) * spec.eta_rate * delta;
        }
        for (n, &x) in self.activity.iter_mut().zip(tr.feat_t) {
            *n += x.abs();
        }
        for i in 0..self.weights.len() {
            if self.theta_meta > 0.0 {
                self.log_alpha[i] =
                    (self.log_alpha[i] + self.theta_meta * delta * self.z[i] * self.h[i]).clamp(-20.0, 0.0);
            }
            let alpha = self.log_alpha[i].exp() * shrink(self.activity[i]);
            self.weights[i] += alpha * delta * self.z[i];
            if self.theta_meta > 0.0 {
                self.h[i] = self.h[i] * (1.0 - alpha * self.z[i] * tr.feat_t[i]).max(0.0)
                    + alpha * delta * self.z[i];
            }
        }
        self.last_gamma = gamma;
        Ok(delta)
    }

    /// Predicted steps to termination (learner trained in duration mode).
    pub fn duration_predict(&self, feat: &[f64]) -> f64 {
        self.predict(feat)
    }
}

/// One-hot encoding of a discrete state.
pub fn one_hot(n: usize, s: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[s] = 1.0;
    v
}
