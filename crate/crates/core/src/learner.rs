//! Continual linear regression with per-weight meta-learned step-sizes.
//!
//! Weights follow the LMS rule with a separate step-size per weight,
//! `w_i += alpha_i * (y* - y) * x_i`, and the bias tracks the target mean,
//! `b += alpha_b * (y* - b)`. Step-sizes are parameterized as
//! `alpha_i = exp(beta_i)` and adapted by IDBD, or by its normalized
//! (Autostep) variant.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetaRule {
    /// `beta_i += theta * delta * x_i * h_i`.
    Idbd,
    /// IDBD with the meta-update divided by a tracked magnitude and the
    /// total effective step-size bounded by one.
    Autostep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Meta step-size; 0 disables meta-learning and yields plain LMS.
    pub theta_meta: f64,
    pub alpha_b: f64,
    /// Initial per-weight step-size; `None` means `0.1 / n_features`.
    pub init_alpha: Option<f64>,
    pub meta_rule: MetaRule,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Error magnitude clip applied before any update.
    pub delta_clip: f64,
    /// Meta-learn the bias step-size with a scalar IDBD rule.
    pub bias_meta: bool,
    /// Time constant of the Autostep magnitude tracker.
    pub autostep_tau: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            theta_meta: 0.01,
            alpha_b: 0.01,
            init_alpha: None,
            meta_rule: MetaRule::Idbd,
            beta_min: -20.0,
            beta_max: 5.0,
            delta_clip: 1e6,
            bias_meta: false,
            autostep_tau: 1e4,
        }
    }
}

impl LearnerConfig {
    /// Plain LMS with one global step-size.
    pub fn lms(alpha: f64, alpha_b: f64) -> Self {
        Self {
            theta_meta: 0.0,
            alpha_b,
            init_alpha: Some(alpha),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.theta_meta >= 0.0 && self.theta_meta.is_finite()) {
            return bad(format!("theta_meta must be >= 0, got {}", self.theta_meta));
        }
        if !(self.alpha_b > 0.0 && self.alpha_b <= 1.0) {
            return bad(format!("alpha_b must lie in (0, 1], got {}", self.alpha_b));
        }
        if let Some(a) = self.init_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("init_alpha must be positive, got {a}"));
            }
        }
        if !(self.beta_min < self.beta_max) {
            return bad(format!(
                "beta bounds must satisfy min < max, got [{}, {}]",
                self.beta_min, self.beta_max
            ));
        }
        if !(self.delta_clip > 0.0) {
            return bad(format!("delta_clip must be positive, got {}", self.delta_clip));
        }
        if !(self.autostep_tau >= 1.0) {
            return bad(format!("autostep_tau must be >= 1, got {}", self.autostep_tau));
        }
        Ok(())
    }

    fn meta_enabled(&self) -> bool {
        self.theta_meta > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedExample {
    pub x_tilde: Vec<f64>,
    pub y_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub prediction: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLearner {
    w: Vec<f64>,
    b: f64,
    beta: Vec<f64>,
    h: Vec<f64>,
    /// Autostep magnitude trackers (unused under plain IDBD).
    nu: Vec<f64>,
    beta_b: f64,
    h_b: f64,
    init_beta: f64,
    cfg: LearnerConfig,
}

impl LinearLearner {
    pub fn new(n: usize, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        let init_alpha = cfg.init_alpha.unwrap_or(0.1 / n.max(1) as f64);
        let init_beta = init_alpha.ln().clamp(cfg.beta_min, cfg.beta_max);
        Ok(Self {
            w: vec![0.0; n],
            b: 0.0,
            beta: vec![init_beta; n],
            h: vec![0.0; n],
            nu: vec![0.0; n],
            beta_b: cfg.alpha_b.ln(),
            h_b: 0.0,
            init_beta,
            cfg,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn log_step_sizes(&self) -> &[f64] {
        &self.beta
    }

    pub fn traces(&self) -> &[f64] {
        &self.h
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn step_size(&self, i: usize) -> f64 {
        self.beta[i].exp()
    }

    pub fn step_sizes(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.exp()).collect()
    }

    pub fn bias_step_size(&self) -> f64 {
        if self.cfg.bias_meta {
            self.beta_b.exp().min(1.0)
        } else {
            self.cfg.alpha_b
        }
    }

    pub fn set_weights(&mut self, w: &[f64], b: f64) -> Result<()> {
        check_dim("learner weights", self.dim(), w.len())?;
        self.w.copy_from_slice(w);
        self.b = b;
        Ok(())
    }

    pub fn set_log_step_sizes(&mut self, beta: &[f64]) -> Result<()> {
        check_dim("learner log step-sizes", self.dim(), beta.len())?;
        for (dst, &src) in self.beta.iter_mut().zip(beta) {
            *dst = src.clamp(self.cfg.beta_min, self.cfg.beta_max);
        }
        Ok(())
    }

    /// Zero a weight slot and restore its initial step-size (used when a
    /// feature is replaced).
    pub fn reset_slot(&mut self, i: usize) {
        self.w[i] = 0.0;
        self.beta[i] = self.init_beta;
        self.h[i] = 0.0;
        self.nu[i] = 0.0;
    }

    pub fn predict(&self, x_tilde: &[f64]) -> Result<f64> {
        check_dim("learner input", self.dim(), x_tilde.len())?;
        Ok(dot(&self.w, x_tilde) + self.b)
    }

    pub fn learn_step(&mut self, ex: &SupervisedExample) -> Result<StepOutcome> {
        self.learn(&ex.x_tilde, ex.y_star)
    }

    pub fn learn(&mut self, x: &[f64], y_star: f64) -> Result<StepOutcome> {
        let y = check_finite("prediction", self.predict(x)?)?;
        let error = check_finite("error", y_star - y)?;
        let delta = error.clamp(-self.cfg.delta_clip, self.cfg.delta_clip);

        if self.cfg.meta_enabled() {
            match self.cfg.meta_rule {
                MetaRule::Idbd => self.idbd_update(x, delta),
                MetaRule::Autostep => self.autostep_update(x, delta),
            }
        } else {
            for i in 0..x.len() {
                let alpha = self.beta[i].exp();
                self.w[i] += alpha * delta * x[i];
            }
        }
        self.bias_update(y_star)?;

        for i in 0..x.len() {
            check_finite("weight", self.w[i])?;
            check_finite("log step-size", self.beta[i])?;
            check_finite("meta trace", self.h[i])?;
        }
        Ok(StepOutcome {
            prediction: y,
            error,
        })
    }

    fn idbd_update(&mut self, x: &[f64], delta: f64) {
        let theta = self.cfg.theta_meta;
        for i in 0..x.len() {
            self.beta[i] = (self.beta[i] + theta * delta * x[i] * self.h[i])
                .clamp(self.cfg.beta_min, self.cfg.beta_max);
        }
        self.apply_weight_update(x, delta);
    }

    /// Weight and trace update shared by both meta-rules. The effective
    /// rates are scaled so that `sum_i alpha_i x_i^2 <= 1`.
    fn apply_weight_update(&mut self, x: &[f64], delta: f64) {
        let total: f64 = (0..x.len()).map(|i| self.beta[i].exp() * x[i] * x[i]).sum();
        let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
        for i in 0..x.len() {
            let xi = x[i];
            let alpha = self.beta[i].exp() * scale;
            self.w[i] += alpha * delta * xi;
            self.h[i] = self.h[i] * (1.0 - alpha * xi * xi).max(0.0) + alpha * delta * xi;
        }
    }

    fn autostep_update(&mut self, x: &[f64], delta: f64) {
        let mu = self.cfg.theta_meta;
        let tau = self.cfg.autostep_tau;
        for i in 0..x.len() {
            let xi = x[i];
            let g = delta * xi * self.h[i];
            let alpha = self.beta[i].exp();
            self.nu[i] = g
                .abs()
                .max(self.nu[i] + alpha * xi * xi * (g.abs() - self.nu[i]) / tau);
            if self.nu[i] > 0.0 {
                self.beta[i] += mu * g / self.nu[i];
            }
        }
        let total: f64 = (0..x.len())
            .map(|i| self.beta[i].exp() * x[i] * x[i])
            .sum();
        let shrink = total.max(1.0).ln();
        for b in self.beta.iter_mut() {
            *b = (*b - shrink).clamp(self.cfg.beta_min, self.cfg.beta_max);
        }
        self.apply_weight_update(x, delta);
    }

    fn bias_update(&mut self, y_star: f64) -> Result<()> {
        let err = y_star - self.b;
        if self.cfg.bias_meta && self.cfg.theta_meta > 0.0 {
            let d = err.clamp(-self.cfg.delta_clip, self.cfg.delta_clip);
            self.beta_b = (self.beta_b + self.cfg.theta_meta * d * self.h_b)
                .clamp(self.cfg.beta_min, 0.0);
            let a = self.beta_b.exp();
            self.b += a * d;
            self.h_b = self.h_b * (1.0 - a).max(0.0) + a * d;
        } else {
            self.b += self.cfg.alpha_b * err;
        }
        check_finite("bias", self.b)?;
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
