use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the drifting regression stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub dim: usize,
    pub n_relevant: usize,
    /// Per-step random-walk std applied to relevant target weights.
    pub drift_std: f64,
    /// Steps between relevance reassignments; 0 disables switching.
    pub switch_period: u64,
    pub noise_std: f64,
    /// Std of freshly drawn target weights.
    pub weight_std: f64,
    pub b_star: f64,
    pub input_mean: f64,
    pub input_std: f64,
    /// Multiplicative factors applied to the *presented* input
    /// `(component, factor)`; the target is generated from the unscaled input.
    pub input_scale: Vec<(usize, f64)>,
    /// Product terms `(i, j, coefficient)` added to the target.
    pub interactions: Vec<(usize, usize, f64)>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            dim: 20,
            n_relevant: 5,
            drift_std: 0.01,
            switch_period: 20_000,
            noise_std: 1.0,
            weight_std: 1.0,
            b_star: 0.0,
            input_mean: 0.0,
            input_std: 1.0,
            input_scale: Vec::new(),
            interactions: Vec::new(),
        }
    }
}

/// Non-stationary supervised stream:
/// `y* = w*.x + b* + sum_k c_k x_i x_j + eta`, with `w*` random-walking on
/// its relevant components and the relevant set reassigned on a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftingSupervisedProcess {
    cfg: DriftConfig,
    w_star: Vec<f64>,
    relevant: Vec<bool>,
    scale: Vec<f64>,
    t: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSample {
    /// Input as presented to the learner (after any scale factor).
    pub x: Vec<f64>,
    pub y_star: f64,
}

impl DriftingSupervisedProcess {
    pub fn new<R: Rng + ?Sized>(cfg: DriftConfig, rng: &mut R) -> Result<Self> {
        if cfg.n_relevant > cfg.dim {
            return Err(Error::Config(format!(
                "n_relevant ({}) exceeds dim ({})",
                cfg.n_relevant, cfg.dim
            )));
        }
        if cfg.noise_std < 0.0 || cfg.drift_std < 0.0 || cfg.input_std < 0.0 {
            return Err(Error::Config("standard deviations must be >= 0".into()));
        }
        let mut scale = vec![1.0; cfg.dim];
        for &(i, f) in &cfg.input_scale {
            if i >= cfg.dim {
                return Err(Error::Config(format!("input_scale index {i} out of range")));
            }
            scale[i] = f;
        }
        if cfg
            .interactions
            .iter()
            .any(|&(i, j, _)| i >= cfg.dim || j >= cfg.dim)
        {
            return Err(Error::Config("interaction index out of range".into()));
        }
        let mut p = Self {
            w_star: vec![0.0; cfg.dim],
            relevant: vec![false; cfg.dim],
            scale,
            t: 0,
            cfg,
        };
        p.reassign_relevance(rng);
        Ok(p)
    }

    pub fn config(&self) -> &DriftConfig {
        &self.cfg
    }

    pub fn target_weights(&self) -> &[f64] {
        &self.w_star
    }

    pub fn relevant_mask(&self) -> &[bool] {
        &self.relevant
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn reassign_relevance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let chosen = sample(rng, self.cfg.dim, self.cfg.n_relevant);
        let mut next = vec![false; self.cfg.dim];
        for i in chosen.iter() {
            next[i] = true;
        }
        for i in 0..self.cfg.dim {
            if next[i] && !self.relevant[i] {
                let z: f64 = StandardNormal.sample(rng);
                self.w_star[i] = self.cfg.weight_std * z;
            } else if !next[i] {
                self.w_star[i] = 0.0;
            }
        }
        self.relevant = next;
    }

    pub fn supervised_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SupervisedSample {
        self.t += 1;
        if self.cfg.switch_period > 0 && self.t % self.cfg.switch_period == 0 {
            self.reassign_relevance(rng);
        }
        if self.cfg.drift_std > 0.0 {
            for i in 0..self.cfg.dim {
                if self.relevant[i] {
                    let z: f64 = StandardNormal.sample(rng);
                    self.w_star[i] += self.cfg.drift_std * z;
                }
            }
        }
        let base: Vec<f64> = (0..self.cfg.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.cfg.input_mean + self.cfg.input_std * z
            })
            .collect();
        let noise: f64 = StandardNormal.sample(rng);
        let mut y_star = self.cfg.b_star + self.cfg.noise_std * noise;
        for i in 0..self.cfg.dim {
            y_star += self.w_star[i] * base[i];
        }
        for &(i, j, c) in &self.cfg.interactions {
            y_star += c * base[i] * base[j];
        }
        let x = base.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        SupervisedSample { x, y_star }
    }
}
