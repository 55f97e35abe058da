//! Online tracking normalization of input signals.
//!
//! Each component keeps an exponentially weighted estimate of its mean and
//! variance; the emitted signal is `(x - mu) / max(sqrt(var), sigma_floor)`,
//! computed with the estimates *after* they absorb the current sample.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    mu: Vec<f64>,
    var: Vec<f64>,
    eta_norm: f64,
    sigma_floor: f64,
    initialized: Vec<bool>,
}

impl NormalizerState {
    pub fn new(dim: usize, eta_norm: f64, sigma_floor: f64) -> Result<Self> {
        if !(eta_norm > 0.0 && eta_norm <= 1.0) {
            return Err(Error::Config(format!(
                "normalizer tracking rate must lie in (0, 1], got {eta_norm}"
            )));
        }
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::Config(format!(
                "normalizer sigma floor must be positive, got {sigma_floor}"
            )));
        }
        Ok(Self {
            mu: vec![0.0; dim],
            var: vec![0.0; dim],
            eta_norm,
            sigma_floor,
            initialized: vec![false; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn variance(&self) -> &[f64] {
        &self.var
    }

    pub fn eta_norm(&self) -> f64 {
        self.eta_norm
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// Standard deviation actually used for division.
    pub fn sigma(&self, i: usize) -> f64 {
        self.var[i].sqrt().max(self.sigma_floor)
    }

    /// Forgets component `i`; its next sample re-initializes it.
    pub fn reset_component(&mut self, i: usize) {
        self.mu[i] = 0.0;
        self.var[i] = 0.0;
        self.initialized[i] = false;
    }

    /// Updates the tracked statistics with `x` and returns the normalized signal.
    pub fn normalize_step(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out)?;
        Ok(out)
    }

    pub fn normalize_into(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("normalizer input", self.dim(), x.len())?;
        check_dim("normalizer output", self.dim(), out.len())?;
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index, value });
        }
        for i in 0..x.len() {
            if self.initialized[i] {
                self.mu[i] += self.eta_norm * (x[i] - self.mu[i]);
                let dev = x[i] - self.mu[i];
                self.var[i] += self.eta_norm * (dev * dev - self.var[i]);
            } else {
                self.mu[i] = x[i];
                self.var[i] = 0.0;
                self.initialized[i] = true;
            }
            out[i] = (x[i] - self.mu[i]) / self.sigma(i);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn first_sample_maps_to_zero() {
        let mut n = NormalizerState::new(1, 0.01, DEFAULT_SIGMA_FLOOR).unwrap();
        assert_eq!(n.normalize_step(&[4.2]).unwrap(), vec![0.0]);
    }

    #[test]
    fn constant_stream_pins_sigma_at_floor() {
        let mut n = NormalizerState::new(1, 0.1, DEFAULT_SIGMA_FLOOR).unwrap();
        for _ in 0..1000 {
            assert_eq!(n.normalize_step(&[5.0]).unwrap(), vec![0.0]);
        }
        assert_eq!(n.sigma(0), DEFAULT_SIGMA_FLOOR);
        assert_eq!(n.variance()[0], 0.0);
    }

    #[test]
    fn errors_name_the_problem() {
        let mut n = NormalizerState::new(2, 0.1, 1e-8).unwrap();
        assert!(matches!(
            n.normalize_step(&[1.0]),
            Err(Error::Dimension { expected: 2, got: 1, .. })
        ));
        assert!(matches!(
            n.normalize_step(&[1.0, f64::NAN]),
            Err(Error::NonFiniteInput { index: 1, .. })
        ));
        assert!(NormalizerState::new(2, 0.0, 1e-8).is_err());
        assert!(NormalizerState::new(2, 0.5, 0.0).is_err());
    }

    fn tracking_hits(eta: f64) -> usize {
        let dist = Normal::new(2.0, 2.0).unwrap();
        (0..30u64)
            .filter(|&seed| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut n = NormalizerState::new(1, eta, DEFAULT_SIGMA_FLOOR).unwrap();
                for _ in 0..10_000 {
                    n.normalize_step(&[dist.sample(&mut rng)]).unwrap();
                }
                let (mu, sigma) = (n.mean()[0], n.sigma(0));
                (1.8..=2.2).contains(&mu) && (1.8..=2.2).contains(&sigma)
            })
            .count()
    }

    // Stream N(2, 2^2), 10^4 steps, 30 seeds, band [1.8, 2.2] on both
    // estimates. At eta = 0.01 the EMA mean alone has stationary std
    // 2 * sqrt(eta / (2 - eta)) = 0.142, so a 4000-stream Monte Carlo puts
    // the per-seed success rate at 0.807; 30 seeds then land in [19, 30]
    // with probability > 0.99. At eta = 0.002 the rate is above 0.99.
    #[test]
    fn tracks_mean_and_std_of_stationary_stream() {
        let coarse = tracking_hits(0.01);
        assert!(coarse >= 19, "eta 0.01: {coarse}/30 seeds within band");
        let fine = tracking_hits(0.002);
        assert!(fine >= 28, "eta 0.002: {fine}/30 seeds within band");
    }

    fn stream() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0..50.0f64, 2..200)
    }

    proptest! {
        #[test]
        fn shift_equivariant(xs in stream(), c in -1e3..1e3f64) {
            let mut a = NormalizerState::new(1, 0.05, 1e-8).unwrap();
            let mut b = a.clone();
            for &x in &xs {
                let ya = a.normalize_step(&[x]).unwrap()[0];
                let yb = b.normalize_step(&[x + c]).unwrap()[0];
                if a.variance()[0].sqrt() > 1e-3 {
                    prop_assert!((ya - yb).abs() <= 1e-6 * (1.0 + ya.abs()), "{ya} vs {yb}");
                }
            }
        }

        #[test]
        fn scale_equivariant(xs in stream(), c in 0.01..100.0f64) {
            let mut a = NormalizerState::new(1, 0.05, 1e-8).unwrap();
            let mut b = a.clone();
            for &x in &xs {
                let ya = a.normalize_step(&[x]).unwrap()[0];
                let yb = b.normalize_step(&[x * c]).unwrap()[0];
                if b.variance()[0].sqrt() > 1e-6 && a.variance()[0].sqrt() > 1e-6 {
                    prop_assert!((ya - yb).abs() <= 1e-9 * (1.0 + ya.abs()), "{ya} vs {yb}");
                }
            }
        }

        #[test]
        fn outputs_finite_and_variance_nonnegative(xs in prop::collection::vec(-1e12..1e12f64, 1..100)) {
            let mut n = NormalizerState::new(1, 0.3, 1e-8).unwrap();
            for &x in &xs {
                let y = n.normalize_step(&[x]).unwrap()[0];
                prop_assert!(y.is_finite());
                prop_assert!(n.variance()[0] >= 0.0);
            }
        }
    }
}
