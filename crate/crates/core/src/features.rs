//! Generate-and-test feature search under a fixed budget.
//!
//! A [`FeaturePool`] holds raw inputs plus constructed features (products,
//! linear threshold units, exponential traces). Every step each feature's
//! utility tracks `|w_i| * sigma_i`; periodically the least useful mature
//! constructed features are culled and their slots refilled with fresh
//! candidates. Slots are stable, so learner weights stay aligned.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::learner::{LearnerConfig, LinearLearner, StepOutcome};
use crate::normalizer::NormalizerState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Raw normalized input component.
    Raw(usize),
    Product,
    /// 1 when `sum_k sign_k * f_k > threshold`, else 0.
    LinearThreshold { signs: Vec<f64>, threshold: f64 },
    /// `z <- decay * z + (1 - decay) * f`.
    Trace { decay: f64 },
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Raw(_) => "raw",
            FeatureKind::Product => "product",
            FeatureKind::LinearThreshold { .. } => "ltu",
            FeatureKind::Trace { .. } => "trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    /// Creation order; parents always have smaller ids.
    pub id: u64,
    pub kind: FeatureKind,
    /// Slots of parent features.
    pub parents: Vec<usize>,
    pub age: u64,
    pub utility: f64,
    /// Running value for stateful (trace) features.
    state: f64,
}

impl FeatureDef {
    pub fn is_raw(&self) -> bool {
        matches!(self.kind, FeatureKind::Raw(_))
    }

    fn same_construction(&self, other: &FeatureDef) -> bool {
        if self.kind.name() != other.kind.name() {
            return false;
        }
        match (&self.kind, &other.kind) {
            (FeatureKind::Raw(a), FeatureKind::Raw(b)) => a == b,
            (FeatureKind::Product, FeatureKind::Product) => {
                let mut a = self.parents.clone();
                let mut b = other.parents.clone();
                a.sort_unstable();
                b.sort_unstable();
                a == b
            }
            (FeatureKind::Trace { decay: a }, FeatureKind::Trace { decay: b }) => {
                a == b && self.parents == other.parents
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Maximum number of features, raw inputs included.
    pub n_max: usize,
    pub replace_fraction: f64,
    pub maturity_age: u64,
    /// Tracking rate of the per-step utility average.
    pub utility_rate: f64,
    /// Probability that a parent is drawn from the raw inputs rather than
    /// from all existing features.
    pub raw_parent_bias: f64,
    /// Maximum fan-in of a linear threshold unit.
    pub ltu_fan_in: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            n_max: 30,
            replace_fraction: 0.2,
            maturity_age: 2000,
            utility_rate: 0.001,
            raw_parent_bias: 0.8,
            ltu_fan_in: 3,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self, base_dim: usize) -> Result<()> {
        if self.n_max < base_dim {
            return Err(Error::Config(format!(
                "pool budget n_max ({}) must hold all {base_dim} raw inputs",
                self.n_max
            )));
        }
        if !(self.replace_fraction > 0.0 && self.replace_fraction < 1.0) {
            return Err(Error::Config(format!(
                "replace_fraction must lie in (0, 1), got {}",
                self.replace_fraction
            )));
        }
        if !(self.utility_rate > 0.0 && self.utility_rate <= 1.0) {
            return Err(Error::Config("utility_rate must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.raw_parent_bias) {
            return Err(Error::Config("raw_parent_bias must lie in [0, 1]".into()));
        }
        if self.ltu_fan_in < 2 {
            return Err(Error::Config("ltu_fan_in must be >= 2".into()));
        }
        Ok(())
    }
}

/// Per-feature view of the learner used for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureStats {
    pub weight_abs: f64,
    pub alpha: f64,
    pub sigma: f64,
}

const TRACE_DECAYS: [f64; 4] = [0.5, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePool {
    base_dim: usize,
    features: Vec<FeatureDef>,
    cfg: PoolConfig,
    next_id: u64,
}

impl FeaturePool {
    /// Pool holding only the raw inputs.
    pub fn new(base_dim: usize, cfg: PoolConfig) -> Result<Self> {
        cfg.validate(base_dim)?;
        let features = (0..base_dim)
            .map(|i| FeatureDef {
                id: i as u64,
                kind: FeatureKind::Raw(i),
                parents: Vec::new(),
                age: 0,
                utility: 0.0,
                state: 0.0,
            })
            .collect();
        Ok(Self {
            base_dim,
            features,
            cfg,
            next_id: base_dim as u64,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.cfg.n_max
    }

    pub fn config(&self) -> &PoolConfig {
        &self.cfg
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    /// Appends a product feature over two existing slots.
    pub fn push_product(&mut self, a: usize, b: usize) -> Result<usize> {
        self.push_constructed(FeatureKind::Product, vec![a, b])
    }

    pub fn push_constructed(&mut self, kind: FeatureKind, parents: Vec<usize>) -> Result<usize> {
        if self.features.len() >= self.cfg.n_max {
            return Err(Error::Input("feature budget exhausted".into()));
        }
        if parents.iter().any(|&p| p >= self.features.len()) {
            return Err(Error::Input("parent slot out of range".into()));
        }
        let def = self.make_def(kind, parents);
        self.features.push(def);
        Ok(self.features.len() - 1)
    }

    fn make_def(&mut self, kind: FeatureKind, parents: Vec<usize>) -> FeatureDef {
        let id = self.next_id;
        self.next_id += 1;
        FeatureDef {
            id,
            kind,
            parents,
            age: 0,
            utility: 0.0,
            state: 0.0,
        }
    }

    /// Evaluates every feature on the normalized raw input, in creation
    /// order so that parents are computed before children.
    pub fn compute(&mut self, x_tilde: &[f64]) -> Result<Vec<f64>> {
        check_dim("feature pool input", self.base_dim, x_tilde.len())?;
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by_key(|&i| self.features[i].id);
        let mut values = vec![0.0; self.features.len()];
        for i in order {
            let f = &self.features[i];
            let v = match &f.kind {
                FeatureKind::Raw(k) => x_tilde[*k],
                FeatureKind::Product => values[f.parents[0]] * values[f.parents[1]],
                FeatureKind::LinearThreshold { signs, threshold } => {
                    let s: f64 = f.parents.iter().zip(signs).map(|(&p, s)| s * values[p]).sum();
                    if s > *threshold {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeatureKind::Trace { decay } => decay * f.state + (1.0 - decay) * values[f.parents[0]],
            };
            values[i] = v;
            if matches!(f.kind, FeatureKind::Trace { .. }) {
                self.features[i].state = v;
            }
        }
        Ok(values)
    }

    /// Appends up to `k` generated candidates without exceeding the budget.
    pub fn expand_features<R: Rng + ?Sized>(&mut self, rng: &mut R, k: usize) -> Vec<usize> {
        let mut added = Vec::new();
        for _ in 0..k {
            if self.features.len() >= self.cfg.n_max {
                break;
            }
            let exclude = vec![false; self.features.len()];
            let def = self.generate(rng, &exclude);
            self.features.push(def);
            added.push(self.features.len() - 1);
        }
        added
    }

    fn draw_parent<R: Rng + ?Sized>(&self, rng: &mut R, exclude: &[bool]) -> usize {
        loop {
            let p = if rng.random::<f64>() < self.cfg.raw_parent_bias {
                rng.random_range(0..self.base_dim)
            } else {
                rng.random_range(0..self.features.len())
            };
            if !exclude.get(p).copied().unwrap_or(false) {
                return p;
            }
        }
    }

    /// Draws a new feature definition; slots flagged in `exclude` are not
    /// used as parents.
    fn generate<R: Rng + ?Sized>(&mut self, rng: &mut R, exclude: &[bool]) -> FeatureDef {
        const ATTEMPTS: usize = 20;
        let eligible = (0..self.features.len())
            .filter(|&i| !exclude.get(i).copied().unwrap_or(false))
            .count();
        let mut candidate = None;
        for _ in 0..ATTEMPTS {
            let (kind, parents) = match rng.random_range(0..3) {
                0 => {
                    let a = self.draw_parent(rng, exclude);
                    let mut b = self.draw_parent(rng, exclude);
                    if eligible > 1 {
                        while b == a {
                            b = self.draw_parent(rng, exclude);
                        }
                    }
                    (FeatureKind::Product, vec![a, b])
                }
                1 => {
                    let fan_in = rng.random_range(2..=self.cfg.ltu_fan_in);
                    let mut parents: Vec<usize> = Vec::with_capacity(fan_in);
                    for _ in 0..fan_in {
                        parents.push(self.draw_parent(rng, exclude));
                    }
                    parents.sort_unstable();
                    parents.dedup();
                    let signs: Vec<f64> = parents
                        .iter()
                        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                        .collect();
                    let threshold = rng.random_range(-1.0..1.0) * (parents.len() as f64).sqrt();
                    (FeatureKind::LinearThreshold { signs, threshold }, parents)
                }
                _ => {
                    let decay = TRACE_DECAYS[rng.random_range(0..TRACE_DECAYS.len())];
                    (FeatureKind::Trace { decay }, vec![self.draw_parent(rng, exclude)])
                }
            };
            let def = FeatureDef {
                id: 0,
                kind,
                parents,
                age: 0,
                utility: 0.0,
                state: 0.0,
            };
            let duplicate = self
                .features
                .iter()
                .enumerate()
                .any(|(i, f)| !exclude.get(i).copied().unwrap_or(false) && f.same_construction(&def));
            candidate = Some(def);
            if !duplicate {
                break;
            }
        }
        let def = candidate.expect("at least one attempt");
        self.make_def(def.kind, def.parents)
    }

    /// Per-step utility tracking and aging.
    pub fn track_utility(&mut self, stats: &[FeatureStats]) -> Result<()> {
        check_dim("feature stats", self.features.len(), stats.len())?;
        let rate = self.cfg.utility_rate;
        for (f, s) in self.features.iter_mut().zip(stats) {
            f.age += 1;
            f.utility += rate * (s.weight_abs * s.sigma - f.utility);
        }
        Ok(())
    }

    /// Culls the least useful mature constructed features (and anything
    /// built on them) and refills their slots. Returns the culled slots.
    pub fn evaluate_and_replace<R: Rng + ?Sized>(
        &mut self,
        stats: &[FeatureStats],
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        check_dim("feature stats", self.features.len(), stats.len())?;
        let rate = self.cfg.utility_rate;
        for (f, s) in self.features.iter_mut().zip(stats) {
            if f.age >= self.cfg.maturity_age {
                f.utility += rate * (s.weight_abs * s.sigma - f.utility);
            }
        }
        // A feature with a young descendant is kept: culling it would take
        // the protected descendant with it.
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by_key(|&i| self.features[i].id);
        let mut shielded = vec![false; self.features.len()];
        for &i in order.iter().rev() {
            if shielded[i] || self.features[i].age < self.cfg.maturity_age {
                for &p in &self.features[i].parents {
                    shielded[p] = true;
                }
            }
        }
        let mut mature: Vec<usize> = (0..self.features.len())
            .filter(|&i| {
                let f = &self.features[i];
                !f.is_raw() && f.age >= self.cfg.maturity_age && !shielded[i]
            })
            .collect();
        if mature.is_empty() {
            return Ok(Vec::new());
        }
        let n_cull = ((self.cfg.replace_fraction * mature.len() as f64) as usize).max(1);
        mature.sort_by(|&a, &b| {
            let (fa, fb) = (&self.features[a], &self.features[b]);
            fa.utility
                .partial_cmp(&fb.utility)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(fa.id.cmp(&fb.id))
        });
        let mut culled = vec![false; self.features.len()];
        for &i in mature.iter().take(n_cull) {
            culled[i] = true;
        }
        // Dependents of culled features go too (ids increase along edges).
        for i in order {
            if self.features[i].parents.iter().any(|&p| culled[p]) {
                culled[i] = true;
            }
        }
        let slots: Vec<usize> = (0..self.features.len()).filter(|&i| culled[i]).collect();
        for &i in &slots {
            let def = self.generate(rng, &culled);
            self.features[i] = def;
        }
        // Generation never picks a culled slot as a parent, so parents stay older.
        Ok(slots)
    }

    /// Slots ordered by decreasing utility.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| {
            self.features[b]
                .utility
                .partial_cmp(&self.features[a].utility)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(self.features[a].id.cmp(&self.features[b].id))
        });
        idx
    }

    /// Slot of a product feature over the two given raw inputs, if present.
    pub fn find_raw_product(&self, i: usize, j: usize) -> Option<usize> {
        let probe = FeatureDef {
            id: 0,
            kind: FeatureKind::Product,
            parents: vec![i, j],
            age: 0,
            utility: 0.0,
            state: 0.0,
        };
        self.features.iter().position(|f| f.same_construction(&probe))
    }
}

/// A linear learner over a generate-and-test feature pool.
#[derive(Debug, Clone)]
pub struct FeatureSearchLearner {
    pool: FeaturePool,
    learner: LinearLearner,
    feature_stats: NormalizerState,
    replace_every: u64,
    t: u64,
}

impl FeatureSearchLearner {
    pub fn new<R: Rng + ?Sized>(
        base_dim: usize,
        pool_cfg: PoolConfig,
        learner_cfg: LearnerConfig,
        stats_rate: f64,
        replace_every: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if replace_every == 0 {
            return Err(Error::Config("replace_every must be positive".into()));
        }
        let mut pool = FeaturePool::new(base_dim, pool_cfg)?;
        let n_max = pool.n_max();
        pool.expand_features(rng, n_max);
        Ok(Self {
            learner: LinearLearner::new(n_max, learner_cfg)?,
            feature_stats: NormalizerState::new(n_max, stats_rate, 1e-8)?,
            pool,
            replace_every,
            t: 0,
        })
    }

    pub fn pool(&self) -> &FeaturePool {
        &self.pool
    }

    pub fn learner(&self) -> &LinearLearner {
        &self.learner
    }

    fn stats(&self) -> Vec<FeatureStats> {
        (0..self.pool.len())
            .map(|i| FeatureStats {
                weight_abs: self.learner.weights()[i].abs(),
                alpha: self.learner.step_size(i),
                sigma: self.feature_stats.variance()[i].sqrt(),
            })
            .collect()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, x_tilde: &[f64], y_star: f64, rng: &mut R) -> Result<StepOutcome> {
        let f = self.pool.compute(x_tilde)?;
        self.feature_stats.normalize_step(&f)?;
        let out = self.learner.learn(&f, y_star)?;
        self.t += 1;
        let stats = self.stats();
        if self.t % self.replace_every == 0 {
            for i in self.pool.evaluate_and_replace(&stats, rng)? {
                self.learner.reset_slot(i);
                self.feature_stats.reset_component(i);
            }
        } else {
            self.pool.track_utility(&stats)?;
        }
        Ok(out)
    }
}
