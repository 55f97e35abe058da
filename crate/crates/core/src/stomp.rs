//! Tabular SubTask -> Option -> Model -> Planning.
//!
//! A subtask asks to attain a state feature: it keeps the main task's
//! centered rewards and pays `bonus_weight * z_i(s)` on stopping at `s`.
//! Options are learned off-policy with STOP as a pseudo-action, their
//! models by intra-option TD, and planning backs up over primitive actions
//! and option models together.
//!
//! Options terminate outside their initiation set; inside it termination is
//! the greedy choice between STOP and continuing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::planning::{relative_value_iteration, RviConfig, RviSolution, TabularModel};
use crate::testbeds::ContinuingEnv;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub feature_index: usize,
    pub bonus_weight: f64,
}

/// Subtask for attaining state feature `feature_index`; tabular runs use
/// the indicator of that state as the feature.
pub fn make_subtask(feature_index: usize, bonus_weight: f64) -> Result<Subtask> {
    if !(bonus_weight >= 0.0 && bonus_weight.is_finite()) {
        return Err(Error::Config(format!("bonus_weight must be >= 0, got {bonus_weight}")));
    }
    Ok(Subtask {
        feature_index,
        bonus_weight,
    })
}

impl Subtask {
    /// Stopping value for a feature vector.
    pub fn stopping_value(&self, feat: &[f64]) -> f64 {
        self.bonus_weight * feat[self.feature_index]
    }

    /// Stopping value at state `s` under indicator features.
    pub fn stopping_value_at(&self, s: usize) -> f64 {
        if s == self.feature_index {
            self.bonus_weight
        } else {
            0.0
        }
    }

    /// The subtask's reward on a main-task transition.
    pub fn reward(&self, r: f64, rho_bar: f64) -> f64 {
        r - rho_bar
    }
}

/// One real transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionDef {
    pub subtask: Subtask,
    n_actions: usize,
    /// Continuation values per (s, a); STOP's value is the stopping value.
    q: Vec<f64>,
    pub policy: Vec<usize>,
    pub beta: Vec<f64>,
    pub initiation: Vec<bool>,
    pub alpha: f64,
}

impl OptionDef {
    pub fn new(subtask: Subtask, n_states: usize, n_actions: usize, initiation: Vec<bool>, alpha: f64) -> Result<Self> {
        if initiation.len() != n_states {
            return Err(Error::Dimension {
                what: "initiation set",
                expected: n_states,
                got: initiation.len(),
            });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config("option step-size must lie in (0, 1]".into()));
        }
        let mut opt = Self {
            subtask,
            n_actions,
            q: vec![0.0; n_states * n_actions],
            policy: vec![0; n_states],
            beta: vec![1.0; n_states],
            initiation,
            alpha,
        };
        for s in 0..n_states {
            opt.rederive(s);
        }
        Ok(opt)
    }

    /// A fixed option with the given policy and termination.
    pub fn fixed(policy: Vec<usize>, beta: Vec<f64>, n_actions: usize) -> Self {
        let n = policy.len();
        Self {
            subtask: Subtask {
                feature_index: 0,
                bonus_weight: 0.0,
            },
            n_actions,
            q: vec![0.0; n * n_actions],
            policy,
            beta,
            initiation: vec![true; n],
            alpha: 1.0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.policy.len()
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    /// Value of STOP at `s`.
    pub fn stop_value(&self, s: usize) -> f64 {
        self.subtask.stopping_value_at(s)
    }

    fn best_continuation(&self, s: usize) -> (f64, usize) {
        let row = &self.q[s * self.n_actions..(s + 1) * self.n_actions];
        let mut best = (row[0], 0);
        for (a, &x) in row.iter().enumerate().skip(1) {
            if x > best.0 {
                best = (x, a);
            }
        }
        best
    }

    /// Value of arriving at `s` while executing the option.
    pub fn arrival_value(&self, s: usize) -> f64 {
        let stop = self.stop_value(s);
        if !self.initiation[s] {
            return stop;
        }
        stop.max(self.best_continuation(s).0)
    }

    fn rederive(&mut self, s: usize) {
        let (best, a) = self.best_continuation(s);
        self.policy[s] = a;
        self.beta[s] = if !self.initiation[s] || self.stop_value(s) >= best { 1.0 } else { 0.0 };
    }

    /// Off-policy Q-learning update where continuing competes with STOP.
    pub fn option_learn_step(&mut self, tr: &Transition, rho_bar: f64, behavior_prob: f64) -> Result<()> {
        if !(behavior_prob > 0.0 && behavior_prob <= 1.0) {
            return Err(Error::Input(format!("behavior probability must lie in (0, 1], got {behavior_prob}")));
        }
        check_finite("reward", tr.r)?;
        if !self.initiation[tr.s] {
            return Ok(());
        }
        let target = self.subtask.reward(tr.r, rho_bar) + self.arrival_value(tr.s_next);
        let i = tr.s * self.n_actions + tr.a;
        self.q[i] += self.alpha * (target - self.q[i]);
        self.rederive(tr.s);
        Ok(())
    }

    /// Action probabilities of the option policy (deterministic).
    pub fn policy_matrix(&self) -> Vec<Vec<f64>> {
        self.policy
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; self.n_actions];
                row[a] = 1.0;
                row
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionModel {
    pub r_model: Vec<f64>,
    pub n_model: Vec<f64>,
    /// Dense termination-state distribution per start state.
    pub p_model: Vec<Vec<f64>>,
    pub initiation: Vec<bool>,
    pub alpha: f64,
}

impl OptionModel {
    /// Untrained model: terminate in place after one step with zero reward.
    pub fn new(initiation: Vec<bool>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config("model step-size must lie in (0, 1]".into()));
        }
        let n = initiation.len();
        let p_model = (0..n)
            .map(|s| {
                let mut row = vec![0.0; n];
                row[s] = 1.0;
                row
            })
            .collect();
        Ok(Self {
            r_model: vec![0.0; n],
            n_model: vec![1.0; n],
            p_model,
            initiation,
            alpha,
        })
    }

    /// Intra-option TD update from a transition whose action the option
    /// would have taken; other transitions carry no information here.
    pub fn option_model_learn_step(&mut self, opt: &OptionDef, tr: &Transition, rho_bar: f64) -> Result<bool> {
        check_finite("reward", tr.r)?;
        if opt.policy[tr.s] != tr.a {
            return Ok(false);
        }
        let b = opt.beta[tr.s_next];
        let a = self.alpha;
        let (s, t) = (tr.s, tr.s_next);
        let r_target = (tr.r - rho_bar) + (1.0 - b) * self.r_model[t];
        let n_target = 1.0 + (1.0 - b) * self.n_model[t];
        self.r_model[s] += a * (r_target - self.r_model[s]);
        self.n_model[s] += a * (n_target - self.n_model[s]);
        if s == t {
            // In-place update must read the old row.
            let old = self.p_model[t].clone();
            for (k, p) in self.p_model[s].iter_mut().enumerate() {
                let target = (1.0 - b) * old[k] + if k == t { b } else { 0.0 };
                *p += a * (target - *p);
            }
        } else {
            let (row_s, row_t) = two_rows(&mut self.p_model, s, t);
            for (k, (p, &q)) in row_s.iter_mut().zip(row_t.iter()).enumerate() {
                let target = (1.0 - b) * q + if k == t { b } else { 0.0 };
                *p += a * (target - *p);
            }
        }
        Ok(true)
    }

    /// Shannon entropy of the termination distribution at `s` (nats).
    pub fn entropy(&self, s: usize) -> f64 {
        -self.p_model[s].iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

fn two_rows(rows: &mut [Vec<f64>], i: usize, j: usize) -> (&mut Vec<f64>, &Vec<f64>) {
    if i < j {
        let (a, b) = rows.split_at_mut(j);
        (&mut a[i], &b[0])
    } else {
        let (a, b) = rows.split_at_mut(i);
        (&mut b[0], &a[j])
    }
}

/// Relative value iteration over primitive actions and option models.
/// Option models carry rewards centered by `rho_bar`; the backup corrects
/// them to the current gain estimate with `-(rho - rho_bar) * n_model`.
/// Choices `>= n_actions` in the returned policy index options.
pub fn plan_with_models(
    primitive: &TabularModel,
    options: &[&OptionModel],
    cfg: &RviConfig,
    rho_bar: f64,
) -> Result<RviSolution> {
    let n_actions = primitive.n_actions();
    for m in options {
        if m.r_model.len() != primitive.n_states() {
            return Err(Error::Dimension {
                what: "option model",
                expected: primitive.n_states(),
                got: m.r_model.len(),
            });
        }
    }
    relative_value_iteration(primitive.n_states(), cfg, |s, v, rho| {
        let mut best = primitive.best_backup(s, v, rho);
        for (k, m) in options.iter().enumerate() {
            if !m.initiation[s] {
                continue;
            }
            let ev: f64 = m.p_model[s].iter().zip(v).map(|(p, x)| p * x).sum();
            let val = m.r_model[s] - (rho - rho_bar) * m.n_model[s] + ev;
            if val > best.0 {
                best = (val, n_actions + k);
            }
        }
        best
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StompConfig {
    /// Step-size of the main-task differential Q-learner.
    pub alpha_main: f64,
    /// Gain step of the main task relative to `alpha_main`.
    pub eta_main: f64,
    pub alpha_option: f64,
    pub alpha_model: f64,
    /// Exploration while executing an option.
    pub epsilon: f64,
}

impl Default for StompConfig {
    fn default() -> Self {
        Self {
            alpha_main: 0.1,
            eta_main: 0.1,
            alpha_option: 0.1,
            alpha_model: 0.5,
            epsilon: 0.1,
        }
    }
}

/// Data collection and learning for a set of subtasks: every element
/// updates on every step.
#[derive(Debug, Clone)]
pub struct StompLearner {
    pub primitive: TabularModel,
    pub main_q: Vec<f64>,
    pub rho_bar: f64,
    pub options: Vec<OptionDef>,
    pub models: Vec<OptionModel>,
    executing: Option<usize>,
    /// When false, the gain and option policies are held fixed and only
    /// the models keep learning.
    pub learn_policies: bool,
    cfg: StompConfig,
}

impl StompLearner {
    pub fn new(n_states: usize, n_actions: usize, subtasks: &[(Subtask, Vec<bool>)], cfg: StompConfig) -> Result<Self> {
        let mut options = Vec::new();
        let mut models = Vec::new();
        for (sub, init) in subtasks {
            options.push(OptionDef::new(*sub, n_states, n_actions, init.clone(), cfg.alpha_option)?);
            models.push(OptionModel::new(init.clone(), cfg.alpha_model)?);
        }
        if !(0.0..=1.0).contains(&cfg.epsilon) || !(cfg.epsilon > 0.0) {
            return Err(Error::Config("option exploration must lie in (0, 1]".into()));
        }
        Ok(Self {
            primitive: TabularModel::new(n_states, n_actions),
            main_q: vec![0.0; n_states * n_actions],
            rho_bar: 0.0,
            options,
            models,
            executing: None,
            learn_policies: true,
            cfg,
        })
    }

    pub fn executing(&self) -> Option<usize> {
        self.executing
    }

    /// ε-soft behavior: when idle, choose uniformly among primitive actions
    /// and available options; an executing option follows its policy with
    /// probability 1 - ε. Returns the action and its behavior probability.
    fn behave<R: Rng + ?Sized>(&mut self, s: usize, n_actions: usize, rng: &mut R) -> (usize, f64) {
        if let Some(k) = self.executing {
            let greedy = self.options[k].policy[s];
            let eps = self.cfg.epsilon;
            let a = if rng.random::<f64>() < eps {
                rng.random_range(0..n_actions)
            } else {
                greedy
            };
            let p = eps / n_actions as f64 + if a == greedy { 1.0 - eps } else { 0.0 };
            return (a, p);
        }
        let available: Vec<usize> = (0..self.options.len()).filter(|&k| self.options[k].initiation[s]).collect();
        let choice = rng.random_range(0..n_actions + available.len());
        if choice < n_actions {
            (choice, 1.0 / n_actions as f64)
        } else {
            self.executing = Some(available[choice - n_actions]);
            self.behave(s, n_actions, rng)
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, env: &mut ContinuingEnv, rng: &mut R) -> Result<Transition> {
        let s = env.state();
        let n_actions = env.num_actions();
        let (a, b_prob) = self.behave(s, n_actions, rng);
        let st = env.env_step(a, rng)?;
        let tr = Transition {
            s,
            a,
            r: st.reward,
            s_next: st.observation,
        };
        self.primitive.model_update(s, a, tr.r, tr.s_next)?;
        if self.learn_policies {
            let row = |q: &[f64], x: usize| q[x * n_actions..(x + 1) * n_actions].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let i = s * n_actions + a;
            let delta = check_finite("TD error", tr.r - self.rho_bar + row(&self.main_q, tr.s_next) - self.main_q[i])?;
            self.main_q[i] += self.cfg.alpha_main * delta;
            self.rho_bar += self.cfg.eta_main * self.cfg.alpha_main * delta;
        }
        for (opt, model) in self.options.iter_mut().zip(self.models.iter_mut()) {
            if self.learn_policies {
                opt.option_learn_step(&tr, self.rho_bar, b_prob)?;
            }
            if opt.initiation[s] {
                model.option_model_learn_step(opt, &tr, self.rho_bar)?;
            }
        }
        if let Some(k) = self.executing {
            if self.options[k].beta[tr.s_next] >= 1.0 {
                self.executing = None;
            }
        }
        Ok(tr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbeds::{Dynamics, Outcome};
    use proptest::prelude::*;

    /// Corridor 0..n with RIGHT (1) moving right until the wall at n-1.
    fn corridor(n: usize) -> Dynamics {
        let outcomes = (0..n)
            .map(|s| {
                vec![
                    vec![Outcome { next: s.saturating_sub(1), prob: 1.0, reward: 0.0 }],
                    vec![Outcome { next: (s + 1).min(n - 1), prob: 1.0, reward: -1.0 }],
                ]
            })
            .collect();
        Dynamics {
            n_states: n,
            n_actions: 2,
            outcomes,
        }
    }

    fn run_fixed(d: &Dynamics, opt: &OptionDef, model: &mut OptionModel, sweeps: usize, rho_bar: f64) {
        for _ in 0..sweeps {
            for s in 0..d.n_states {
                let a = opt.policy[s];
                for o in &d.outcomes[s][a] {
                    let tr = Transition { s, a, r: o.reward, s_next: o.next };
                    model.option_model_learn_step(opt, &tr, rho_bar).unwrap();
                }
            }
        }
    }

    #[test]
    fn stopping_value_and_reward() {
        let sub = make_subtask(3, 2.5).unwrap();
        assert_eq!(sub.stopping_value_at(3), 2.5);
        assert_eq!(sub.stopping_value_at(2), 0.0);
        assert_eq!(sub.stopping_value(&[0.0, 0.0, 0.0, 0.4]), 1.0);
        assert_eq!(sub.reward(1.0, 0.25), 0.75);
        assert!(make_subtask(0, -1.0).is_err());
    }

    #[test]
    fn greedy_stop_where_stopping_dominates() {
        let sub = make_subtask(1, 5.0).unwrap();
        let mut opt = OptionDef::new(sub, 3, 2, vec![true; 3], 0.5).unwrap();
        // Continuation at state 1 is worth less than stopping there.
        opt.option_learn_step(&Transition { s: 1, a: 0, r: 1.0, s_next: 0 }, 0.0, 0.5).unwrap();
        assert_eq!(opt.beta[1], 1.0);
        // At state 0 continuing toward 1 beats stopping (worth 0).
        opt.option_learn_step(&Transition { s: 0, a: 1, r: 0.0, s_next: 1 }, 0.0, 0.5).unwrap();
        assert_eq!(opt.beta[0], 0.0);
        assert_eq!(opt.policy[0], 1);
        assert!((opt.q(0, 1) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_behavior_gives_on_policy_backup() {
        let sub = make_subtask(2, 1.0).unwrap();
        let mut opt = OptionDef::new(sub, 3, 2, vec![true, true, false], 0.3).unwrap();
        opt.option_learn_step(&Transition { s: 1, a: 1, r: 0.0, s_next: 2 }, 0.1, 0.5).unwrap();
        let a = opt.policy[0];
        let before = opt.q(0, a);
        // On-policy: continue with the option's own next choice or stop.
        let v1 = if opt.beta[1] >= 1.0 { opt.stop_value(1) } else { opt.q(1, opt.policy[1]) };
        let expected = before + 0.3 * ((0.5 - 0.1) + v1 - before);
        opt.option_learn_step(&Transition { s: 0, a, r: 0.5, s_next: 1 }, 0.1, 1.0).unwrap();
        assert!((opt.q(0, a) - expected).abs() < 1e-12);
        assert!(opt.option_learn_step(&Transition { s: 0, a, r: 0.5, s_next: 1 }, 0.1, 0.0).is_err());
    }

    #[test]
    fn immediate_termination_is_one_step_model() {
        let d = corridor(4);
        let opt = OptionDef::fixed(vec![1; 4], vec![1.0; 4], 2);
        let mut m = OptionModel::new(vec![true; 4], 1.0).unwrap();
        run_fixed(&d, &opt, &mut m, 1, 0.25);
        for s in 0..4 {
            assert_eq!(m.r_model[s], -1.25);
            assert_eq!(m.n_model[s], 1.0);
            let t = (s + 1).min(3);
            assert_eq!(m.p_model[s][t], 1.0);
        }
    }

    #[test]
    fn corridor_duration_is_distance_to_wall() {
        let n = 6;
        let d = corridor(n);
        let mut beta = vec![0.0; n];
        beta[n - 1] = 1.0;
        let opt = OptionDef::fixed(vec![1; n], beta, 2);
        let mut m = OptionModel::new(vec![true; n], 0.5).unwrap();
        run_fixed(&d, &opt, &mut m, 200, 0.0);
        for s in 0..n - 1 {
            let dist = (n - 1 - s) as f64;
            assert!((m.n_model[s] - dist).abs() < 1e-9, "s={s} n={}", m.n_model[s]);
            assert!((m.r_model[s] + dist).abs() < 1e-9);
            assert!((m.p_model[s][n - 1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_options_match_flat_planning() {
        let d = corridor(5);
        let m = TabularModel::from_dynamics(&d);
        let cfg = RviConfig::default();
        let flat = crate::planning::rvi_plan(&m, &cfg).unwrap();
        let with = plan_with_models(&m, &[], &cfg, 0.3).unwrap();
        assert_eq!(flat, with);
    }

    proptest! {
        #[test]
        fn termination_rows_stay_distributions(
            steps in proptest::collection::vec((0usize..5, 0usize..2, -1.0f64..1.0, 0usize..5), 1..200),
            alpha in 0.01f64..1.0,
            beta_bits in 0u32..32,
        ) {
            let beta: Vec<f64> = (0..5).map(|s| if beta_bits >> s & 1 == 1 { 1.0 } else { 0.0 }).collect();
            let opt = OptionDef::fixed(vec![0, 1, 0, 1, 0], beta, 2);
            let mut m = OptionModel::new(vec![true; 5], alpha).unwrap();
            for (s, a, r, t) in steps {
                m.option_model_learn_step(&opt, &Transition { s, a, r, s_next: t }, 0.1).unwrap();
                for row in &m.p_model {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    prop_assert!(row.iter().all(|&p| p >= -1e-12));
                }
            }
        }
    }
}
