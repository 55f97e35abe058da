//! Tabular average-reward planning: a maximum-likelihood one-step model,
//! relative value iteration, prioritized sweeping, and the Dyna loop.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::testbeds::{ContinuingEnv, Dynamics};

/// Maximum-likelihood expectation model with a predecessor index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    n_states: usize,
    n_actions: usize,
    counts: Vec<f64>,
    reward_sum: Vec<f64>,
    /// Per (s, a): (s', weight) sorted by s'; weights are visit counts.
    next: Vec<Vec<(usize, f64)>>,
    predecessors: Vec<BTreeSet<(usize, usize)>>,
    /// Reward assumed for unvisited pairs; `None` means the largest observed.
    r_opt: Option<f64>,
    max_reward: Option<f64>,
}

impl TabularModel {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Self {
            n_states,
            n_actions,
            counts: vec![0.0; n],
            reward_sum: vec![0.0; n],
            next: vec![Vec::new(); n],
            predecessors: vec![BTreeSet::new(); n_states],
            r_opt: None,
            max_reward: None,
        }
    }

    /// A model that knows the given dynamics exactly.
    pub fn from_dynamics(d: &Dynamics) -> Self {
        let mut m = Self::new(d.n_states, d.n_actions);
        for s in 0..d.n_states {
            for a in 0..d.n_actions {
                let i = m.idx(s, a);
                m.counts[i] = 1.0;
                m.reward_sum[i] = d.expected_reward(s, a);
                let row: Vec<(usize, f64)> = d
                    .next_distribution(s, a)
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, p)| p > 0.0)
                    .collect();
                for &(t, _) in &row {
                    m.predecessors[t].insert((s, a));
                }
                m.next[i] = row;
                for o in &d.outcomes[s][a] {
                    m.max_reward = Some(m.max_reward.map_or(o.reward, |x: f64| x.max(o.reward)));
                }
            }
        }
        m
    }

    pub fn with_optimistic_reward(mut self, r_opt: f64) -> Self {
        self.r_opt = Some(r_opt);
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn count(&self, s: usize, a: usize) -> f64 {
        self.counts[self.idx(s, a)]
    }

    pub fn visited(&self, s: usize, a: usize) -> bool {
        self.count(s, a) > 0.0
    }

    /// Reward used for unvisited pairs.
    pub fn optimistic_reward(&self) -> f64 {
        self.r_opt.or(self.max_reward).unwrap_or(0.0)
    }

    /// Estimated mean reward; optimistic default when unvisited.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        let i = self.idx(s, a);
        if self.counts[i] > 0.0 {
            self.reward_sum[i] / self.counts[i]
        } else {
            self.optimistic_reward()
        }
    }

    /// Estimated next-state distribution; a self-loop when unvisited.
    pub fn trans(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let i = self.idx(s, a);
        if self.counts[i] > 0.0 {
            self.next[i].iter().map(|&(t, c)| (t, c / self.counts[i])).collect()
        } else {
            vec![(s, 1.0)]
        }
    }

    pub fn predecessors(&self, s: usize) -> &BTreeSet<(usize, usize)> {
        &self.predecessors[s]
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::Input(format!("pair ({s}, {a}) outside the model")));
        }
        Ok(())
    }

    pub fn model_update(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<()> {
        self.check(s, a)?;
        if s_next >= self.n_states {
            return Err(Error::Input(format!("next state {s_next} outside the model")));
        }
        check_finite("reward", r)?;
        let i = self.idx(s, a);
        self.counts[i] += 1.0;
        self.reward_sum[i] += r;
        match self.next[i].binary_search_by_key(&s_next, |&(t, _)| t) {
            Ok(k) => self.next[i][k].1 += 1.0,
            Err(k) => self.next[i].insert(k, (s_next, 1.0)),
        }
        self.predecessors[s_next].insert((s, a));
        self.max_reward = Some(self.max_reward.map_or(r, |m| m.max(r)));
        Ok(())
    }

    /// `r(s,a) - rho + sum_s' p(s'|s,a) v(s')`.
    pub fn backup(&self, s: usize, a: usize, v: &[f64], rho: f64) -> f64 {
        let i = self.idx(s, a);
        if self.counts[i] > 0.0 {
            let c = self.counts[i];
            let ev: f64 = self.next[i].iter().map(|&(t, w)| w * v[t]).sum();
            (self.reward_sum[i] + ev) / c - rho
        } else {
            self.optimistic_reward() - rho + v[s]
        }
    }

    /// Best backed-up value and its action (lowest index on ties).
    pub fn best_backup(&self, s: usize, v: &[f64], rho: f64) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..self.n_actions {
            let q = self.backup(s, a, v, rho);
            if q > best.0 {
                best = (q, a);
            }
        }
        best
    }

    fn has_unvisited(&self, s: usize) -> bool {
        (0..self.n_actions).any(|a| !self.visited(s, a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RviConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    /// State whose value is pinned to zero.
    pub reference: usize,
    /// Fraction of the reference offset moved into the gain each sweep.
    pub gain_step: f64,
    /// Mixing weight of each backup; below 1 it removes periodicity.
    pub aperiodicity: f64,
}

impl Default for RviConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 100_000,
            reference: 0,
            gain_step: 1.0,
            aperiodicity: 1.0,
        }
    }
}

impl RviConfig {
    pub fn validate(&self, n_states: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.reference >= n_states {
            return Err(Error::Config("reference state outside the model".into()));
        }
        if !(self.gain_step > 0.0 && self.gain_step <= 1.0) {
            return Err(Error::Config("gain_step must lie in (0, 1]".into()));
        }
        if !(self.aperiodicity > 0.0 && self.aperiodicity <= 1.0) {
            return Err(Error::Config("aperiodicity must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RviSolution {
    pub rho: f64,
    pub v: Vec<f64>,
    /// Index of the maximizing choice per state.
    pub policy: Vec<usize>,
    pub sweeps: usize,
    /// State backups performed.
    pub backups: usize,
    /// Max-norm Bellman residual of the returned (rho, v).
    pub residual: f64,
}

/// Synchronous relative value iteration over an arbitrary per-state
/// backup `backup(s, v, rho) -> (value, choice)`.
pub fn relative_value_iteration<F>(n_states: usize, cfg: &RviConfig, mut backup: F) -> Result<RviSolution>
where
    F: FnMut(usize, &[f64], f64) -> (f64, usize),
{
    cfg.validate(n_states)?;
    let mut v = vec![0.0; n_states];
    let mut rho = 0.0;
    let mut nv = vec![0.0; n_states];
    let mut policy = vec![0; n_states];
    let mut sweeps = 0;
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..n_states {
            let (b, choice) = backup(s, &v, rho);
            residual = residual.max((b - v[s]).abs());
            nv[s] = v[s] + cfg.aperiodicity * (b - v[s]);
            policy[s] = choice;
        }
        if !residual.is_finite() {
            return Err(Error::Numeric { field: "planning residual" });
        }
        if residual <= cfg.tol {
            return Ok(RviSolution {
                rho,
                v,
                policy,
                sweeps,
                backups: sweeps * n_states,
                residual,
            });
        }
        if sweeps >= cfg.max_sweeps {
            return Err(Error::NonConvergence { sweeps, residual });
        }
        sweeps += 1;
        let off = nv[cfg.reference];
        rho += cfg.gain_step * off / cfg.aperiodicity;
        for (x, &y) in v.iter_mut().zip(&nv) {
            *x = y - off;
        }
    }
}

/// Relative value iteration on a tabular model.
pub fn rvi_plan(model: &TabularModel, cfg: &RviConfig) -> Result<RviSolution> {
    relative_value_iteration(model.n_states(), cfg, |s, v, rho| model.best_backup(s, v, rho))
}

/// Max-priority queue over states without duplicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorityQueue {
    prio: HashMap<usize, f64>,
    order: BTreeSet<(u64, Reverse<usize>)>,
}

impl PriorityQueue {
    pub fn len(&self) -> usize {
        self.prio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prio.is_empty()
    }

    pub fn priority(&self, s: usize) -> Option<f64> {
        self.prio.get(&s).copied()
    }

    /// Inserts `s`, or raises its priority if already queued.
    pub fn push_or_raise(&mut self, s: usize, p: f64) {
        debug_assert!(p >= 0.0);
        if let Some(&old) = self.prio.get(&s) {
            if old >= p {
                return;
            }
            self.order.remove(&(old.to_bits(), Reverse(s)));
        }
        self.prio.insert(s, p);
        self.order.insert((p.to_bits(), Reverse(s)));
    }

    /// Highest priority first; lower state index on ties.
    pub fn pop(&mut self) -> Option<(usize, f64)> {
        let (bits, Reverse(s)) = self.order.pop_last()?;
        self.prio.remove(&s);
        Some((s, f64::from_bits(bits)))
    }
}

/// Value estimates and search-control state for asynchronous planning.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub v: Vec<f64>,
    pub rho: f64,
    pub queue: PriorityQueue,
    pub theta_p: f64,
    /// Gain step per backup: `rho += gain_rate * (change of v(s))`.
    pub gain_rate: f64,
    pub reference: usize,
}

impl PlanState {
    /// Fresh state with every state queued at priority 1.
    pub fn new(n_states: usize, theta_p: f64, gain_rate: f64, reference: usize) -> Result<Self> {
        if !(theta_p > 0.0) || !(gain_rate > 0.0 && gain_rate <= 1.0) || reference >= n_states {
            return Err(Error::Config("invalid planner configuration".into()));
        }
        let mut queue = PriorityQueue::default();
        for s in 0..n_states {
            queue.push_or_raise(s, 1.0);
        }
        Ok(Self {
            v: vec![0.0; n_states],
            rho: 0.0,
            queue,
            theta_p,
            gain_rate,
            reference,
        })
    }

    /// Queues the model predecessors of `s` after its value changed by `delta`.
    pub fn notify_change(&mut self, model: &TabularModel, s: usize, delta: f64) {
        for &(p, a) in model.predecessors(s) {
            let w = model
                .trans(p, a)
                .iter()
                .find(|&&(t, _)| t == s)
                .map_or(0.0, |&(_, w)| w);
            let pr = w * delta.abs();
            if pr > self.theta_p {
                self.queue.push_or_raise(p, pr);
            }
        }
        // Unvisited actions loop back on s itself.
        if model.has_unvisited(s) && delta.abs() > self.theta_p {
            self.queue.push_or_raise(s, delta.abs());
        }
    }

    /// Shifts values so that the reference state is zero (backups are
    /// invariant to constant shifts).
    pub fn normalize(&mut self) {
        let off = self.v[self.reference];
        self.v.iter_mut().for_each(|x| *x -= off);
    }

    /// Greedy action per state under the model.
    pub fn greedy_policy(&self, model: &TabularModel) -> Vec<usize> {
        (0..self.v.len()).map(|s| model.best_backup(s, &self.v, self.rho).1).collect()
    }

    /// Max-norm Bellman residual of the current estimates.
    pub fn residual(&self, model: &TabularModel) -> f64 {
        (0..self.v.len())
            .map(|s| (model.best_backup(s, &self.v, self.rho).0 - self.v[s]).abs())
            .fold(0.0, f64::max)
    }
}

/// Pops up to `budget` states, backs each up, and queues predecessors.
/// Returns the number of backups used.
pub fn prioritized_sweep(plan: &mut PlanState, model: &TabularModel, budget: usize) -> usize {
    let mut used = 0;
    while used < budget {
        let Some((s, _)) = plan.queue.pop() else { break };
        let (nv, _) = model.best_backup(s, &plan.v, plan.rho);
        let d = nv - plan.v[s];
        plan.v[s] = nv;
        plan.rho += plan.gain_rate * d;
        plan.notify_change(model, s, d);
        used += 1;
    }
    plan.normalize();
    used
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynaConfig {
    pub epsilon: f64,
    /// Step-size of the direct (model-free) backup.
    pub alpha: f64,
    /// Gain step of the direct backup relative to `alpha`.
    pub eta: f64,
    pub budget: usize,
    pub theta_p: f64,
    /// Gain step per planning backup.
    pub plan_gain_rate: f64,
    pub r_opt: Option<f64>,
}

impl Default for DynaConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            alpha: 0.1,
            eta: 0.1,
            budget: 20,
            theta_p: 1e-4,
            plan_gain_rate: 0.01,
            r_opt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynaStepInfo {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
    pub td_error: f64,
    pub updates_used: usize,
    pub queue_len: usize,
}

/// One-step Dyna agent: differential Q-learning on real experience plus
/// prioritized-sweeping planning on the learned model.
#[derive(Debug, Clone)]
pub struct DynaAgent {
    pub model: TabularModel,
    pub q: Vec<f64>,
    pub plan: PlanState,
    cfg: DynaConfig,
}

impl DynaAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: DynaConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.epsilon) || !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) || !(cfg.eta > 0.0) {
            return Err(Error::Config("invalid Dyna configuration".into()));
        }
        let mut model = TabularModel::new(n_states, n_actions);
        if let Some(r) = cfg.r_opt {
            model = model.with_optimistic_reward(r);
        }
        let mut plan = PlanState::new(n_states, cfg.theta_p, cfg.plan_gain_rate, 0)?;
        plan.queue = PriorityQueue::default();
        Ok(Self {
            model,
            q: vec![0.0; n_states * n_actions],
            plan,
            cfg,
        })
    }

    pub fn config(&self) -> &DynaConfig {
        &self.cfg
    }

    pub fn rho(&self) -> f64 {
        self.plan.rho
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn q_row(&self, s: usize) -> &[f64] {
        let n = self.n_actions();
        &self.q[s * n..(s + 1) * n]
    }

    fn argmax(row: &[f64]) -> usize {
        let mut best = 0;
        for (a, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        Self::argmax(self.q_row(s))
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.model.n_states()).map(|s| self.greedy_action(s)).collect()
    }

    fn max_q(&self, s: usize) -> f64 {
        self.q_row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Recomputes every action value at `s` from the model; returns the
    /// change of the state value.
    fn plan_backup(&mut self, s: usize) -> f64 {
        let n = self.n_actions();
        let v = &self.plan.v;
        for a in 0..n {
            self.q[s * n + a] = self.model.backup(s, a, v, self.plan.rho);
        }
        let nv = self.max_q(s);
        let d = nv - self.plan.v[s];
        self.plan.v[s] = nv;
        d
    }

    fn sweep(&mut self, budget: usize) -> usize {
        let mut used = 0;
        while used < budget {
            let Some((s, _)) = self.plan.queue.pop() else { break };
            let d = self.plan_backup(s);
            self.plan.rho += self.plan.gain_rate * d;
            self.plan.notify_change(&self.model, s, d);
            used += 1;
        }
        used
    }

    /// One real step followed by up to `budget` planning backups.
    pub fn dyna_step<R: Rng + ?Sized>(&mut self, env: &mut ContinuingEnv, rng: &mut R) -> Result<DynaStepInfo> {
        let s = env.state();
        let n = self.n_actions();
        let action = if rng.random::<f64>() < self.cfg.epsilon {
            rng.random_range(0..n)
        } else {
            // Greedy with uniform tie-breaking.
            let row = self.q_row(s);
            let m = self.max_q(s);
            let ties: Vec<usize> = (0..n).filter(|&a| row[a] == m).collect();
            ties[if ties.len() > 1 { rng.random_range(0..ties.len()) } else { 0 }]
        };
        let step = env.env_step(action, rng)?;
        let s_next = step.observation;

        // Foreground: model learning and the direct backup.
        self.model.model_update(s, action, step.reward, s_next)?;
        let i = s * n + action;
        let delta = step.reward - self.plan.rho + self.max_q(s_next) - self.q[i];
        let delta = check_finite("TD error", delta)?;
        self.q[i] += self.cfg.alpha * delta;
        self.plan.rho += self.cfg.eta * self.cfg.alpha * delta;
        let nv = self.max_q(s);
        let d = nv - self.plan.v[s];
        self.plan.v[s] = nv;

        // Background: search control seeded by the real transition.
        let mut used = 0;
        if self.cfg.budget > 0 {
            self.plan.notify_change(&self.model, s, d);
            let (b, _) = self.model.best_backup(s, &self.plan.v, self.plan.rho);
            let pr = (b - self.plan.v[s]).abs();
            if pr > self.plan.theta_p {
                self.plan.queue.push_or_raise(s, pr);
            }
            used = self.sweep(self.cfg.budget);
        }
        Ok(DynaStepInfo {
            state: s,
            action,
            reward: step.reward,
            next: s_next,
            td_error: delta,
            updates_used: used,
            queue_len: self.plan.queue.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_optimal_gain;
    use crate::testbeds::{EnvId, Outcome, TwoRooms, GOAL};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn det(outcomes: Vec<Vec<(usize, f64)>>) -> Dynamics {
        Dynamics {
            n_states: outcomes.len(),
            n_actions: outcomes[0].len(),
            outcomes: outcomes
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|(next, reward)| vec![Outcome { next, prob: 1.0, reward }])
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn single_sample_mle() {
        let mut m = TabularModel::new(3, 2);
        m.model_update(0, 1, 2.5, 2).unwrap();
        assert_eq!(m.trans(0, 1), vec![(2, 1.0)]);
        assert_eq!(m.reward(0, 1), 2.5);
        assert!(m.predecessors(2).contains(&(0, 1)));
    }

    #[test]
    fn frequency_ratio_and_sample_mean() {
        let mut m = TabularModel::new(3, 1);
        for (r, t) in [(1.0, 1), (2.0, 1), (4.0, 2), (5.0, 1)] {
            m.model_update(0, 0, r, t).unwrap();
        }
        assert_eq!(m.trans(0, 0), vec![(1, 0.75), (2, 0.25)]);
        assert_eq!(m.reward(0, 0), 3.0);
    }

    #[test]
    fn unvisited_pairs_are_optimistic_self_loops() {
        let mut m = TabularModel::new(2, 2);
        m.model_update(0, 0, 3.0, 1).unwrap();
        assert_eq!(m.trans(1, 1), vec![(1, 1.0)]);
        assert_eq!(m.reward(1, 1), 3.0);
        let m = m.with_optimistic_reward(7.0);
        assert_eq!(m.reward(1, 0), 7.0);
    }

    #[test]
    fn one_state_gain() {
        let m = TabularModel::from_dynamics(&det(vec![vec![(0, 1.0), (0, 2.0)]]));
        let sol = rvi_plan(&m, &RviConfig::default()).unwrap();
        assert!((sol.rho - 2.0).abs() < 1e-9);
        assert_eq!(sol.v, vec![0.0]);
        assert_eq!(sol.policy, vec![1]);
    }

    #[test]
    fn two_cycle_gain_needs_aperiodicity() {
        let m = TabularModel::from_dynamics(&det(vec![vec![(1, 0.0)], vec![(0, 2.0)]]));
        let cfg = RviConfig {
            aperiodicity: 0.5,
            ..RviConfig::default()
        };
        let sol = rvi_plan(&m, &cfg).unwrap();
        assert!((sol.rho - 1.0).abs() < 1e-8);
        let plain = RviConfig {
            max_sweeps: 1000,
            ..RviConfig::default()
        };
        assert!(matches!(rvi_plan(&m, &plain), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn river_swim_gain_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let env = ContinuingEnv::new(EnvId::RiverSwim, &mut rng);
        let m = TabularModel::from_dynamics(env.dynamics());
        let sol = rvi_plan(&m, &RviConfig::default()).unwrap();
        let (g, pi) = enumerate_optimal_gain(env.dynamics()).unwrap();
        assert!((sol.rho - g).abs() < 1e-6, "{} vs {g}", sol.rho);
        assert_eq!(sol.policy, pi);
        assert!(sol.residual <= 1e-9);
    }

    #[test]
    fn empty_queue_sweep_is_noop() {
        let m = TabularModel::from_dynamics(&TwoRooms::dynamics());
        let mut p = PlanState::new(m.n_states(), 1e-4, 0.01, GOAL).unwrap();
        p.queue = PriorityQueue::default();
        let before = p.clone();
        assert_eq!(prioritized_sweep(&mut p, &m, 10), 0);
        assert_eq!(p, before);
    }

    #[test]
    fn change_queues_predecessors_proportionally() {
        let m = TabularModel::from_dynamics(&TwoRooms::dynamics());
        let mut p = PlanState::new(m.n_states(), 1e-4, 0.01, GOAL).unwrap();
        p.queue = PriorityQueue::default();
        // Each non-goal cell is a 1/50 teleport target of the goal.
        p.notify_change(&m, 12, 0.5);
        for &(s, a) in m.predecessors(12) {
            let w = m.trans(s, a).iter().find(|t| t.0 == 12).unwrap().1;
            assert!(p.queue.priority(s).unwrap() >= w * 0.5 - 1e-15);
        }
        assert!((p.queue.priority(GOAL).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn queue_has_no_duplicates_and_pops_max() {
        let mut q = PriorityQueue::default();
        q.push_or_raise(3, 0.5);
        q.push_or_raise(3, 0.2);
        q.push_or_raise(1, 0.7);
        q.push_or_raise(3, 0.9);
        assert_eq!(q.len(), 2);
        assert_eq!(q.pop(), Some((3, 0.9)));
        assert_eq!(q.pop(), Some((1, 0.7)));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn zero_budget_dyna_is_model_free_q_learning() {
        let cfg = DynaConfig {
            budget: 0,
            ..DynaConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut env = ContinuingEnv::new(EnvId::TwoRooms, &mut rng);
        let mut agent = DynaAgent::new(51, 4, cfg.clone()).unwrap();
        let mut q = vec![0.0; 51 * 4];
        let mut rho = 0.0;
        let mut env2 = env.clone();
        let mut rng2 = rng.clone();
        for _ in 0..2000 {
            let info = agent.dyna_step(&mut env, &mut rng).unwrap();
            // Replay the same random stream through a hand-written learner.
            let s = env2.state();
            let a = if rng2.random::<f64>() < cfg.epsilon {
                rng2.random_range(0..4)
            } else {
                let row = &q[s * 4..s * 4 + 4];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ties: Vec<usize> = (0..4).filter(|&a| row[a] == m).collect();
                ties[if ties.len() > 1 { rng2.random_range(0..ties.len()) } else { 0 }]
            };
            let st = env2.env_step(a, &mut rng2).unwrap();
            let m = q[st.observation * 4..st.observation * 4 + 4].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let d = st.reward - rho + m - q[s * 4 + a];
            q[s * 4 + a] += cfg.alpha * d;
            rho += cfg.eta * cfg.alpha * d;
            assert_eq!(info.action, a);
            assert_eq!(info.updates_used, 0);
        }
        assert_eq!(agent.q, q);
        assert_eq!(agent.rho(), rho);
    }

    #[test]
    fn model_update_precedes_planning() {
        // A fresh agent has an empty queue, so any planning backup on the
        // first step can only come from the just-learned transition.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut env = ContinuingEnv::new(EnvId::TwoRooms, &mut rng);
        // The cell above the goal, with DOWN preferred.
        let s0 = GOAL - 5;
        env.set_state(s0).unwrap();
        let mut agent = DynaAgent::new(51, 4, DynaConfig {
            epsilon: 0.0,
            budget: 5,
            ..DynaConfig::default()
        })
        .unwrap();
        agent.q[s0 * 4 + 1] = 1e-3;
        let info = agent.dyna_step(&mut env, &mut rng).unwrap();
        assert_eq!((info.next, info.reward), (GOAL, 1.0));
        assert!(agent.model.visited(info.state, info.action));
        assert!(info.updates_used > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gain_shifts_with_reward_offset(c in -5.0f64..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let env = ContinuingEnv::new(EnvId::RiverSwim, &mut rng);
            let mut d = env.dynamics().clone();
            let base = rvi_plan(&TabularModel::from_dynamics(&d), &RviConfig::default()).unwrap();
            for row in d.outcomes.iter_mut() {
                for outs in row.iter_mut() {
                    for o in outs.iter_mut() {
                        o.reward += c;
                    }
                }
            }
            let shifted = rvi_plan(&TabularModel::from_dynamics(&d), &RviConfig::default()).unwrap();
            prop_assert!((shifted.rho - base.rho - c).abs() < 1e-6);
            prop_assert_eq!(shifted.policy, base.policy);
        }
    }
}
