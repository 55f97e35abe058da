//! Exact reference computations on small finite problems: stationary
//! distributions, average-reward policy evaluation, exhaustive policy
//! enumeration, shortest-path distances and option-model linear solves.
//!
//! These go through dense linear algebra or enumeration and share no code
//! with the iterative learners and planners they are used to check.

use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::testbeds::Dynamics;

/// Gain and differential values of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub gain: f64,
    /// Differential values with `values[reference] = 0`.
    pub values: Vec<f64>,
    pub stationary: Vec<f64>,
}

/// State-to-state transition matrix and expected one-step reward under a
/// stochastic policy `pi[s][a]`.
pub fn policy_chain(dyn_: &Dynamics, pi: &[Vec<f64>]) -> (DMatrix<f64>, DVector<f64>) {
    let n = dyn_.n_states;
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for s in 0..n {
        for a in 0..dyn_.n_actions {
            let w = pi[s][a];
            if w == 0.0 {
                continue;
            }
            for o in &dyn_.outcomes[s][a] {
                p[(s, o.next)] += w * o.prob;
                r[s] += w * o.prob * o.reward;
            }
        }
    }
    (p, r)
}

pub fn deterministic_policy(dyn_: &Dynamics, actions: &[usize]) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; dyn_.n_actions];
            row[a] = 1.0;
            row
        })
        .collect()
}

/// Unique stationary distribution of a unichain transition matrix.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Input("transition matrix is not unichain".into()))?;
    Ok(pi.iter().copied().collect())
}

/// Solves `h = r - g + P h`, `h[reference] = 0` for a unichain policy.
pub fn evaluate_policy(
    dyn_: &Dynamics,
    pi: &[Vec<f64>],
    reference: usize,
) -> Result<PolicyEvaluation> {
    let n = dyn_.n_states;
    let (p, r) = policy_chain(dyn_, pi);
    let stationary = stationary_distribution(&p)?;
    let gain: f64 = stationary.iter().zip(r.iter()).map(|(a, b)| a * b).sum();

    // Unknowns: h (n entries), with column `reference` standing in for g.
    let mut a = DMatrix::identity(n, n) - &p;
    for s in 0..n {
        a[(s, reference)] = 1.0;
    }
    let x = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Input("differential value system is singular".into()))?;
    let mut values: Vec<f64> = x.iter().copied().collect();
    values[reference] = 0.0;
    Ok(PolicyEvaluation {
        gain,
        values,
        stationary,
    })
}

/// Long-run average reward from an initial distribution, valid for
/// multichain policies as well: each closed recurrent class gets its own
/// stationary gain and transient states inherit the absorption-weighted mix.
pub fn cesaro_gain(dyn_: &Dynamics, pi: &[Vec<f64>], start: &[f64]) -> f64 {
    let g = state_gains(dyn_, pi);
    g.iter().zip(start).map(|(a, b)| a * b).sum()
}

/// Per-state long-run average reward of a (possibly multichain) policy.
pub fn state_gains(dyn_: &Dynamics, pi: &[Vec<f64>]) -> Vec<f64> {
    let (p, r) = policy_chain(dyn_, pi);
    let n = dyn_.n_states;
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for t in 0..n {
                    if p[(u, t)] > 0.0 && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            seen
        })
        .collect();
    let recurrent: Vec<bool> = (0..n).map(|s| (0..n).all(|t| !reach[s][t] || reach[t][s])).collect();
    let mut g = vec![0.0; n];
    let mut done = vec![false; n];
    for s in 0..n {
        if !recurrent[s] || done[s] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&t| reach[s][t]).collect();
        let sub = DMatrix::from_fn(class.len(), class.len(), |i, j| p[(class[i], class[j])]);
        let d = stationary_distribution(&sub).expect("a closed class has a unique stationary distribution");
        let gain: f64 = class.iter().zip(&d).map(|(&t, w)| w * r[t]).sum();
        for &t in &class {
            g[t] = gain;
            done[t] = true;
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&s| !recurrent[s]).collect();
    if !transient.is_empty() {
        let m = transient.len();
        let a = DMatrix::from_fn(m, m, |i, j| f64::from(u8::from(i == j)) - p[(transient[i], transient[j])]);
        let b = DVector::from_fn(m, |i, _| (0..n).filter(|&t| recurrent[t]).map(|t| p[(transient[i], t)] * g[t]).sum());
        let x = a.lu().solve(&b).expect("transient states leave their set with positive probability");
        for (i, &s) in transient.iter().enumerate() {
            g[s] = x[i];
        }
    }
    g
}

/// Best gain over all deterministic stationary policies, each evaluated
/// through its exact stationary distribution.
pub fn enumerate_optimal_gain(dyn_: &Dynamics) -> Result<(f64, Vec<usize>)> {
    let n = dyn_.n_states;
    let k = dyn_.n_actions;
    let total = (k as f64).powi(n as i32);
    if total > 1e6 {
        return Err(Error::Input(format!(
            "{total} policies is too many to enumerate"
        )));
    }
    let mut best = (f64::NEG_INFINITY, vec![0; n]);
    let mut actions = vec![0usize; n];
    loop {
        let (p, r) = policy_chain(dyn_, &deterministic_policy(dyn_, &actions));
        let stationary = stationary_distribution(&p)?;
        let gain: f64 = stationary.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
        if gain > best.0 {
            best = (gain, actions.clone());
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                return Ok(best);
            }
            actions[i] += 1;
            if actions[i] < k {
                break;
            }
            actions[i] = 0;
            i += 1;
        }
    }
}

/// Breadth-first shortest-path distances (in steps) to `target` over the
/// support graph of the dynamics.
pub fn bfs_distances(dyn_: &Dynamics, target: usize) -> Vec<Option<usize>> {
    let n = dyn_.n_states;
    let mut preds = vec![Vec::new(); n];
    for s in 0..n {
        for a in 0..dyn_.n_actions {
            for o in &dyn_.outcomes[s][a] {
                if o.prob > 0.0 {
                    preds[o.next].push(s);
                }
            }
        }
    }
    let mut dist = vec![None; n];
    dist[target] = Some(0);
    let mut queue = VecDeque::from([target]);
    while let Some(t) = queue.pop_front() {
        let d = dist[t].unwrap();
        for &s in &preds[t] {
            if dist[s].is_none() {
                dist[s] = Some(d + 1);
                queue.push_back(s);
            }
        }
    }
    dist
}

/// Exact option model by linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOptionModel {
    pub reward: Vec<f64>,
    pub duration: Vec<f64>,
    pub termination: Vec<Vec<f64>>,
}

/// Solves the intra-option Bellman equations for an option with
/// stochastic policy `pi[s][a]` and termination probabilities `beta[s]`,
/// with rewards centered by `rho_bar`:
///
/// `r = c + M r`, `n = 1 + M n`, `P = B + M P`, where
/// `M[s, s'] = sum_a pi p(s'|s,a) (1 - beta(s'))` and
/// `B[s, s'] = sum_a pi p(s'|s,a) beta(s')`.
pub fn option_model(
    dyn_: &Dynamics,
    pi: &[Vec<f64>],
    beta: &[f64],
    rho_bar: f64,
) -> Result<ExactOptionModel> {
    let n = dyn_.n_states;
    let (p, r) = policy_chain(dyn_, pi);
    let mut m = p.clone();
    let mut b = p;
    for s in 0..n {
        for t in 0..n {
            m[(s, t)] *= 1.0 - beta[t];
            b[(s, t)] *= beta[t];
        }
    }
    let lu = (DMatrix::identity(n, n) - m).lu();
    let c = r.map(|v| v - rho_bar);
    let singular = || Error::Input("option never terminates from some state".into());
    let reward = lu.solve(&c).ok_or_else(singular)?;
    let duration = lu.solve(&DVector::from_element(n, 1.0)).ok_or_else(singular)?;
    let term = lu.solve(&b).ok_or_else(singular)?;
    Ok(ExactOptionModel {
        reward: reward.iter().copied().collect(),
        duration: duration.iter().copied().collect(),
        termination: (0..n).map(|s| term.row(s).iter().copied().collect()).collect(),
    })
}
