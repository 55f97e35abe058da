//! Built-in experiment suites, one per stage of the toolkit. Each run is a
//! pure function of its parameters and seed.

use std::str::FromStr;
use std::sync::OnceLock;

use continua::control::{ActorCriticAgent, ActorCriticConfig};
use continua::features::{FeatureSearchLearner, PoolConfig};
use continua::gvf::{one_hot, Cumulant, GvfLearner, GvfSpec, GvfTransition, TraceKind};
use continua::learner::{LearnerConfig, LinearLearner, MetaRule};
use continua::normalizer::NormalizerState;
use continua::oracle::{cesaro_gain, deterministic_policy, enumerate_optimal_gain, evaluate_policy, option_model};
use continua::planning::{prioritized_sweep, rvi_plan, DynaAgent, DynaConfig, PlanState, RviConfig, TabularModel};
use continua::rng::SeedTree;
use continua::stomp::{make_subtask, plan_with_models, OptionModel, StompConfig, StompLearner};
use continua::testbeds::{ContinuingEnv, DriftConfig, DriftingSupervisedProcess, EnvId, GOAL, HALLWAY};
use rand::Rng;

use crate::config::{Param, RunParams, Value};
use crate::error::{HarnessError, Result};
use crate::record::Series;

pub struct RunOutput {
    pub series: Series,
    pub summary: Vec<(String, f64)>,
}

pub struct Suite {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<Param>,
    pub run: fn(&RunParams, u64) -> Result<RunOutput>,
}

fn p(key: &'static str, default: Value, help: &'static str) -> Param {
    Param { key, default, help }
}

fn f(x: f64) -> Value {
    Value::Float(x)
}

fn i(x: i64) -> Value {
    Value::Int(x)
}

fn s(x: &str) -> Value {
    Value::Str(x.into())
}

fn b(x: bool) -> Value {
    Value::Bool(x)
}

pub fn all() -> &'static [Suite] {
    static SUITES: OnceLock<Vec<Suite>> = OnceLock::new();
    SUITES.get_or_init(|| {
        vec![
            Suite {
                name: "supervised",
                description: "normalized linear regression with meta-learned step-sizes on a drifting target",
                params: [drift_params(20, 5, 0.05, 20_000, 1.0, 0.0), normalizer_params(), learner_params()].concat(),
                run: run_supervised,
            },
            Suite {
                name: "features",
                description: "generate-and-test feature search on a target with a product term",
                params: [drift_params(8, 8, 0.0, 0, 0.5, 2.0), normalizer_params(), learner_params(), pool_params()]
                    .concat(),
                run: run_features,
            },
            Suite {
                name: "gvf",
                description: "differential TD prediction of a fixed policy's reward rate and values",
                params: vec![
                    p("env.name", s("river_swim"), "river_swim or access_control"),
                    p("policy.p_action1", f(1.0), "probability of action 1 (RIGHT / ACCEPT)"),
                    p("gvf.alpha", f(1.0), "initial TD step-size"),
                    p("gvf.lambda", f(0.0), "trace decay"),
                    p("gvf.eta", f(0.1), "initial rate-estimate step"),
                    p("gvf.trace", s("accumulating"), "accumulating or replacing"),
                    p("gvf.theta_meta", f(0.0), "per-weight step-size meta rate (0 = fixed)"),
                    p("gvf.reward_scale", f(0.001), "cumulant = reward * scale"),
                    p("gvf.decay", f(30.0), "step-size decay scale in visits (0 = constant step-sizes)"),
                ],
                run: run_gvf,
            },
            Suite {
                name: "actor_critic",
                description: "softmax actor with differential critic on a bandit or a continuing env",
                params: vec![
                    p("env.name", s("bandit"), "bandit, river_swim, access_control or two_rooms"),
                    p("bandit.arms", i(2), "number of arms; arm 0 is best"),
                    p("bandit.best_payoff", f(1.0), "deterministic payoff of arm 0"),
                    p("bandit.other_payoff", f(0.0), "deterministic payoff of other arms"),
                    p("agent.alpha_critic", f(0.1), "critic step-size"),
                    p("agent.actor_ratio", f(0.1), "actor step-size / critic step-size"),
                    p("agent.lambda_actor", f(0.0), "actor trace decay"),
                    p("agent.lambda_critic", f(0.0), "critic trace decay"),
                    p("agent.eta_rate", f(0.01), "reward-rate step"),
                ],
                run: run_actor_critic,
            },
            Suite {
                name: "planning",
                description: "relative value iteration versus prioritized sweeping on an exact model",
                params: vec![
                    p("env.name", s("two_rooms"), "river_swim, access_control or two_rooms"),
                    p("planner.theta_p", f(1e-4), "priority threshold"),
                    p("planner.gain_rate", f(0.01), "gain step per prioritized backup"),
                    p("planner.reference", i(-1), "reference state (-1: the goal in two_rooms, else 0)"),
                    p("planner.aperiodicity", f(1.0), "backup mixing weight of exhaustive sweeps"),
                    p("planner.max_backups", i(1_000_000), "cap on prioritized backups"),
                ],
                run: run_planning,
            },
            Suite {
                name: "dyna",
                description: "one-step Dyna with prioritized sweeping versus model-free control",
                params: vec![
                    p("env.name", s("two_rooms"), "river_swim, access_control or two_rooms"),
                    p("agent.epsilon", f(0.1), "exploration rate"),
                    p("agent.alpha", f(0.1), "direct-backup step-size"),
                    p("agent.eta", f(0.1), "gain step relative to alpha"),
                    p("agent.budget", i(20), "planning backups per step"),
                    p("agent.theta_p", f(1e-4), "priority threshold"),
                    p("agent.plan_gain_rate", f(0.01), "gain step per planning backup"),
                    p("agent.fixed_r_opt", b(false), "use agent.r_opt instead of the largest observed reward"),
                    p("agent.r_opt", f(1.0), "optimistic reward for unvisited pairs"),
                    p("eval.threshold", f(0.9), "fraction of the optimal gain counted as solved"),
                ],
                run: run_dyna,
            },
            Suite {
                name: "stomp",
                description: "subtasks, options, option models and planning with them on two_rooms",
                params: vec![
                    p("stomp.options", s("hallway+goal"), "none, hallway, goal or hallway+goal"),
                    p("stomp.bonus", f(1.0), "stopping bonus of each subtask"),
                    p("stomp.alpha_main", f(0.1), "main-task Q-learning step-size"),
                    p("stomp.eta_main", f(0.1), "main-task gain step relative to alpha_main"),
                    p("stomp.alpha_option", f(0.1), "option Q-learning step-size"),
                    p("stomp.alpha_model", f(0.5), "option-model step-size"),
                    p("stomp.epsilon", f(0.1), "exploration while executing an option"),
                    p("stomp.snapshot_every", i(10_000), "steps between model snapshots"),
                    p("stomp.consolidation", i(20_000), "model-only learning steps per snapshot"),
                    p("planner.tol", f(1e-6), "planning residual tolerance"),
                    p("planner.gain_step", f(0.5), "fraction of the reference offset moved into the gain"),
                    p("planner.aperiodicity", f(1.0), "backup mixing weight"),
                ],
                run: run_stomp,
            },
        ]
    })
}

pub fn find(name: &str) -> Option<&'static Suite> {
    all().iter().find(|s| s.name == name)
}

pub fn names() -> Vec<&'static str> {
    all().iter().map(|s| s.name).collect()
}

fn drift_params(dim: i64, rel: i64, drift: f64, period: i64, noise: f64, coef: f64) -> Vec<Param> {
    vec![
        p("env.dim", i(dim), "number of inputs"),
        p("env.n_relevant", i(rel), "inputs with non-zero target weight"),
        p("env.drift_std", f(drift), "per-step random walk of relevant weights"),
        p("env.switch_period", i(period), "steps between relevance reassignments (0: never)"),
        p("env.noise_std", f(noise), "target noise"),
        p("env.weight_std", f(1.0), "std of fresh target weights"),
        p("env.scale_index", i(0), "input whose presentation is scaled"),
        p("env.scale_factor", f(1.0), "scale applied to that input"),
        p("env.interaction_i", i(0), "first factor of the product term"),
        p("env.interaction_j", i(1), "second factor of the product term"),
        p("env.interaction_coef", f(coef), "coefficient of the product term (0: none)"),
    ]
}

fn normalizer_params() -> Vec<Param> {
    vec![
        p("normalizer.enabled", b(true), "normalize inputs online"),
        p("normalizer.eta", f(0.001), "tracking rate"),
        p("normalizer.sigma_floor", f(1e-8), "lower bound on the std estimate"),
    ]
}

fn learner_params() -> Vec<Param> {
    vec![
        p("learner.mode", s("idbd"), "idbd, autostep or lms"),
        p("learner.theta_meta", f(0.003), "meta step-size"),
        p("learner.alpha", f(0.01), "fixed step-size in lms mode"),
        p("learner.init_alpha", f(0.0), "initial step-size in meta modes (0: 0.1 / n)"),
        p("learner.alpha_b", f(0.01), "bias step-size"),
        p("learner.bias_meta", b(false), "meta-learn the bias step-size"),
    ]
}

fn pool_params() -> Vec<Param> {
    vec![
        p("pool.enabled", b(true), "search for features (false: raw inputs only)"),
        p("pool.n_max", i(24), "feature budget including raw inputs"),
        p("pool.replace_fraction", f(0.2), "fraction of mature features culled per evaluation"),
        p("pool.maturity_age", i(2000), "steps a new feature is protected"),
        p("pool.utility_rate", f(0.001), "tracking rate of the utility"),
        p("pool.raw_parent_bias", f(0.8), "probability a parent is a raw input"),
        p("pool.ltu_fan_in", i(3), "maximum fan-in of threshold units"),
        p("pool.replace_every", i(1000), "steps between evaluations"),
        p("pool.stats_eta", f(0.001), "tracking rate of feature scale estimates"),
    ]
}

fn drift_config(p: &RunParams) -> Result<DriftConfig> {
    let mut cfg = DriftConfig {
        dim: p.usize("env.dim")?,
        n_relevant: p.usize("env.n_relevant")?,
        drift_std: p.f64("env.drift_std")?,
        switch_period: p.u64("env.switch_period")?,
        noise_std: p.f64("env.noise_std")?,
        weight_std: p.f64("env.weight_std")?,
        ..DriftConfig::default()
    };
    let factor = p.f64("env.scale_factor")?;
    if factor != 1.0 {
        cfg.input_scale.push((p.usize("env.scale_index")?, factor));
    }
    let coef = p.f64("env.interaction_coef")?;
    if coef != 0.0 {
        cfg.interactions.push((p.usize("env.interaction_i")?, p.usize("env.interaction_j")?, coef));
    }
    Ok(cfg)
}

fn learner_config(p: &RunParams, n: usize) -> Result<LearnerConfig> {
    let alpha_b = p.f64("learner.alpha_b")?;
    let mode = p.choice("learner.mode", &["idbd", "autostep", "lms"])?;
    if mode == "lms" {
        return Ok(LearnerConfig::lms(p.f64("learner.alpha")?, alpha_b));
    }
    let init = p.f64("learner.init_alpha")?;
    Ok(LearnerConfig {
        theta_meta: p.f64("learner.theta_meta")?,
        alpha_b,
        init_alpha: Some(if init > 0.0 { init } else { 0.1 / n as f64 }),
        meta_rule: if mode == "idbd" { MetaRule::Idbd } else { MetaRule::Autostep },
        bias_meta: p.bool("learner.bias_meta")?,
        ..LearnerConfig::default()
    })
}

fn normalizer(p: &RunParams, dim: usize) -> Result<Option<NormalizerState>> {
    if !p.bool("normalizer.enabled")? {
        return Ok(None);
    }
    Ok(Some(NormalizerState::new(
        dim,
        p.f64("normalizer.eta")?,
        p.f64("normalizer.sigma_floor")?,
    )?))
}

/// Windowed mean of a per-step signal.
struct Window {
    sum: f64,
    n: u64,
}

impl Window {
    fn new() -> Self {
        Self { sum: 0.0, n: 0 }
    }

    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn take(&mut self) -> f64 {
        let m = if self.n == 0 { f64::NAN } else { self.sum / self.n as f64 };
        *self = Self::new();
        m
    }
}

fn is_log_step(t: u64, p: &RunParams) -> bool {
    t % p.log_every == 0 || t == p.horizon
}

fn run_supervised(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let cfg = drift_config(p)?;
    let dim = cfg.dim;
    let mut process = DriftingSupervisedProcess::new(cfg, &mut rng)?;
    let mut norm = normalizer(p, dim)?;
    let mut learner = LinearLearner::new(dim, learner_config(p, dim)?)?;
    let mut series = Series::new(&["mse", "mean_step_size"]);
    let mut window = Window::new();
    let mut diverged = false;
    for t in 1..=p.horizon {
        let sample = process.supervised_step(&mut rng);
        if !diverged {
            let x = match norm.as_mut() {
                Some(n) => n.normalize_step(&sample.x)?,
                None => sample.x,
            };
            match learner.learn(&x, sample.y_star) {
                Ok(out) => window.add(out.error * out.error),
                Err(_) => diverged = true,
            }
        }
        if is_log_step(t, p) {
            if diverged {
                series.push(t, vec![f64::INFINITY, f64::NAN]);
            } else {
                let a = learner.step_sizes();
                series.push(t, vec![window.take(), a.iter().sum::<f64>() / a.len() as f64]);
            }
        }
    }
    let summary = vec![
        ("asymptotic_mse".into(), series.tail_mean("mse", p.horizon, 0.1)),
        ("diverged".into(), if diverged { 1.0 } else { 0.0 }),
    ];
    Ok(RunOutput { series, summary })
}

fn run_features(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let mut feat_rng = tree.stream("features");
    let cfg = drift_config(p)?;
    let dim = cfg.dim;
    let product = cfg.interactions.first().map(|&(a, b, _)| (a, b));
    let mut process = DriftingSupervisedProcess::new(cfg, &mut rng)?;
    let mut norm = normalizer(p, dim)?;
    let lcfg = learner_config(p, p.usize("pool.n_max")?)?;
    enum Model {
        Linear(LinearLearner),
        Search(Box<FeatureSearchLearner>),
    }
    let mut model = if p.bool("pool.enabled")? {
        let pool = PoolConfig {
            n_max: p.usize("pool.n_max")?,
            replace_fraction: p.f64("pool.replace_fraction")?,
            maturity_age: p.u64("pool.maturity_age")?,
            utility_rate: p.f64("pool.utility_rate")?,
            raw_parent_bias: p.f64("pool.raw_parent_bias")?,
            ltu_fan_in: p.usize("pool.ltu_fan_in")?,
        };
        Model::Search(Box::new(FeatureSearchLearner::new(
            dim,
            pool,
            lcfg,
            p.f64("pool.stats_eta")?,
            p.u64("pool.replace_every")?,
            &mut feat_rng,
        )?))
    } else {
        Model::Linear(LinearLearner::new(dim, learner_config(p, dim)?)?)
    };
    let mut series = Series::new(&["mse", "product_rank_fraction"]);
    let mut window = Window::new();
    let mut diverged = false;
    for t in 1..=p.horizon {
        let sample = process.supervised_step(&mut rng);
        if !diverged {
            let x = match norm.as_mut() {
                Some(n) => n.normalize_step(&sample.x)?,
                None => sample.x,
            };
            let out = match &mut model {
                Model::Linear(l) => l.learn(&x, sample.y_star),
                Model::Search(m) => m.step(&x, sample.y_star, &mut feat_rng),
            };
            match out {
                Ok(o) => window.add(o.error * o.error),
                Err(_) => diverged = true,
            }
        }
        if is_log_step(t, p) {
            // Rank position of the true product feature as a fraction of
            // the pool (0 = most useful, 1 = absent).
            let rank = match (&model, product) {
                (Model::Search(m), Some((a, b))) => match m.pool().find_raw_product(a, b) {
                    Some(slot) => {
                        let ranking = m.pool().ranking();
                        let pos = ranking.iter().position(|&x| x == slot).expect("slot ranked");
                        pos as f64 / ranking.len() as f64
                    }
                    None => 1.0,
                },
                _ => 1.0,
            };
            let mse = if diverged { f64::INFINITY } else { window.take() };
            series.push(t, vec![mse, rank]);
        }
    }
    let final_rank = series.last("product_rank_fraction");
    let summary = vec![
        ("asymptotic_mse".into(), series.tail_mean("mse", p.horizon, 0.1)),
        ("product_top_quartile".into(), if final_rank < 0.25 { 1.0 } else { 0.0 }),
        ("diverged".into(), if diverged { 1.0 } else { 0.0 }),
    ];
    Ok(RunOutput { series, summary })
}

fn tabular_env(p: &RunParams, rng: &mut continua::rng::Rng, allowed: &[&str]) -> Result<ContinuingEnv> {
    let name = p.choice("env.name", allowed)?;
    Ok(ContinuingEnv::new(EnvId::from_str(name)?, rng))
}

/// Values relative to state 0.
fn center(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x - v[0]).collect()
}

fn run_gvf(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let mut env = tabular_env(p, &mut rng, &["river_swim", "access_control"])?;
    let n = env.num_states();
    let p1 = p.f64("policy.p_action1")?;
    if !(0.0..=1.0).contains(&p1) {
        return Err(HarnessError::BadValue {
            key: "policy.p_action1".into(),
            expected: "a probability".into(),
            got: p1.to_string(),
        });
    }
    let scale = p.f64("gvf.reward_scale")?;
    let pi: Vec<Vec<f64>> = vec![vec![1.0 - p1, p1]; n];
    let truth = evaluate_policy(env.dynamics(), &pi, 0)?;
    let true_values: Vec<f64> = center(&truth.values).iter().map(|v| v * scale).collect();
    let true_rate = truth.gain * scale;

    let mut spec = GvfSpec::differential(Cumulant::ScaledReward(scale), p.f64("gvf.lambda")?, p.f64("gvf.eta")?);
    spec.trace = match p.choice("gvf.trace", &["accumulating", "replacing"])? {
        "replacing" => TraceKind::Replacing,
        _ => TraceKind::Accumulating,
    };
    spec.validate()?;
    let mut learner = GvfLearner::new(n, p.f64("gvf.alpha")?)?
        .with_meta(p.f64("gvf.theta_meta")?)
        .with_decay(p.f64("gvf.decay")?);
    let mut act_rng = tree.stream("policy");
    let mut series = Series::new(&["rho_bar", "rate_error", "value_error"]);
    let mut x = one_hot(n, env.state());
    for t in 1..=p.horizon {
        let a = if act_rng.random::<f64>() < p1 { 1 } else { 0 };
        let st = env.env_step(a, &mut rng)?;
        let x_next = one_hot(n, st.observation);
        learner.gvf_step(&spec, &GvfTransition::on_policy(&x, &x_next, st.reward, st.observation))?;
        x = x_next;
        if is_log_step(t, p) {
            let v = center(learner.weights());
            let verr = v.iter().zip(&true_values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            series.push(t, vec![learner.rho_bar(), (learner.rho_bar() - true_rate).abs(), verr]);
        }
    }
    let summary = vec![
        ("true_rate".into(), true_rate),
        ("final_rate_error".into(), series.last("rate_error")),
        ("final_value_error".into(), series.last("value_error")),
    ];
    Ok(RunOutput { series, summary })
}

fn run_actor_critic(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let mut act_rng = tree.stream("policy");
    let cfg = ActorCriticConfig {
        alpha_critic: p.f64("agent.alpha_critic")?,
        actor_ratio: p.f64("agent.actor_ratio")?,
        lambda_actor: p.f64("agent.lambda_actor")?,
        lambda_critic: p.f64("agent.lambda_critic")?,
        eta_rate: p.f64("agent.eta_rate")?,
    };
    let name = p.choice("env.name", &["bandit", "river_swim", "access_control", "two_rooms"])?;
    let mut series = Series::new(&["reward", "rho_bar", "p_best", "policy_gain"]);
    let mut window = Window::new();
    if name == "bandit" {
        let arms = p.usize("bandit.arms")?;
        let (best, other) = (p.f64("bandit.best_payoff")?, p.f64("bandit.other_payoff")?);
        let mut agent = ActorCriticAgent::new(arms, 1, &cfg)?;
        let x = [1.0];
        for t in 1..=p.horizon {
            let (a, _) = agent.policy.policy_sample(&x, &mut act_rng)?;
            let r = if a == 0 { best } else { other };
            agent.actor_critic_step(&x, a, r, &x)?;
            window.add(r);
            if is_log_step(t, p) {
                let pb = agent.policy.probabilities(&x)[0];
                series.push(t, vec![window.take(), agent.rho_bar(), pb, f64::NAN]);
            }
        }
    } else {
        let mut env = ContinuingEnv::new(EnvId::from_str(name)?, &mut rng);
        let (n, k) = (env.num_states(), env.num_actions());
        let mut agent = ActorCriticAgent::new(k, n, &cfg)?;
        let uniform = vec![1.0 / n as f64; n];
        let mut x = one_hot(n, env.state());
        for t in 1..=p.horizon {
            let (a, _) = agent.policy.policy_sample(&x, &mut act_rng)?;
            let st = env.env_step(a, &mut rng)?;
            let x_next = one_hot(n, st.observation);
            agent.actor_critic_step(&x, a, st.reward, &x_next)?;
            x = x_next;
            window.add(st.reward);
            if is_log_step(t, p) {
                let pi: Vec<Vec<f64>> = (0..n).map(|s| agent.policy.probabilities(&one_hot(n, s))).collect();
                let g = cesaro_gain(env.dynamics(), &pi, &uniform);
                series.push(t, vec![window.take(), agent.rho_bar(), f64::NAN, g]);
            }
        }
    }
    let summary = vec![
        ("final_p_best".into(), series.last("p_best")),
        ("final_policy_gain".into(), series.last("policy_gain")),
        ("tail_reward".into(), series.tail_mean("reward", p.horizon, 0.1)),
    ];
    Ok(RunOutput { series, summary })
}

fn reference_state(p: &RunParams, id: EnvId) -> Result<usize> {
    Ok(match p.values.get("planner.reference") {
        Some(Value::Int(r)) if *r >= 0 => *r as usize,
        _ if id == EnvId::TwoRooms => GOAL,
        _ => 0,
    })
}

fn max_dist_centered(v: &[f64], w: &[f64], r: usize) -> f64 {
    v.iter().zip(w).map(|(a, b)| ((a - v[r]) - (b - w[r])).abs()).fold(0.0, f64::max)
}

/// Exhaustive synchronous RVI from zero, recording the distance of every
/// sweep's values from the fixed point.
pub fn rvi_distance_history(model: &TabularModel, fixed: &[f64], cfg: &RviConfig, max_sweeps: usize) -> Vec<f64> {
    let n = model.n_states();
    let mut v = vec![0.0; n];
    let mut rho = 0.0;
    let mut out = Vec::with_capacity(max_sweeps);
    for _ in 0..max_sweeps {
        let nv: Vec<f64> = (0..n)
            .map(|s| v[s] + cfg.aperiodicity * (model.best_backup(s, &v, rho).0 - v[s]))
            .collect();
        let off = nv[cfg.reference];
        rho += cfg.gain_step * off / cfg.aperiodicity;
        v = nv.iter().map(|x| x - off).collect();
        out.push(max_dist_centered(&v, fixed, cfg.reference));
    }
    out
}

fn run_planning(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let env = tabular_env(p, &mut rng, &["river_swim", "access_control", "two_rooms"])?;
    let model = TabularModel::from_dynamics(env.dynamics());
    let n = model.n_states();
    let reference = reference_state(p, env.id())?;
    let cfg = RviConfig {
        tol: 1e-12,
        reference,
        aperiodicity: p.f64("planner.aperiodicity")?,
        ..RviConfig::default()
    };
    let exact = rvi_plan(&model, &cfg)?;

    let theta_p = p.f64("planner.theta_p")?;
    let mut plan = PlanState::new(n, theta_p, p.f64("planner.gain_rate")?, reference)?;
    let max_backups = p.usize("planner.max_backups")?;
    let mut ps_hist = Vec::new();
    let mut used = 0;
    while !plan.queue.is_empty() && used < max_backups {
        used += prioritized_sweep(&mut plan, &model, n.min(max_backups - used));
        ps_hist.push((used, max_dist_centered(&plan.v, &exact.v, reference)));
    }
    let ps_distance = max_dist_centered(&plan.v, &exact.v, reference);
    let rvi_hist = rvi_distance_history(&model, &exact.v, &cfg, exact.sweeps.max(ps_hist.len()) + 1);
    let equal = rvi_hist
        .iter()
        .position(|&d| d <= ps_distance)
        .map_or(f64::INFINITY, |k| ((k + 1) * n) as f64);

    let mut series = Series::new(&["prioritized_distance", "exhaustive_distance"]);
    let rows = rvi_hist.len().max(ps_hist.len());
    for k in 0..rows {
        let ps = ps_hist.get(k).or(ps_hist.last()).map_or(f64::NAN, |x| x.1);
        let ex = *rvi_hist.get(k).or(rvi_hist.last()).unwrap_or(&f64::NAN);
        series.push(((k + 1) * n) as u64, vec![ps, ex]);
    }
    let mut summary = vec![
        ("gain".into(), exact.rho),
        ("prioritized_gain".into(), plan.rho),
        ("prioritized_backups".into(), used as f64),
        ("prioritized_distance".into(), ps_distance),
        ("exhaustive_backups_equal_distance".into(), equal),
        ("backup_ratio".into(), used as f64 / equal),
    ];
    let d = env.dynamics();
    if (d.n_actions as f64).powi(d.n_states as i32) <= 1e5 {
        summary.push(("enumerated_gain".into(), enumerate_optimal_gain(d)?.0));
    }
    Ok(RunOutput { series, summary })
}

fn run_dyna(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let mut env = tabular_env(p, &mut rng, &["river_swim", "access_control", "two_rooms"])?;
    let mut agent_rng = tree.stream("agent");
    let d = env.dynamics().clone();
    let (n, k) = (d.n_states, d.n_actions);
    let cfg = DynaConfig {
        epsilon: p.f64("agent.epsilon")?,
        alpha: p.f64("agent.alpha")?,
        eta: p.f64("agent.eta")?,
        budget: p.usize("agent.budget")?,
        theta_p: p.f64("agent.theta_p")?,
        plan_gain_rate: p.f64("agent.plan_gain_rate")?,
        r_opt: if p.bool("agent.fixed_r_opt")? { Some(p.f64("agent.r_opt")?) } else { None },
    };
    let mut agent = DynaAgent::new(n, k, cfg)?;
    let oracle_cfg = RviConfig {
        reference: if env.id() == EnvId::TwoRooms { GOAL } else { 0 },
        aperiodicity: 0.5,
        ..RviConfig::default()
    };
    let optimal = rvi_plan(&TabularModel::from_dynamics(&d), &oracle_cfg)?.rho;
    let uniform = vec![1.0 / n as f64; n];
    let mut series = Series::new(&["reward", "rho", "greedy_gain", "planning_updates", "queue_len"]);
    let mut reward = Window::new();
    let mut updates = 0.0;
    let mut last_policy: Vec<usize> = Vec::new();
    let mut gain = 0.0;
    for t in 1..=p.horizon {
        let info = agent.dyna_step(&mut env, &mut agent_rng)?;
        reward.add(info.reward);
        updates += info.updates_used as f64;
        if is_log_step(t, p) {
            let pi = agent.greedy_policy();
            if pi != last_policy {
                gain = cesaro_gain(&d, &deterministic_policy(&d, &pi), &uniform);
                last_policy = pi;
            }
            series.push(t, vec![reward.take(), agent.rho(), gain, updates, info.queue_len as f64]);
            updates = 0.0;
        }
    }
    let threshold = p.f64("eval.threshold")? * optimal;
    let gains = series.column("greedy_gain").expect("logged");
    let steps = series.steps();
    let hit = gains
        .iter()
        .position(|&g| g >= threshold)
        .map_or(f64::INFINITY, |i| steps[i] as f64);
    let summary = vec![
        ("optimal_gain".into(), optimal),
        ("steps_to_threshold".into(), hit),
        ("final_greedy_gain".into(), gain),
    ];
    Ok(RunOutput { series, summary })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn run_stomp(p: &RunParams, seed: u64) -> Result<RunOutput> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("env");
    let mut env = ContinuingEnv::new(EnvId::TwoRooms, &mut rng);
    let mut agent_rng = tree.stream("agent");
    let d = env.dynamics().clone();
    let n = d.n_states;
    let bonus = p.f64("stomp.bonus")?;
    let room1: Vec<bool> = (0..n).map(|s| s < HALLWAY).collect();
    let non_goal: Vec<bool> = (0..n).map(|s| s != GOAL).collect();
    let which = p.choice("stomp.options", &["none", "hallway", "goal", "hallway+goal"])?;
    let mut subtasks = Vec::new();
    if which.contains("hallway") {
        subtasks.push((make_subtask(HALLWAY, bonus)?, room1));
    }
    if which.contains("goal") {
        subtasks.push((make_subtask(GOAL, bonus)?, non_goal));
    }
    let has_hallway = which.contains("hallway");
    let cfg = StompConfig {
        alpha_main: p.f64("stomp.alpha_main")?,
        eta_main: p.f64("stomp.eta_main")?,
        alpha_option: p.f64("stomp.alpha_option")?,
        alpha_model: p.f64("stomp.alpha_model")?,
        epsilon: p.f64("stomp.epsilon")?,
    };
    let mut learner = StompLearner::new(n, d.n_actions, &subtasks, cfg)?;
    let every = p.u64("stomp.snapshot_every")?.max(1);
    let consolidation = p.u64("stomp.consolidation")?;
    let plan_cfg = RviConfig {
        tol: p.f64("planner.tol")?,
        reference: GOAL,
        gain_step: p.f64("planner.gain_step")?,
        aperiodicity: p.f64("planner.aperiodicity")?,
        ..RviConfig::default()
    };
    let mut series = Series::new(&[
        "rho_bar",
        "model_residual",
        "hallway_mass_min",
        "flat_backups",
        "option_backups",
        "backup_reduction",
        "gain_gap",
    ]);
    for t in 1..=p.horizon {
        learner.step(&mut env, &mut agent_rng)?;
        if t % every != 0 {
            continue;
        }
        // Snapshot: freeze the gain and option policies, let the models
        // settle on further experience, then plan with and without them.
        let mut snap = learner.clone();
        snap.learn_policies = false;
        let mut snap_env = env.clone();
        let mut snap_rng = tree.child("snapshot").index(t).rng();
        for _ in 0..consolidation {
            snap.step(&mut snap_env, &mut snap_rng)?;
        }
        let mut residual: f64 = 0.0;
        for (opt, m) in snap.options.iter().zip(&snap.models) {
            let exact = option_model(&d, &opt.policy_matrix(), &opt.beta, snap.rho_bar)?;
            for s in (0..n).filter(|&s| opt.initiation[s]) {
                residual = residual
                    .max((exact.reward[s] - m.r_model[s]).abs())
                    .max((exact.duration[s] - m.n_model[s]).abs());
            }
        }
        let hallway_mass = if has_hallway {
            (0..HALLWAY).map(|s| snap.models[0].p_model[s][HALLWAY]).fold(1.0, f64::min)
        } else {
            f64::NAN
        };
        let flat = plan_with_models(&snap.primitive, &[], &plan_cfg, snap.rho_bar)?;
        let models: Vec<&OptionModel> = snap.models.iter().collect();
        let with = plan_with_models(&snap.primitive, &models, &plan_cfg, snap.rho_bar)?;
        series.push(
            t,
            vec![
                snap.rho_bar,
                residual,
                hallway_mass,
                flat.backups as f64,
                with.backups as f64,
                1.0 - with.backups as f64 / flat.backups as f64,
                (with.rho - flat.rho).abs(),
            ],
        );
    }
    let col = |name: &str| series.column(name).expect("logged");
    let summary = vec![
        ("median_backup_reduction".into(), median(col("backup_reduction"))),
        ("max_gain_gap".into(), col("gain_gap").into_iter().fold(0.0, f64::max)),
        ("max_model_residual".into(), col("model_residual").into_iter().fold(0.0, f64::max)),
        ("min_hallway_mass".into(), col("hallway_mass_min").into_iter().fold(f64::NAN, f64::min)),
    ];
    Ok(RunOutput { series, summary })
}
