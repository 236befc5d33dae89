//! Experiment configuration: one flat TOML file per experiment.
//!
//! ```toml
//! algorithm = "ccpo"
//! env.task = "chain"
//! env.gamma = 0.9
//! thresholds.behavior = [20, 40, 60]
//! critic.degree = 1
//! run.seeds = [0, 1, 2]
//! ```
//!
//! Every key is optional except `env.task` and `env.gamma`. Unknown keys are
//! rejected.

use std::path::PathBuf;

use ccpo_core::baselines::LagrangianConfig;
use ccpo_core::cmdp::{EnvSpec, TaskSpec};
use ccpo_core::config::{FlatConfig, Value};
use ccpo_core::cvi::TrustRegionConfig;
use ccpo_core::trainer::{BehaviorConditionSet, FeatureKind, TrainConfig};
use ccpo_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ccpo,
    Combo,
    Lagrangian,
    Oracle,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ccpo => "ccpo",
            Algorithm::Combo => "combo",
            Algorithm::Lagrangian => "lagrangian",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "ccpo" => Algorithm::Ccpo,
            "combo" => Algorithm::Combo,
            "lagrangian" => Algorithm::Lagrangian,
            "oracle" => Algorithm::Oracle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalChoice {
    /// Exact on tabular tasks, Monte-Carlo otherwise.
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianParams {
    pub lr_policy: f64,
    pub lr_lambda: f64,
    pub lambda_init: f64,
    pub entropy_coef: f64,
    pub policy_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec<f64>,
    pub algorithm: Algorithm,
    /// Training settings; `seed` is replaced per run.
    pub train: TrainConfig<f64>,
    pub lagrangian: LagrangianParams,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub eval: EvalChoice,
    pub output: PathBuf,
    raw: FlatConfig,
}

fn bad(key: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("key `{key}` {why}"))
}

fn seed_list(cfg: &FlatConfig, key: &str) -> Result<Option<Vec<u64>>> {
    match cfg.raw(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(vec![*i as u64])),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                _ => Err(bad(key, "must hold nonnegative integers")),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(_) => Err(bad(key, "must be an integer or an array of integers")),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_flat(FlatConfig::parse(text)?)
    }

    pub fn from_flat(raw: FlatConfig) -> Result<Self> {
        let cfg = &raw;
        let env = EnvSpec::<f64>::from_config(cfg, "env")?;

        let algorithm = match cfg.str("algorithm")? {
            None => Algorithm::Ccpo,
            Some(name) => Algorithm::parse(&name).ok_or_else(|| {
                bad(
                    "algorithm",
                    format!("has unknown value `{name}` (ccpo, combo, lagrangian, oracle)"),
                )
            })?,
        };

        let behavior = cfg
            .f64_list("thresholds.behavior")?
            .unwrap_or_else(|| vec![20.0, 40.0, 60.0]);
        let lower = cfg.f64_or("thresholds.lower", 10.0)?;
        let upper = cfg.f64_or("thresholds.upper", 70.0)?;
        let grid = match cfg.f64_list("thresholds.grid")? {
            Some(g) => g,
            None => linspace(lower, upper, 13),
        };
        let conditions = BehaviorConditionSet::new(behavior, grid, lower, upper)
            .map_err(|e| bad("thresholds", e))?;

        let mut train = TrainConfig::new(conditions, env.horizon, 0);
        train.trust = TrustRegionConfig {
            kappa: cfg.f64_or("trust.kappa", train.trust.kappa)?,
            kl_m: cfg.f64_or("trust.kl_m", train.trust.kl_m)?,
            alpha_temp: cfg.f64_or("trust.alpha_temp", train.trust.alpha_temp)?,
        };
        train.penalty = cfg.f64("trust.penalty")?;

        let c = &mut train.critic;
        c.features = match cfg.str("critic.features")?.as_deref() {
            None | Some("one_hot") => {
                if cfg.contains("critic.dim") {
                    return Err(bad(
                        "critic.dim",
                        "applies only to critic.features = \"random\"",
                    ));
                }
                FeatureKind::OneHot
            }
            Some("random") => FeatureKind::Random {
                dim: cfg.usize_or("critic.dim", ccpo_core::critic::DEFAULT_FEATURE_DIM)?,
                k_bound: cfg.f64_or("critic.k_bound", 1.0)?,
            },
            Some(other) => {
                return Err(bad(
                    "critic.features",
                    format!("has unknown value `{other}` (one_hot, random)"),
                ))
            }
        };
        c.degree = cfg.usize_or("critic.degree", c.degree)?;
        c.learning_rate = cfg.f64_or("critic.lr", c.learning_rate)?;
        c.polyak = cfg.f64_or("critic.polyak", c.polyak)?;
        c.steps = cfg.usize_or("critic.steps", c.steps)?;
        c.batch_size = cfg.usize_or("critic.batch", c.batch_size)?;
        c.preconditioned = cfg.bool_or("critic.preconditioned", c.preconditioned)?;

        train.policy_degree = cfg.usize_or("policy.degree", train.policy_degree)?;
        train.warmup_iterations = cfg.usize_or("train.warmup", train.warmup_iterations)?;
        train.iterations = cfg.usize_or("train.iterations", train.iterations)?;
        train.finetune_iterations = cfg.usize_or("train.finetune", train.finetune_iterations)?;
        train.finetune_samples = cfg.usize_or("train.finetune_samples", train.finetune_samples)?;
        train.episodes_per_condition =
            cfg.usize_or("train.episodes", train.episodes_per_condition)?;
        train.buffer_capacity = cfg.usize_or("train.capacity", train.buffer_capacity)?;
        validate_train(&train)?;

        let defaults = LagrangianConfig::new(train.clone());
        let lagrangian = LagrangianParams {
            lr_policy: cfg.f64_or("lagrangian.lr_policy", defaults.lr_policy)?,
            lr_lambda: cfg.f64_or("lagrangian.lr_lambda", defaults.lr_lambda)?,
            lambda_init: cfg.f64_or("lagrangian.lambda_init", defaults.lambda_init)?,
            entropy_coef: cfg.f64_or("lagrangian.entropy", defaults.entropy_coef)?,
            policy_steps: cfg.usize_or("lagrangian.policy_steps", defaults.policy_steps)?,
        };
        for (key, v) in [
            ("lagrangian.lr_policy", lagrangian.lr_policy),
            ("lagrangian.lr_lambda", lagrangian.lr_lambda),
            ("lagrangian.lambda_init", lagrangian.lambda_init),
            ("lagrangian.entropy", lagrangian.entropy_coef),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(key, "must be a finite nonnegative number"));
            }
        }

        let seeds = seed_list(cfg, "run.seeds")?.unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(bad("run.seeds", "must not be empty"));
        }
        let eval_episodes = cfg.usize_or("run.eval_episodes", 50)?;
        if eval_episodes == 0 {
            return Err(bad("run.eval_episodes", "must be positive"));
        }
        let eval = match cfg.str("run.eval")?.as_deref() {
            None | Some("auto") => EvalChoice::Auto,
            Some("exact") => EvalChoice::Exact,
            Some("monte_carlo") => EvalChoice::MonteCarlo,
            Some(other) => {
                return Err(bad(
                    "run.eval",
                    format!("has unknown value `{other}` (auto, exact, monte_carlo)"),
                ))
            }
        };
        let tabular = !matches!(env.task, TaskSpec::PointMass(_));
        if eval == EvalChoice::Exact && !tabular {
            return Err(bad(
                "run.eval",
                "is `exact` but the task has no tabular model",
            ));
        }
        if algorithm == Algorithm::Oracle && !tabular {
            return Err(bad(
                "algorithm",
                "is `oracle` but the task has no tabular model",
            ));
        }
        let output = PathBuf::from(cfg.str("run.output")?.unwrap_or_else(|| "out".into()));

        cfg.reject_unknown()?;
        Ok(Self {
            env,
            algorithm,
            train,
            lagrangian,
            seeds,
            eval_episodes,
            eval,
            output,
            raw,
        })
    }

    /// The configuration as flat `key = value` text; parses back to an equal config.
    pub fn to_text(&self) -> String {
        self.raw.to_text()
    }

    pub fn conditions(&self) -> &BehaviorConditionSet<f64> {
        &self.train.conditions
    }

    pub fn is_tabular(&self) -> bool {
        !matches!(self.env.task, TaskSpec::PointMass(_))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig<f64> {
        let mut t = self.train.clone();
        t.seed = seed;
        t
    }

    pub fn lagrangian_config(&self, seed: u64) -> LagrangianConfig<f64> {
        let mut base = self.train_config(seed);
        base.iterations += base.finetune_iterations;
        base.finetune_iterations = 0;
        let mut l = LagrangianConfig::new(base);
        l.lr_policy = self.lagrangian.lr_policy;
        l.lr_lambda = self.lagrangian.lr_lambda;
        l.lambda_init = self.lagrangian.lambda_init;
        l.entropy_coef = self.lagrangian.entropy_coef;
        l.policy_steps = self.lagrangian.policy_steps;
        l
    }

    pub fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.raw.set(
            "run.seeds",
            Value::Array(seeds.iter().map(|s| Value::Integer(*s as i64)).collect()),
        );
        self.seeds = seeds;
    }

    pub fn set_output(&mut self, dir: PathBuf) {
        self.raw.set("run.output", dir.display().to_string());
        self.output = dir;
    }

    pub fn set_algorithm(&mut self, algorithm: Algorithm) {
        self.raw.set("algorithm", algorithm.as_str());
        self.algorithm = algorithm;
    }
}

fn validate_train(t: &TrainConfig<f64>) -> Result<()> {
    t.validate().map_err(|e| match e {
        Error::InvalidArgument { name, reason } => {
            let key = match name {
                "kappa" => "trust.kappa",
                "kl_m" => "trust.kl_m",
                "alpha_temp" => "trust.alpha_temp",
                "polyak" => "critic.polyak",
                "learning_rate" => "critic.lr",
                "degree" => "critic.degree",
                "episodes_per_condition" => "train.episodes",
                "finetune_samples" => "train.finetune_samples",
                other => other,
            };
            bad(key, reason)
        }
        other => other,
    })?;
    if let Some(p) = t.penalty {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(bad("trust.penalty", "must be a finite nonnegative number"));
        }
    }
    if t.buffer_capacity == 0 {
        return Err(bad("train.capacity", "must be positive"));
    }
    Ok(())
}

pub const CHAIN_PRESET: &str = include_str!("../configs/chain.toml");
pub const CIRCLE_PRESET: &str = include_str!("../configs/circle.toml");
