//! Constrained MDPs: exact tabular models, the point-mass simulator, and
//! rollout / return machinery.

mod env;
mod model;
mod point_mass;

pub use env::{
    derive_seed, discounted_return, episode_sum, rng_from_seed, rollout, rollout_with,
    sample_index, truncation_error, AtThreshold, ConditionedPolicy, Environment, Policy, Signal,
    SimRng, TabularPolicy, TrajectoryStep, Transition,
};
pub use model::{random_model, ChainSpec, CmdpModel, GridSpec};
pub use point_mass::{
    circle_cost, circle_reward, run_reward_cost, PointMassEnv, PointMassParams, PointState,
    PointTask, N_POINT_ACTIONS,
};

use crate::config::{FlatConfig, Value};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Task definition as read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec<T> {
    Chain(ChainSpec<T>),
    Grid(GridSpec<T>),
    Random {
        n_states: usize,
        n_actions: usize,
        seed: u64,
        gamma: T,
    },
    PointMass(PointMassParams<T>),
}

/// A task plus its episode horizon and environment seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec<T> {
    pub task: TaskSpec<T>,
    pub horizon: usize,
    pub seed: u64,
}

/// Either kind of environment; tabular models also admit exact evaluation.
#[derive(Debug, Clone)]
pub enum BuiltEnv<T> {
    Tabular(CmdpModel<T>),
    PointMass(PointMassEnv<T>),
}

fn key(prefix: &str, k: &str) -> String {
    if prefix.is_empty() {
        k.to_string()
    } else {
        format!("{prefix}.{k}")
    }
}

fn cell_list(cfg: &FlatConfig, k: &str) -> Result<Option<Vec<(usize, usize)>>> {
    let bad = || {
        Error::Config(format!(
            "key `{k}` must be an array of [x, y] integer pairs"
        ))
    };
    match cfg.raw(k) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|it| match it.as_array().map(|a| a.as_slice()) {
                Some([Value::Integer(x), Value::Integer(y)]) if *x >= 0 && *y >= 0 => {
                    Ok((*x as usize, *y as usize))
                }
                _ => Err(bad()),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(_) => Err(bad()),
    }
}

impl<T: Real> EnvSpec<T> {
    /// Reads `task`, `gamma`, `horizon`, `seed` and the task's own keys
    /// (`chain.*`, `grid.*`, `random.*`, `point.*`) under `prefix`.
    pub fn from_config(cfg: &FlatConfig, prefix: &str) -> Result<Self> {
        let k = |s: &str| key(prefix, s);
        let task_name = cfg.req_str(&k("task"))?;
        let gamma = cfg.req_f64(&k("gamma"))?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!(
                "key `{}` must lie in (0, 1)",
                k("gamma")
            )));
        }
        let g = T::lit(gamma);
        let seed = cfg.u64(&k("seed"))?.unwrap_or(0);
        let (task, default_horizon) = match task_name.as_str() {
            "chain" => {
                let n = cfg.usize_or(&k("chain.n_states"), 8)?;
                if n < 2 {
                    return Err(Error::Config(format!(
                        "key `{}` must be ≥ 2",
                        k("chain.n_states")
                    )));
                }
                let lo = cfg.f64_or(&k("chain.hazard_lo"), 4.0)?;
                let hi = cfg.f64_or(&k("chain.hazard_hi"), 12.0)?;
                let mut spec = ChainSpec::graded(n, T::lit(lo), T::lit(hi), g);
                spec.p_forward = T::lit(cfg.f64_or(&k("chain.p_forward"), 0.5)?);
                spec.p_back = T::lit(cfg.f64_or(&k("chain.p_back"), 0.2)?);
                (TaskSpec::Chain(spec), 10)
            }
            "grid" => {
                let width = cfg.usize_or(&k("grid.width"), 5)?;
                let height = cfg.usize_or(&k("grid.height"), 5)?;
                let cost_cells = cell_list(cfg, &k("grid.cost_cells"))?.unwrap_or_else(|| {
                    (1..width.saturating_sub(1))
                        .map(|x| (x, height / 2))
                        .collect()
                });
                let spec = GridSpec {
                    width,
                    height,
                    slip: T::lit(cfg.f64_or(&k("grid.slip"), 0.1)?),
                    start: (0, 0),
                    goal: (width.saturating_sub(1), height.saturating_sub(1)),
                    cost_cells,
                    goal_reward: T::lit(cfg.f64_or(&k("grid.goal_reward"), 1.0)?),
                    step_reward: T::lit(cfg.f64_or(&k("grid.step_reward"), 0.0)?),
                    gamma: g,
                };
                (TaskSpec::Grid(spec), 50)
            }
            "random" => (
                TaskSpec::Random {
                    n_states: cfg.usize_or(&k("random.n_states"), 5)?,
                    n_actions: cfg.usize_or(&k("random.n_actions"), 3)?,
                    seed: cfg.u64(&k("random.seed"))?.unwrap_or(seed),
                    gamma: g,
                },
                50,
            ),
            "circle" | "run" => {
                let mut p = if task_name == "circle" {
                    PointMassParams::circle()
                } else {
                    PointMassParams::run()
                };
                p.gamma = g;
                let f = |name: &str, v: &mut T| -> Result<()> {
                    if let Some(x) = cfg.f64(&k(&format!("point.{name}")))? {
                        *v = T::lit(x);
                    }
                    Ok(())
                };
                f("circle_radius", &mut p.circle_radius)?;
                f("x_lim", &mut p.x_lim)?;
                f("y_lim", &mut p.y_lim)?;
                f("v_lim", &mut p.v_lim)?;
                f("dt", &mut p.dt)?;
                f("accel", &mut p.accel)?;
                f("v_max", &mut p.v_max)?;
                f("start_noise", &mut p.start_noise)?;
                (TaskSpec::PointMass(p), 100)
            }
            other => {
                return Err(Error::Config(format!(
                    "key `{}` has unknown task `{other}` (chain, grid, random, circle, run)",
                    k("task")
                )))
            }
        };
        let horizon = cfg.usize_or(&k("horizon"), default_horizon)?;
        Ok(Self {
            task,
            horizon,
            seed,
        })
    }

    /// Parses a standalone environment file; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = FlatConfig::parse(text)?;
        let spec = Self::from_config(&cfg, "")?;
        cfg.reject_unknown()?;
        Ok(spec)
    }

    pub fn task_name(&self) -> &'static str {
        match &self.task {
            TaskSpec::Chain(_) => "chain",
            TaskSpec::Grid(_) => "grid",
            TaskSpec::Random { .. } => "random",
            TaskSpec::PointMass(p) => match p.task {
                PointTask::Circle => "circle",
                PointTask::Run => "run",
            },
        }
    }

    pub fn gamma(&self) -> T {
        match &self.task {
            TaskSpec::Chain(c) => c.gamma,
            TaskSpec::Grid(g) => g.gamma,
            TaskSpec::Random { gamma, .. } => *gamma,
            TaskSpec::PointMass(p) => p.gamma,
        }
    }

    pub fn build(&self) -> Result<BuiltEnv<T>> {
        Ok(match &self.task {
            TaskSpec::Chain(c) => BuiltEnv::Tabular(c.build()?),
            TaskSpec::Grid(g) => BuiltEnv::Tabular(g.build()?),
            TaskSpec::Random {
                n_states,
                n_actions,
                seed,
                gamma,
            } => BuiltEnv::Tabular(random_model(*n_states, *n_actions, *gamma, *seed)?),
            TaskSpec::PointMass(p) => BuiltEnv::PointMass(PointMassEnv::new(p.clone())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_chain_with_defaults() {
        let spec = EnvSpec::<f64>::parse("task = \"chain\"\ngamma = 0.9\nseed = 3\n").unwrap();
        assert_eq!(spec.task_name(), "chain");
        assert_eq!(spec.horizon, 10);
        assert_eq!(spec.seed, 3);
        match spec.build().unwrap() {
            BuiltEnv::Tabular(m) => assert_eq!(m.n_states(), 8),
            BuiltEnv::PointMass(_) => panic!("expected tabular"),
        }
    }

    #[test]
    fn parses_point_mass_overrides() {
        let text = "task = \"circle\"\ngamma = 0.95\nhorizon = 40\n[point]\nx_lim = 0.5\n";
        let spec = EnvSpec::<f32>::parse(text).unwrap();
        match spec.task {
            TaskSpec::PointMass(p) => {
                assert_eq!(p.x_lim, 0.5);
                assert_eq!(p.task, PointTask::Circle);
            }
            _ => panic!("expected point mass"),
        }
        assert_eq!(spec.horizon, 40);
    }

    #[test]
    fn grid_cells_and_errors() {
        let text = "task = \"grid\"\ngamma = 0.9\ngrid.cost_cells = [[1, 1], [2, 1]]\n";
        let spec = EnvSpec::<f64>::parse(text).unwrap();
        match &spec.task {
            TaskSpec::Grid(g) => assert_eq!(g.cost_cells, vec![(1, 1), (2, 1)]),
            _ => panic!(),
        }
        let err = EnvSpec::<f64>::parse("task = \"chain\"\n").unwrap_err();
        assert!(err.to_string().contains("gamma"));
        let err =
            EnvSpec::<f64>::parse("task = \"chain\"\ngamma = 0.9\nchain.typo = 1\n").unwrap_err();
        assert!(err.to_string().contains("chain.typo"));
        assert!(EnvSpec::<f64>::parse("task = \"maze\"\ngamma = 0.9\n").is_err());
    }
}
