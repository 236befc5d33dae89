//! `run`: train one algorithm per seed, evaluate on the grid, write CSV and
//! JSONL output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ccpo_core::baselines::{train_lagrangian, LagrangianLog, SingleThresholdPolicyBank};
use ccpo_core::cmdp::{BuiltEnv, CmdpModel, ConditionedPolicy, Environment, Policy, TabularPolicy};
use ccpo_core::fmt::format_g;
use ccpo_core::oracle::{solve_cmdp_lp, SolveStatus};
use ccpo_core::trainer::{evaluate, train, EvalMode, ExactModel, IterationLog, MetricsRecord};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Algorithm, EvalChoice, ExperimentConfig};
use crate::CliError;

pub const METRICS_HEADER: [&str; 8] = [
    "task",
    "seed",
    "epsilon",
    "is_behavior",
    "reward_mean",
    "reward_std",
    "cv_mean",
    "cv_std",
];

/// LP-optimal policy per grid threshold; queries between grid points use
/// the nearest one.
#[derive(Debug, Clone)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
}

#[derive(Debug, Clone)]
pub struct FrontierPoint {
    pub epsilon: f64,
    pub feasible: bool,
    pub v_r: f64,
    pub v_c: f64,
    pub policy: TabularPolicy<f64>,
}

impl Frontier {
    pub fn solve(model: &CmdpModel<f64>, grid: &[f64]) -> ccpo_core::Result<Self> {
        let points = grid
            .par_iter()
            .map(|&eps| {
                let sol = solve_cmdp_lp(model, eps)?;
                Ok(FrontierPoint {
                    epsilon: eps,
                    feasible: sol.status == SolveStatus::Optimal,
                    v_r: sol.v_r,
                    v_c: sol.v_c,
                    policy: sol.policy,
                })
            })
            .collect::<ccpo_core::Result<Vec<_>>>()?;
        Ok(Self { points })
    }

    fn nearest(&self, eps: f64) -> &FrontierPoint {
        self.points
            .iter()
            .min_by(|a, b| (a.epsilon - eps).abs().total_cmp(&(b.epsilon - eps).abs()))
            .expect("non-empty frontier")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "feasible", "v_r", "v_c"])?;
        for p in &self.points {
            w.write_record([
                format_g(p.epsilon),
                p.feasible.to_string(),
                format_g(p.v_r),
                format_g(p.v_c),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ConditionedPolicy<f64> for Frontier {
    fn n_actions(&self) -> usize {
        Policy::n_actions(&self.points[0].policy)
    }

    fn fill_probs_at(&self, obs: usize, epsilon: f64, out: &mut [f64]) {
        out.copy_from_slice(self.nearest(epsilon).policy.row(obs));
    }
}

/// Everything one seed produces.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: MetricsRecord<f64>,
    /// One JSON object per training iteration.
    pub log: Vec<Value>,
    pub frontier: Option<Frontier>,
}

fn ccpo_log_line(seed: u64, l: &IterationLog<f64>) -> Value {
    let thresholds: Vec<Value> = l
        .thresholds
        .iter()
        .map(|t| {
            json!({
                "epsilon": t.epsilon,
                "eta": t.eta,
                "lambda": t.lambda,
                "expected_cost": t.expected_cost,
                "expected_reward": t.expected_reward,
                "kl": t.kl,
                "feasible": t.feasible,
                "slater_violated": t.slater_violated,
                "mstep_kl": t.mstep_kl,
                "elbo": t.elbo,
            })
        })
        .collect();
    json!({
        "seed": seed,
        "iteration": l.iteration,
        "phase": l.phase.as_str(),
        "critic_loss_r": l.critic_loss.0,
        "critic_loss_c": l.critic_loss.1,
        "behavior_cost": l.behavior_cost,
        "elbo_exact": l.elbo_exact,
        "thresholds": thresholds,
    })
}

fn lagrangian_log_line(seed: u64, l: &LagrangianLog<f64>) -> Value {
    json!({
        "seed": seed,
        "iteration": l.iteration,
        "critic_loss_r": l.critic_loss.0,
        "critic_loss_c": l.critic_loss.1,
        "behavior_cost": l.behavior_cost,
        "cost_estimates": l.cost_estimates,
        "lambdas": l.lambdas,
    })
}

fn eval_mode(cfg: &ExperimentConfig) -> EvalMode {
    match cfg.eval {
        EvalChoice::Exact => EvalMode::Exact,
        EvalChoice::MonteCarlo => EvalMode::MonteCarlo,
        EvalChoice::Auto if cfg.is_tabular() => EvalMode::Exact,
        EvalChoice::Auto => EvalMode::MonteCarlo,
    }
}

fn run_on<E>(env: &E, cfg: &ExperimentConfig, seed: u64) -> ccpo_core::Result<SeedRun>
where
    E: Environment<f64> + ExactModel<f64> + Sync,
{
    let conditions = cfg.conditions();
    let horizon = cfg.train.horizon;
    let mode = eval_mode(cfg);
    let eval = |pi: &dyn ConditionedPolicy<f64>| {
        evaluate(env, pi, conditions, cfg.eval_episodes, horizon, seed, mode)
    };
    let (metrics, log, frontier) = match cfg.algorithm {
        Algorithm::Ccpo => {
            let out = train(env, &cfg.train_config(seed))?;
            let log = out.log.iter().map(|l| ccpo_log_line(seed, l)).collect();
            (eval(&out.policy)?, log, None)
        }
        Algorithm::Lagrangian => {
            let out = train_lagrangian(env, &cfg.lagrangian_config(seed))?;
            let log = out
                .log
                .iter()
                .map(|l| lagrangian_log_line(seed, l))
                .collect();
            (eval(&out.agent)?, log, None)
        }
        Algorithm::Combo => {
            let bank = match env.exact_model() {
                Some(m) => SingleThresholdPolicyBank::from_lp(m, conditions.behavior())?,
                None => SingleThresholdPolicyBank::from_single_cvi(
                    env,
                    &cfg.train_config(seed),
                    conditions.behavior(),
                )?,
            };
            (eval(&bank)?, Vec::new(), None)
        }
        Algorithm::Oracle => {
            let model = env.exact_model().ok_or_else(|| {
                ccpo_core::Error::Config(
                    "key `algorithm` is `oracle` but the task has no tabular model".into(),
                )
            })?;
            let frontier = Frontier::solve(model, conditions.grid())?;
            (eval(&frontier)?, Vec::new(), Some(frontier))
        }
    };
    Ok(SeedRun {
        seed,
        metrics,
        log,
        frontier,
    })
}

/// Trains and evaluates one seed in memory.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, CliError> {
    let env = cfg.env.build()?;
    let r = match &env {
        BuiltEnv::Tabular(m) => run_on(m, cfg, seed),
        BuiltEnv::PointMass(p) => run_on(p, cfg, seed),
    };
    r.map_err(|e| match e {
        ccpo_core::Error::Config(m) => CliError::Config(m),
        other => CliError::Runtime(format!(
            "{} on {} (seed {seed}): {other}",
            cfg.algorithm.as_str(),
            cfg.env.task_name()
        )),
    })
}

pub fn write_metrics_csv<W: Write>(
    task: &str,
    runs: &[&MetricsRecord<f64>],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for rec in runs {
        for t in &rec.per_threshold {
            w.write_record([
                task.to_string(),
                rec.seed.to_string(),
                format_g(t.epsilon),
                t.is_behavior.to_string(),
                format_g(t.reward_mean),
                format_g(t.reward_std),
                format_g(t.cv_mean),
                format_g(t.cv_std),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn opt_g(x: Option<f64>) -> String {
    x.map(format_g).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(
    task: &str,
    algorithm: &str,
    runs: &[&MetricsRecord<f64>],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "task",
        "algorithm",
        "seed",
        "episodes",
        "avg_r",
        "avg_cv",
        "avg_r_g",
        "avg_cv_g",
    ])?;
    for rec in runs {
        w.write_record([
            task.to_string(),
            algorithm.to_string(),
            rec.seed.to_string(),
            rec.episodes.to_string(),
            format_g(rec.avg_r),
            format_g(rec.avg_cv),
            opt_g(rec.avg_r_g),
            opt_g(rec.avg_cv_g),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl(path: &Path, lines: &[Value]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut f, l)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("writing {}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("writing {}: {e}", path.display()))
}

fn write_csv_file(
    path: &Path,
    f: impl FnOnce(fs::File) -> csv::Result<()>,
) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    f(file).map_err(csv_err(path))
}

/// Files written by [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub runs: Vec<SeedRun>,
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub log: PathBuf,
}

/// Runs every configured seed on up to `parallel` workers. Each seed writes
/// its own `metrics_seed{n}.csv` and `iterations_seed{n}.jsonl`; the merged
/// `metrics.csv`, `iterations.jsonl` and `summary.csv` follow the seed
/// order of the config.
pub fn cmd_run(cfg: &ExperimentConfig, parallel: usize) -> Result<RunOutput, CliError> {
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, cfg.to_text()).map_err(io_err(&config_path))?;
    let task = cfg.env.task_name();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let runs: Vec<SeedRun> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                log::info!("{} on {task}, seed {seed}", cfg.algorithm.as_str());
                let run = run_seed(cfg, seed)?;
                let path = dir.join(format!("metrics_seed{seed}.csv"));
                write_csv_file(&path, |f| write_metrics_csv(task, &[&run.metrics], f))?;
                let path = dir.join(format!("iterations_seed{seed}.jsonl"));
                write_jsonl(&path, &run.log).map_err(io_err(&path))?;
                Ok(run)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let records: Vec<&MetricsRecord<f64>> = runs.iter().map(|r| &r.metrics).collect();
    let metrics = dir.join("metrics.csv");
    write_csv_file(&metrics, |f| write_metrics_csv(task, &records, f))?;
    let summary = dir.join("summary.csv");
    write_csv_file(&summary, |f| {
        write_summary_csv(task, cfg.algorithm.as_str(), &records, f)
    })?;
    let log = dir.join("iterations.jsonl");
    let lines: Vec<Value> = runs.iter().flat_map(|r| r.log.iter().cloned()).collect();
    write_jsonl(&log, &lines).map_err(io_err(&log))?;
    if let Some(frontier) = runs.first().and_then(|r| r.frontier.as_ref()) {
        let path = dir.join("frontier.csv");
        write_csv_file(&path, |f| frontier.write_csv(f))?;
    }
    Ok(RunOutput {
        runs,
        metrics,
        summary,
        log,
    })
}

pub const ORACLE_HEADER: [&str; 8] = [
    "seed",
    "epsilon",
    "feasible",
    "v_r_policy",
    "v_c_policy",
    "v_r_lp",
    "v_c_lp",
    "reward_gap",
];

/// Trains the configured algorithm per seed and compares its exact values
/// with the LP frontier at every grid threshold. Tabular tasks only.
pub fn cmd_oracle_compare(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let model = match cfg.env.build()? {
        BuiltEnv::Tabular(m) => m,
        BuiltEnv::PointMass(_) => {
            return Err(CliError::Config(format!(
                "key `env.task`: oracle-compare needs a tabular task, got `{}`",
                cfg.env.task_name()
            )))
        }
    };
    let frontier = Frontier::solve(&model, cfg.conditions().grid())?;
    let mut exact = cfg.clone();
    exact.eval = EvalChoice::Exact;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&exact, seed))
        .collect::<Result<Vec<_>, CliError>>()?;
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("oracle_compare.csv");
    write_csv_file(&path, |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(ORACLE_HEADER)?;
        for run in &runs {
            for t in &run.metrics.per_threshold {
                let lp = frontier.nearest(t.epsilon);
                w.write_record([
                    run.seed.to_string(),
                    format_g(t.epsilon),
                    lp.feasible.to_string(),
                    format_g(t.reward_mean),
                    format_g(t.discounted_cost_mean),
                    format_g(lp.v_r),
                    format_g(lp.v_c),
                    format_g(lp.v_r - t.reward_mean),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccpo_core::trainer::ThresholdMetrics;

    #[test]
    fn metrics_csv_layout() {
        let t = |eps: f64, b: bool| ThresholdMetrics {
            epsilon: eps,
            is_behavior: b,
            reward_mean: 1.0 / 3.0,
            reward_std: 0.0,
            cv_mean: 2.5,
            cv_std: 0.1,
            cost_mean: 0.0,
            discounted_cost_mean: 0.0,
        };
        let rec = MetricsRecord::from_thresholds(4, 50, vec![t(10.0, false), t(20.0, true)]);
        let mut buf = Vec::new();
        write_metrics_csv("chain", &[&rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "task,seed,epsilon,is_behavior,reward_mean,reward_std,cv_mean,cv_std"
        );
        assert_eq!(lines[1], "chain,4,10,false,0.333333333333,0,2.5,0.1");
        assert_eq!(lines[2], "chain,4,20,true,0.333333333333,0,2.5,0.1");
    }

    #[test]
    fn summary_leaves_missing_aggregates_empty() {
        let rec = MetricsRecord::<f64>::from_thresholds(0, 1, Vec::new());
        let mut buf = Vec::new();
        write_summary_csv("chain", "ccpo", &[&rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,"));
    }
}
