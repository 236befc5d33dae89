//! The CCPO loop: behavior-condition collection, versatile critic training,
//! per-threshold E-steps and the versatile M-step, plus evaluation.

mod audit;
mod buffer;
mod metrics;

pub use audit::{safety_bound_audit, SafetyAudit, SafetyPoint};
pub use buffer::{BehaviorConditionSet, ReplayBuffer};
pub use metrics::{cost_violation, evaluate, EvalMode, MetricsRecord, ThresholdMetrics};

use rand::Rng;

use crate::cmdp::{
    derive_seed, discounted_return, rng_from_seed, rollout_with, CmdpModel, ConditionedPolicy,
    Environment, PointMassEnv, SimRng, TabularPolicy,
};
use crate::critic::{Batch, CriticPair, FeatureMap, FitMode, ThresholdEmbedding, VersatileQ};
use crate::cvi::{
    elbo_exact, estep, mstep, EStepOutput, MStepConfig, MStepTarget, ParametricPolicy, QSource,
    TrustRegionConfig, VariationalPolicy,
};
use crate::error::{Error, Result};
use crate::scalar::{kl_divergence, Real};

/// Access to an exact tabular model, when the environment has one.
pub trait ExactModel<T: Real> {
    fn exact_model(&self) -> Option<&CmdpModel<T>>;
}

impl<T: Real> ExactModel<T> for CmdpModel<T> {
    fn exact_model(&self) -> Option<&CmdpModel<T>> {
        Some(self)
    }
}

impl<T: Real> ExactModel<T> for PointMassEnv<T> {
    fn exact_model(&self) -> Option<&CmdpModel<T>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind<T> {
    /// `ψ(s,a) = e_{(s,a)}`, `M = |S|·|A|`.
    OneHot,
    /// Learnable table of dimension `dim`, initialized uniformly in `[−K, K]`.
    Random { dim: usize, k_bound: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticConfig<T> {
    pub features: FeatureKind<T>,
    /// Degree `p` of the threshold polynomial.
    pub degree: usize,
    /// MSBE learning rate `α_c`.
    pub learning_rate: T,
    /// Polyak coefficient `ρ`.
    pub polyak: T,
    /// MSBE steps per iteration.
    pub steps: usize,
    /// Records sampled per partition and step; 0 uses the whole partition.
    pub batch_size: usize,
    /// Diagonal preconditioning of the MSBE step (see
    /// [`VersatileQ::set_preconditioned`]).
    pub preconditioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub conditions: BehaviorConditionSet<T>,
    pub trust: TrustRegionConfig<T>,
    /// M-step penalty `ν`; `None` uses `γ/(1−γ)`.
    pub penalty: Option<T>,
    pub critic: CriticConfig<T>,
    pub policy_degree: usize,
    /// Iterations collecting with the uniform policy and training only the critic.
    pub warmup_iterations: usize,
    /// Iterations with E-steps at the behavior thresholds.
    pub iterations: usize,
    /// Iterations with E-steps at thresholds sampled uniformly over the grid range.
    pub finetune_iterations: usize,
    pub finetune_samples: usize,
    pub episodes_per_condition: usize,
    pub horizon: usize,
    /// Per-partition replay capacity.
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl<T: Real> TrainConfig<T> {
    pub fn new(conditions: BehaviorConditionSet<T>, horizon: usize, seed: u64) -> Self {
        Self {
            conditions,
            trust: TrustRegionConfig {
                kappa: T::lit(0.1),
                kl_m: T::lit(0.05),
                alpha_temp: T::lit(0.1),
            },
            penalty: None,
            critic: CriticConfig {
                features: FeatureKind::OneHot,
                degree: 1,
                learning_rate: T::lit(2.0),
                polyak: T::lit(0.9),
                steps: 100,
                batch_size: 0,
                preconditioned: false,
            },
            policy_degree: 1,
            warmup_iterations: 5,
            iterations: 40,
            finetune_iterations: 20,
            finetune_samples: 8,
            episodes_per_condition: 10,
            horizon,
            buffer_capacity: 2000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        TrustRegionConfig::new(self.trust.kappa, self.trust.kl_m, self.trust.alpha_temp)?;
        let c = &self.critic;
        if !(c.polyak >= T::zero() && c.polyak <= T::one()) {
            return Err(Error::arg("polyak", "must lie in [0, 1]"));
        }
        if !(c.learning_rate >= T::zero()) {
            return Err(Error::arg("learning_rate", "must be nonnegative"));
        }
        if c.degree + 1 > self.conditions.behavior().len() {
            return Err(Error::arg(
                "degree",
                "needs at least p + 1 behavior thresholds",
            ));
        }
        if self.episodes_per_condition == 0 || self.horizon == 0 {
            return Err(Error::arg(
                "episodes_per_condition",
                "episodes and horizon must be positive",
            ));
        }
        if self.finetune_iterations > 0 && self.finetune_samples == 0 {
            return Err(Error::arg(
                "finetune_samples",
                "must be positive when fine-tuning",
            ));
        }
        Ok(())
    }
}

/// Fills a replay buffer with `episodes_per_condition` episodes of
/// `π(·|ε̃)` per behavior threshold.
pub fn collect<T, E, P>(
    env: &E,
    pi: &P,
    conditions: &BehaviorConditionSet<T>,
    episodes_per_condition: usize,
    horizon: usize,
    seed: u64,
) -> Result<ReplayBuffer<T>>
where
    T: Real,
    E: Environment<T>,
    P: ConditionedPolicy<T>,
{
    let cap = (episodes_per_condition * horizon).max(1);
    let mut buffer = ReplayBuffer::new(conditions.behavior(), cap)?;
    collect_round(
        &mut buffer,
        env,
        pi,
        episodes_per_condition,
        horizon,
        seed,
        0,
    )?;
    Ok(buffer)
}

/// Collects one round and returns the mean discounted episode cost per
/// behavior threshold.
pub(crate) fn collect_round<T, E, P>(
    buffer: &mut ReplayBuffer<T>,
    env: &E,
    pi: &P,
    episodes: usize,
    horizon: usize,
    seed: u64,
    round: u64,
) -> Result<Vec<T>>
where
    T: Real,
    E: Environment<T>,
    P: ConditionedPolicy<T>,
{
    let behavior = buffer.behavior().to_vec();
    let mut costs = Vec::with_capacity(behavior.len());
    for (i, &eps) in behavior.iter().enumerate() {
        let policy = pi.at(eps);
        let mut total = T::zero();
        for e in 0..episodes {
            let mut rng = rng_from_seed(derive_seed(
                seed,
                &[COLLECT_STREAM, round, i as u64, e as u64],
            ));
            let traj = rollout_with(env, &policy, horizon, eps, &mut rng)?;
            total += discounted_return(&traj, crate::cmdp::Signal::Cost, env.gamma());
            buffer.extend(traj)?;
        }
        costs.push(total / T::from_usize_lossy(episodes.max(1)));
    }
    Ok(costs)
}

const COLLECT_STREAM: u64 = 0xC011;
const CRITIC_STREAM: u64 = 0xC217;
const SAMPLE_STREAM: u64 = 0x5A3F;

pub(crate) fn init_critic<T: Real>(
    n_obs: usize,
    n_actions: usize,
    conditions: &BehaviorConditionSet<T>,
    cfg: &CriticConfig<T>,
    seed: u64,
) -> Result<CriticPair<T>> {
    let (eps_l, eps_h) = conditions.bounds();
    let make = |tag: u64| -> Result<VersatileQ<T>> {
        let psi = match cfg.features {
            FeatureKind::OneHot => FeatureMap::one_hot(n_obs, n_actions),
            FeatureKind::Random { dim, k_bound } => FeatureMap::random(
                n_obs,
                n_actions,
                dim,
                k_bound,
                derive_seed(seed, &[CRITIC_STREAM, tag]),
            ),
        };
        let z = ThresholdEmbedding::new(psi.dim(), cfg.degree, eps_l, eps_h)?;
        let mut q = VersatileQ::new(psi, z, conditions.behavior().to_vec(), FitMode::TwoStage)?;
        q.set_preconditioned(cfg.preconditioned);
        Ok(q)
    };
    Ok(CriticPair {
        reward: make(0)?,
        cost: make(1)?,
    })
}

/// `cfg.steps` MSBE steps with polyak averaging after each, then the
/// polynomial refit. Returns the losses of the first step.
pub(crate) fn train_critic<T, P>(
    critic: &mut CriticPair<T>,
    buffer: &ReplayBuffer<T>,
    policy: &P,
    gamma: T,
    cfg: &CriticConfig<T>,
    rng: &mut SimRng,
) -> Result<(T, T)>
where
    T: Real,
    P: ConditionedPolicy<T> + ?Sized,
{
    let n = buffer.n_partitions();
    let policy = Tabulated::new(policy, buffer.behavior(), critic.reward.psi().n_states());
    let full: Vec<Vec<_>> = if cfg.batch_size == 0 {
        (0..n)
            .map(|i| buffer.partition(i).copied().collect())
            .collect()
    } else {
        Vec::new()
    };
    let mut first = None;
    for _ in 0..cfg.steps {
        let sampled: Vec<Vec<_>> = if cfg.batch_size == 0 {
            Vec::new()
        } else {
            (0..n)
                .filter(|i| buffer.partition_len(*i) > 0)
                .map(|i| buffer.sample(i, cfg.batch_size, rng))
                .collect::<Result<_>>()?
        };
        let batches: Vec<Batch<'_, T>> = if cfg.batch_size == 0 {
            full.iter()
                .enumerate()
                .map(|(i, s)| Batch::uniform(i, s))
                .collect()
        } else {
            sampled
                .iter()
                .map(|s| Batch::uniform(index_of(buffer, s[0].behavior_threshold), s))
                .collect()
        };
        let loss = critic.msbe_update(&batches, &policy, gamma, cfg.learning_rate)?;
        first.get_or_insert(loss);
        critic.polyak_update(cfg.polyak)?;
    }
    critic.refit()?;
    Ok(first.unwrap_or((T::zero(), T::zero())))
}

/// A conditioned policy frozen into tables at a fixed set of thresholds.
struct Tabulated<T> {
    thresholds: Vec<T>,
    tables: Vec<TabularPolicy<T>>,
}

impl<T: Real> Tabulated<T> {
    fn new<P: ConditionedPolicy<T> + ?Sized>(pi: &P, thresholds: &[T], n_obs: usize) -> Self {
        let na = pi.n_actions();
        let tables = thresholds
            .iter()
            .map(|&e| {
                let mut probs = vec![T::zero(); n_obs * na];
                for s in 0..n_obs {
                    pi.fill_probs_at(s, e, &mut probs[s * na..(s + 1) * na]);
                }
                TabularPolicy::from_flat(na, probs)
            })
            .collect();
        Self {
            thresholds: thresholds.to_vec(),
            tables,
        }
    }
}

impl<T: Real> ConditionedPolicy<T> for Tabulated<T> {
    fn n_actions(&self) -> usize {
        crate::cmdp::Policy::n_actions(&self.tables[0])
    }

    fn fill_probs_at(&self, obs: usize, epsilon: T, out: &mut [T]) {
        let i = self
            .thresholds
            .iter()
            .position(|t| *t == epsilon)
            .expect("tabulated threshold");
        out.copy_from_slice(self.tables[i].row(obs));
    }
}

fn index_of<T: Real>(buffer: &ReplayBuffer<T>, eps: T) -> usize {
    buffer
        .behavior()
        .iter()
        .position(|b| *b == eps)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Main,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Main => "main",
            Phase::Finetune => "finetune",
        }
    }
}

/// E-step and M-step diagnostics at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdLog<T> {
    pub epsilon: T,
    pub eta: T,
    pub lambda: T,
    /// `E_ρ E_q[Q̂_c]`.
    pub expected_cost: T,
    pub expected_reward: T,
    /// `E_ρ KL(q ‖ π_old)`.
    pub kl: T,
    pub feasible: bool,
    pub slater_violated: bool,
    /// `E_ρ KL(π_old ‖ π_new)`.
    pub mstep_kl: T,
    /// `J(q, θ_new | ε)`.
    pub elbo: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog<T> {
    pub iteration: usize,
    pub phase: Phase,
    /// MSBE losses `(L(φ_r), L(φ_c))` before the first critic step.
    pub critic_loss: (T, T),
    /// Mean discounted episode cost of this round's data, per behavior threshold.
    pub behavior_cost: Vec<T>,
    pub thresholds: Vec<ThresholdLog<T>>,
    /// `true` when the ELBO is computed exactly on a tabular model, `false`
    /// when estimated from the critic on the E-step states.
    pub elbo_exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput<T> {
    pub critic: CriticPair<T>,
    pub policy: ParametricPolicy<T>,
    pub log: Vec<IterationLog<T>>,
}

/// Critic-based ELBO estimate `E_ρ[E_q Q̂_r − α·KL(q ‖ π)]`.
fn elbo_from_critic<T: Real>(
    states: &[(usize, T)],
    q: &VariationalPolicy<T>,
    pi: &ParametricPolicy<T>,
    critic: &CriticPair<T>,
    alpha: T,
) -> T {
    let na = pi.n_actions();
    let (mut qr, mut qc) = (vec![T::zero(); na], vec![T::zero(); na]);
    let total: T = states.iter().map(|(_, w)| *w).sum();
    let mut acc = T::zero();
    for (s, w) in states {
        critic.fill_rows(*s, q.epsilon, &mut qr, &mut qc);
        let row = q.row(*s);
        let r: T = row.iter().zip(&qr).map(|(p, v)| *p * *v).sum();
        acc += *w * (r - alpha * kl_divergence(row, &pi.probs_at(*s, q.epsilon)));
    }
    acc / total
}

/// Runs the full CCPO loop. Zero iterations return the initial critic and
/// the uniform policy.
pub fn train<T, E>(env: &E, cfg: &TrainConfig<T>) -> Result<TrainOutput<T>>
where
    T: Real,
    E: Environment<T> + ExactModel<T>,
{
    cfg.validate()?;
    let (n_obs, na) = (env.n_obs(), env.n_actions());
    let gamma = env.gamma();
    let conditions = &cfg.conditions;
    let (eps_l, eps_h) = conditions.bounds();
    let mut critic = init_critic(n_obs, na, conditions, &cfg.critic, cfg.seed)?;
    let mut policy = ParametricPolicy::uniform(n_obs, na, cfg.policy_degree, eps_l, eps_h)?;
    let penalty = cfg.penalty.unwrap_or(gamma / (T::one() - gamma));
    let mcfg = MStepConfig::new(cfg.trust.kl_m, penalty)?;
    let mut buffer = ReplayBuffer::new(conditions.behavior(), cfg.buffer_capacity)?;
    let mut critic_rng = rng_from_seed(derive_seed(cfg.seed, &[CRITIC_STREAM]));
    let mut eps_rng = rng_from_seed(derive_seed(cfg.seed, &[SAMPLE_STREAM]));
    let uniform = TabularPolicy::uniform(n_obs, na);
    let total = cfg.warmup_iterations + cfg.iterations + cfg.finetune_iterations;
    let mut log = Vec::with_capacity(total);
    let model = env.exact_model();
    for it in 0..total {
        let phase = if it < cfg.warmup_iterations {
            Phase::Warmup
        } else if it < cfg.warmup_iterations + cfg.iterations {
            Phase::Main
        } else {
            Phase::Finetune
        };
        let behavior_cost = if phase == Phase::Warmup {
            collect_round(
                &mut buffer,
                env,
                &uniform,
                cfg.episodes_per_condition,
                cfg.horizon,
                cfg.seed,
                it as u64,
            )?
        } else {
            collect_round(
                &mut buffer,
                env,
                &policy,
                cfg.episodes_per_condition,
                cfg.horizon,
                cfg.seed,
                it as u64,
            )?
        };
        let critic_loss = if phase == Phase::Warmup {
            train_critic(
                &mut critic,
                &buffer,
                &uniform,
                gamma,
                &cfg.critic,
                &mut critic_rng,
            )?
        } else {
            train_critic(
                &mut critic,
                &buffer,
                &policy,
                gamma,
                &cfg.critic,
                &mut critic_rng,
            )?
        };
        let mut entry = IterationLog {
            iteration: it,
            phase,
            critic_loss,
            behavior_cost,
            thresholds: Vec::new(),
            elbo_exact: model.is_some(),
        };
        if phase == Phase::Warmup {
            log.push(entry);
            continue;
        }
        let thresholds: Vec<(T, Option<usize>)> = match phase {
            Phase::Main => conditions
                .behavior()
                .iter()
                .enumerate()
                .map(|(i, e)| (*e, Some(i)))
                .collect(),
            _ => {
                let (lo, hi) = conditions.grid_range();
                (0..cfg.finetune_samples)
                    .map(|_| (lo + (hi - lo) * T::lit(eps_rng.random::<f64>()), None))
                    .collect()
            }
        };
        let mut outputs: Vec<(EStepOutput<T>, Vec<(usize, T)>)> =
            Vec::with_capacity(thresholds.len());
        for (eps, part) in &thresholds {
            let states = buffer.state_weights(*part, n_obs);
            let out =
                estep(&states, n_obs, &policy, &critic, *eps, cfg.trust.kappa).map_err(|e| {
                    Error::Training {
                        iteration: it,
                        epsilon: eps.as_f64(),
                        source: Box::new(e),
                    }
                })?;
            outputs.push((out, states));
        }
        let targets: Vec<MStepTarget<'_, T>> = outputs
            .iter()
            .map(|(o, states)| MStepTarget { q: &o.q, states })
            .collect();
        let (next, mrep) = mstep(&policy, &targets, &mcfg).map_err(|e| Error::Training {
            iteration: it,
            epsilon: f64::NAN,
            source: Box::new(e),
        })?;
        for (k, (out, states)) in outputs.iter().enumerate() {
            let r = &out.report;
            let elbo = match model {
                Some(m) => elbo_exact(m, &out.q, &next, cfg.trust.alpha_temp)?,
                None => elbo_from_critic(states, &out.q, &next, &critic, cfg.trust.alpha_temp),
            };
            entry.thresholds.push(ThresholdLog {
                epsilon: r.epsilon,
                eta: r.dual.duals.eta,
                lambda: r.dual.duals.lambda,
                expected_cost: r.expected_cost,
                expected_reward: r.expected_reward,
                kl: r.kl,
                feasible: r.feasible(),
                slater_violated: r.dual.slater_violated,
                mstep_kl: mrep.kl[k],
                elbo,
            });
        }
        policy = next;
        log.push(entry);
    }
    Ok(TrainOutput {
        critic,
        policy,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::ChainSpec;

    fn chain() -> CmdpModel<f64> {
        ChainSpec::graded(8, 4.0, 12.0, 0.9).build().unwrap()
    }

    #[test]
    fn collect_counts_and_tags() {
        let m = chain();
        let set = BehaviorConditionSet::standard();
        let pi = TabularPolicy::uniform(8, 2);
        let buf = collect(&m, &pi, &set, 10, 50, 4).unwrap();
        assert_eq!(buf.len(), 1500);
        assert!(buf.iter().all(|s| set.is_behavior(s.behavior_threshold)));
        assert_eq!(buf, collect(&m, &pi, &set, 10, 50, 4).unwrap());
        assert_ne!(buf, collect(&m, &pi, &set, 10, 50, 5).unwrap());
    }

    #[test]
    fn zero_iterations_return_initial_objects() {
        let m = chain();
        let mut cfg = TrainConfig::new(BehaviorConditionSet::standard(), 10, 1);
        cfg.warmup_iterations = 0;
        cfg.iterations = 0;
        cfg.finetune_iterations = 0;
        let out = train(&m, &cfg).unwrap();
        assert!(out.log.is_empty());
        assert!(out.policy.theta().iter().all(|t| *t == 0.0));
        let init = init_critic(8, 2, &cfg.conditions, &cfg.critic, 1).unwrap();
        assert_eq!(out.critic, init);
    }

    #[test]
    fn rejects_underdetermined_critic() {
        let set = BehaviorConditionSet::new(vec![40.0], vec![40.0], 10.0, 70.0).unwrap();
        let cfg = TrainConfig::<f64>::new(set, 10, 1);
        assert!(cfg.validate().is_err());
    }
}
