use crate::cmdp::{derive_seed, rng_from_seed, ConditionedPolicy, Environment, TabularPolicy};
use crate::critic::CriticPair;
use crate::cvi::{ParametricPolicy, QSource};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trainer::{
    collect_round, init_critic, train_critic, ExactModel, ReplayBuffer, TrainConfig,
};

/// Policy over the augmented state `[s; ε]` with one multiplier per
/// behavior threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianAgent<T> {
    pub policy: ParametricPolicy<T>,
    /// Weight `τ` of the entropy bonus `τ·H(π(·|s,ε))`.
    pub entropy_coef: T,
    behavior: Vec<T>,
    lambdas: Vec<T>,
}

impl<T: Real> LagrangianAgent<T> {
    pub fn new(policy: ParametricPolicy<T>, behavior: &[T], lambda_init: T) -> Result<Self> {
        if behavior.is_empty() {
            return Err(Error::arg("behavior", "empty behavior threshold set"));
        }
        if !(lambda_init >= T::zero()) {
            return Err(Error::arg("lambda_init", "must be nonnegative"));
        }
        Ok(Self {
            policy,
            entropy_coef: T::zero(),
            behavior: behavior.to_vec(),
            lambdas: vec![lambda_init; behavior.len()],
        })
    }

    pub fn behavior(&self) -> &[T] {
        &self.behavior
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn set_lambda(&mut self, i: usize, lambda: T) -> Result<()> {
        if !(lambda >= T::zero()) {
            return Err(Error::arg("lambda", "must be nonnegative"));
        }
        self.lambdas[i] = lambda;
        Ok(())
    }
}

impl<T: Real> ConditionedPolicy<T> for LagrangianAgent<T> {
    fn n_actions(&self) -> usize {
        self.policy.n_actions()
    }

    fn fill_probs_at(&self, obs: usize, epsilon: T, out: &mut [T]) {
        self.policy.fill_probs_at(obs, epsilon, out);
    }
}

/// Weighted states from partition `behavior_index` and the current cost
/// estimate `V̂_c` there.
#[derive(Debug, Clone, Copy)]
pub struct LagrangianBatch<'a, T> {
    pub behavior_index: usize,
    pub states: &'a [(usize, T)],
    pub cost_estimate: T,
}

/// One expected policy-gradient step on
/// `E_{s~batch}[E_π(Q_r − λ·Q_c) + τ·H(π)]` at `(s, ε_i)`, then
/// `λ ← max(0, λ + lr_lambda·(V̂_c − ε_i))`.
pub fn lagrangian_update<T, Q>(
    agent: &mut LagrangianAgent<T>,
    batch: &LagrangianBatch<'_, T>,
    critic: &Q,
    lr_policy: T,
    lr_lambda: T,
) -> Result<()>
where
    T: Real,
    Q: QSource<T> + ?Sized,
{
    let i = batch.behavior_index;
    let eps = *agent
        .behavior
        .get(i)
        .ok_or_else(|| Error::arg("behavior_index", format!("{i} out of range")))?;
    let lambda = agent.lambdas[i];
    let tau = agent.entropy_coef;
    let na = agent.policy.n_actions();
    let total: T = batch.states.iter().map(|(_, w)| *w).sum();
    let (mut qr, mut qc, mut g) = (
        vec![T::zero(); na],
        vec![T::zero(); na],
        vec![T::zero(); na],
    );
    if total > T::zero() {
        for (s, w) in batch.states {
            critic.fill_rows(*s, eps, &mut qr, &mut qc);
            let pi = agent.policy.probs_at(*s, eps);
            for a in 0..na {
                g[a] = qr[a] - lambda * qc[a];
            }
            let base: T = pi.iter().zip(&g).map(|(p, a)| *p * *a).sum();
            let logs: Vec<T> = pi
                .iter()
                .map(|p| if *p > T::zero() { p.ln() } else { T::zero() })
                .collect();
            let entropy: T = -pi.iter().zip(&logs).map(|(p, l)| *p * *l).sum::<T>();
            for ((ga, p), l) in g.iter_mut().zip(&pi).zip(&logs) {
                *ga = *p * (*ga - base) - tau * *p * (*l + entropy);
            }
            agent
                .policy
                .ascend_logits(*s, eps, &g, lr_policy * *w / total);
        }
    }
    agent.lambdas[i] = (lambda + lr_lambda * (batch.cost_estimate - eps)).max(T::zero());
    Ok(())
}

/// Reads the critic at the raw behavior coefficients `z_i` instead of the
/// polynomial fit.
struct BehaviorCritic<'a, T> {
    critic: &'a CriticPair<T>,
    behavior: &'a [T],
}

impl<T: Real> QSource<T> for BehaviorCritic<'_, T> {
    fn n_actions(&self) -> usize {
        self.critic.reward.psi().n_actions()
    }

    fn fill_rows(&self, s: usize, epsilon: T, q_r: &mut [T], q_c: &mut [T]) {
        let i = self
            .behavior
            .iter()
            .position(|b| *b == epsilon)
            .expect("behavior threshold");
        for a in 0..q_r.len() {
            q_r[a] = self.critic.reward.q_behavior(s, a, i);
            q_c[a] = self.critic.cost.q_behavior(s, a, i);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianConfig<T> {
    /// Collection, critic and iteration settings; trust-region and
    /// fine-tuning fields are unused.
    pub base: TrainConfig<T>,
    pub lr_policy: T,
    pub lr_lambda: T,
    pub lambda_init: T,
    pub entropy_coef: T,
    /// Policy steps per iteration; the multipliers move once, on the last.
    pub policy_steps: usize,
}

impl<T: Real> LagrangianConfig<T> {
    pub fn new(base: TrainConfig<T>) -> Self {
        Self {
            base,
            lr_policy: T::lit(1.0),
            lr_lambda: T::lit(0.01),
            lambda_init: T::zero(),
            entropy_coef: T::lit(1.0),
            policy_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianLog<T> {
    pub iteration: usize,
    pub critic_loss: (T, T),
    pub behavior_cost: Vec<T>,
    /// `V̂_c` per behavior threshold before the update.
    pub cost_estimates: Vec<T>,
    /// Multipliers after the update.
    pub lambdas: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianOutput<T> {
    pub agent: LagrangianAgent<T>,
    pub critic: CriticPair<T>,
    pub log: Vec<LagrangianLog<T>>,
}

const LAG_STREAM: u64 = 0x1A6;

/// Collects under `Ẽ`, trains the critic, then takes `policy_steps`
/// Lagrangian updates per behavior threshold each iteration.
pub fn train_lagrangian<T, E>(env: &E, cfg: &LagrangianConfig<T>) -> Result<LagrangianOutput<T>>
where
    T: Real,
    E: Environment<T> + ExactModel<T>,
{
    let base = &cfg.base;
    base.validate()?;
    let (n_obs, na) = (env.n_obs(), env.n_actions());
    let gamma = env.gamma();
    let conditions = &base.conditions;
    let (eps_l, eps_h) = conditions.bounds();
    let seed = derive_seed(base.seed, &[LAG_STREAM]);
    let mut critic = init_critic(n_obs, na, conditions, &base.critic, seed)?;
    let policy = ParametricPolicy::uniform(n_obs, na, base.policy_degree, eps_l, eps_h)?;
    let mut agent = LagrangianAgent::new(policy, conditions.behavior(), cfg.lambda_init)?;
    agent.entropy_coef = cfg.entropy_coef;
    let mut buffer = ReplayBuffer::new(conditions.behavior(), base.buffer_capacity)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    let uniform = TabularPolicy::uniform(n_obs, na);
    let behavior = conditions.behavior().to_vec();
    let total = base.warmup_iterations + base.iterations;
    let mut log = Vec::with_capacity(total);
    for it in 0..total {
        let warm = it < base.warmup_iterations;
        let (behavior_cost, critic_loss) = if warm {
            let c = collect_round(
                &mut buffer,
                env,
                &uniform,
                base.episodes_per_condition,
                base.horizon,
                seed,
                it as u64,
            )?;
            (
                c,
                train_critic(
                    &mut critic,
                    &buffer,
                    &uniform,
                    gamma,
                    &base.critic,
                    &mut rng,
                )?,
            )
        } else {
            let c = collect_round(
                &mut buffer,
                env,
                &agent,
                base.episodes_per_condition,
                base.horizon,
                seed,
                it as u64,
            )?;
            (
                c,
                train_critic(&mut critic, &buffer, &agent, gamma, &base.critic, &mut rng)?,
            )
        };
        let mut cost_estimates = Vec::new();
        if !warm {
            let q = BehaviorCritic {
                critic: &critic,
                behavior: &behavior,
            };
            let (mut qr, mut qc) = (vec![T::zero(); na], vec![T::zero(); na]);
            let parts: Vec<Vec<(usize, T)>> = (0..behavior.len())
                .map(|i| buffer.state_weights(Some(i), n_obs))
                .collect();
            for (i, &eps) in behavior.iter().enumerate() {
                let mut v_c = T::zero();
                for (s, w) in &parts[i] {
                    q.fill_rows(*s, eps, &mut qr, &mut qc);
                    let pi = agent.probs_at(*s, eps);
                    v_c += *w * pi.iter().zip(&qc).map(|(p, c)| *p * *c).sum::<T>();
                }
                cost_estimates.push(v_c);
            }
            let steps = cfg.policy_steps.max(1);
            for k in 0..steps {
                let lr_lambda = if k + 1 == steps {
                    cfg.lr_lambda
                } else {
                    T::zero()
                };
                for (i, &eps) in behavior.iter().enumerate() {
                    let batch = LagrangianBatch {
                        behavior_index: i,
                        states: &parts[i],
                        cost_estimate: cost_estimates[i],
                    };
                    lagrangian_update(&mut agent, &batch, &q, cfg.lr_policy, lr_lambda).map_err(
                        |e| Error::Training {
                            iteration: it,
                            epsilon: eps.as_f64(),
                            source: Box::new(e),
                        },
                    )?;
                }
            }
        }
        log.push(LagrangianLog {
            iteration: it,
            critic_loss,
            behavior_cost,
            cost_estimates,
            lambdas: agent.lambdas().to_vec(),
        });
    }
    Ok(LagrangianOutput { agent, critic, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>, Vec<f64>);

    impl QSource<f64> for Fixed {
        fn n_actions(&self) -> usize {
            self.0.len()
        }

        fn fill_rows(&self, _s: usize, _eps: f64, q_r: &mut [f64], q_c: &mut [f64]) {
            q_r.copy_from_slice(&self.0);
            q_c.copy_from_slice(&self.1);
        }
    }

    fn agent(lambda: f64) -> LagrangianAgent<f64> {
        let pi = ParametricPolicy::uniform(2, 2, 1, 10.0, 70.0).unwrap();
        LagrangianAgent::new(pi, &[20.0, 40.0], lambda).unwrap()
    }

    fn update(a: &mut LagrangianAgent<f64>, v_c: f64, lr_lambda: f64) {
        let states = [(0, 1.0)];
        let batch = LagrangianBatch {
            behavior_index: 0,
            states: &states,
            cost_estimate: v_c,
        };
        lagrangian_update(
            a,
            &batch,
            &Fixed(vec![1.0, 3.0], vec![0.0, 1.0]),
            0.5,
            lr_lambda,
        )
        .unwrap();
    }

    #[test]
    fn multiplier_examples() {
        let mut a = agent(0.7);
        update(&mut a, 20.0, 0.1);
        assert_eq!(a.lambdas()[0], 0.7);
        let mut a = agent(0.0);
        update(&mut a, 15.0, 0.1);
        assert_eq!(a.lambdas()[0], 0.0);
        let mut a = agent(1.0);
        update(&mut a, 22.0, 0.1);
        assert!((a.lambdas()[0] - 1.2).abs() < 1e-15);
        assert_eq!(a.lambdas()[1], 1.0);
    }

    #[test]
    fn policy_moves_toward_lagrangian_advantage() {
        // λ = 1: advantages (1, 2), so action 1 gains mass at (s=0, ε=20) only
        let mut a = agent(1.0);
        update(&mut a, 20.0, 0.0);
        let p = a.probs_at(0, 20.0);
        assert!(p[1] > 0.5);
        assert_eq!(a.probs_at(1, 20.0), vec![0.5, 0.5]);
        // λ = 3: advantages (1, 0)
        let mut a = agent(3.0);
        update(&mut a, 20.0, 0.0);
        assert!(a.probs_at(0, 20.0)[1] < 0.5);
    }

    #[test]
    fn entropy_bonus_resists_saturation() {
        let run = |tau: f64| {
            let mut a = agent(0.0);
            a.entropy_coef = tau;
            for _ in 0..200 {
                update(&mut a, 20.0, 0.0);
            }
            a.probs_at(0, 20.0)[1]
        };
        let (plain, regularized) = (run(0.0), run(1.0));
        assert!(plain > 0.99);
        assert!(regularized < plain && regularized > 0.5);
    }

    #[test]
    fn rejects_negative_multiplier() {
        let pi = ParametricPolicy::uniform(1, 2, 0, 0.0, 1.0).unwrap();
        assert!(LagrangianAgent::new(pi.clone(), &[0.5], -1.0).is_err());
        let mut a = LagrangianAgent::new(pi, &[0.5], 0.0).unwrap();
        assert!(a.set_lambda(0, -0.1).is_err());
    }
}
