use crate::cmdp::{
    derive_seed, discounted_return, episode_sum, rng_from_seed, rollout_with, ConditionedPolicy,
    Environment, Signal, TabularPolicy,
};
use crate::error::{Error, Result};
use crate::oracle::expected_return;
use crate::scalar::Real;

use super::buffer::BehaviorConditionSet;
use super::ExactModel;

/// `max{0, Σc − ε}` for an undiscounted episode cost sum.
pub fn cost_violation<T: Real>(episode_cost: T, epsilon: T) -> T {
    (episode_cost - epsilon).max(T::zero())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Seeded rollouts; episodes share random streams across thresholds.
    MonteCarlo,
    /// Exact discounted returns from the oracle (tabular models only).
    Exact,
}

/// Statistics at one evaluation threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics<T> {
    pub epsilon: T,
    pub is_behavior: bool,
    pub reward_mean: T,
    pub reward_std: T,
    pub cv_mean: T,
    pub cv_std: T,
    /// Mean undiscounted episode cost.
    pub cost_mean: T,
    /// Mean discounted episode cost, the quantity the training constraint bounds.
    pub discounted_cost_mean: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord<T> {
    pub seed: u64,
    pub episodes: usize,
    pub per_threshold: Vec<ThresholdMetrics<T>>,
    pub avg_r: T,
    pub avg_cv: T,
    /// Averages over grid points outside `Ẽ`; `None` when there are none.
    pub avg_r_g: Option<T>,
    pub avg_cv_g: Option<T>,
}

impl<T: Real> MetricsRecord<T> {
    pub fn from_thresholds(
        seed: u64,
        episodes: usize,
        per_threshold: Vec<ThresholdMetrics<T>>,
    ) -> Self {
        let mean = |it: &mut dyn Iterator<Item = T>| -> Option<T> {
            let (n, s) = it.fold((0usize, T::zero()), |(n, s), x| (n + 1, s + x));
            (n > 0).then(|| s / T::from_usize_lossy(n))
        };
        let all = || per_threshold.iter();
        let gen = || per_threshold.iter().filter(|m| !m.is_behavior);
        Self {
            seed,
            episodes,
            avg_r: mean(&mut all().map(|m| m.reward_mean)).unwrap_or(T::nan()),
            avg_cv: mean(&mut all().map(|m| m.cv_mean)).unwrap_or(T::nan()),
            avg_r_g: mean(&mut gen().map(|m| m.reward_mean)),
            avg_cv_g: mean(&mut gen().map(|m| m.cv_mean)),
            per_threshold,
        }
    }
}

fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let var = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

const EVAL_STREAM: u64 = 0xE7A1;

/// Per-threshold reward and cost-violation statistics of `pi` on the grid.
pub fn evaluate<T, E, P>(
    env: &E,
    pi: &P,
    conditions: &BehaviorConditionSet<T>,
    episodes: usize,
    horizon: usize,
    seed: u64,
    mode: EvalMode,
) -> Result<MetricsRecord<T>>
where
    T: Real,
    E: Environment<T> + ExactModel<T>,
    P: ConditionedPolicy<T> + ?Sized,
{
    let mut per = Vec::with_capacity(conditions.grid().len());
    for &eps in conditions.grid() {
        let is_behavior = conditions.is_behavior(eps);
        let m = match mode {
            EvalMode::Exact => {
                let model = env
                    .exact_model()
                    .ok_or_else(|| Error::arg("mode", "exact evaluation needs a tabular model"))?;
                let na = model.n_actions();
                let mut probs = vec![T::zero(); model.n_states() * na];
                for s in 0..model.n_states() {
                    pi.fill_probs_at(s, eps, &mut probs[s * na..(s + 1) * na]);
                }
                let table = TabularPolicy::from_flat(na, probs);
                let v_r = expected_return(model, &table, Signal::Reward)?;
                let v_c = expected_return(model, &table, Signal::Cost)?;
                ThresholdMetrics {
                    epsilon: eps,
                    is_behavior,
                    reward_mean: v_r,
                    reward_std: T::zero(),
                    cv_mean: cost_violation(v_c, eps),
                    cv_std: T::zero(),
                    cost_mean: v_c,
                    discounted_cost_mean: v_c,
                }
            }
            EvalMode::MonteCarlo => {
                if episodes == 0 {
                    return Err(Error::arg("episodes", "must be positive"));
                }
                let g = env.gamma();
                let mut rewards = Vec::with_capacity(episodes);
                let mut cvs = Vec::with_capacity(episodes);
                let mut costs = Vec::with_capacity(episodes);
                let mut disc = Vec::with_capacity(episodes);
                let policy = AtEps { pi, eps };
                for e in 0..episodes {
                    let mut rng = rng_from_seed(derive_seed(seed, &[EVAL_STREAM, e as u64]));
                    let traj = rollout_with(env, &policy, horizon, eps, &mut rng)?;
                    let c = episode_sum(&traj, Signal::Cost);
                    rewards.push(episode_sum(&traj, Signal::Reward));
                    cvs.push(cost_violation(c, eps));
                    costs.push(c);
                    disc.push(discounted_return(&traj, Signal::Cost, g));
                }
                let (reward_mean, reward_std) = mean_std(&rewards);
                let (cv_mean, cv_std) = mean_std(&cvs);
                ThresholdMetrics {
                    epsilon: eps,
                    is_behavior,
                    reward_mean,
                    reward_std,
                    cv_mean,
                    cv_std,
                    cost_mean: mean_std(&costs).0,
                    discounted_cost_mean: mean_std(&disc).0,
                }
            }
        };
        per.push(m);
    }
    Ok(MetricsRecord::from_thresholds(seed, episodes, per))
}

struct AtEps<'a, T, P: ?Sized> {
    pi: &'a P,
    eps: T,
}

impl<T: Real, P: ConditionedPolicy<T> + ?Sized> crate::cmdp::Policy<T> for AtEps<'_, T, P> {
    fn n_actions(&self) -> usize {
        self.pi.n_actions()
    }

    fn fill_probs(&self, obs: usize, out: &mut [T]) {
        self.pi.fill_probs_at(obs, self.eps, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::ChainSpec;

    #[test]
    fn violation_formula() {
        assert_eq!(cost_violation(25.0, 20.0), 5.0);
        assert_eq!(cost_violation(15.0, 20.0), 0.0);
    }

    #[test]
    fn eps_independent_policy() {
        let m = ChainSpec::<f64>::graded(8, 4.0, 12.0, 0.9).build().unwrap();
        let pi = TabularPolicy::<f64>::uniform(8, 2);
        let set = BehaviorConditionSet::standard();
        let rec = evaluate(&m, &pi, &set, 40, 10, 3, EvalMode::MonteCarlo).unwrap();
        let r0 = rec.per_threshold[0].reward_mean;
        assert!(rec.per_threshold.iter().all(|t| t.reward_mean == r0));
        assert!((rec.avg_r - r0).abs() < 1e-12);
        assert!(rec
            .per_threshold
            .windows(2)
            .all(|w| w[1].cv_mean <= w[0].cv_mean));
        assert!(rec.avg_cv_g.is_some());
        let behavior_only =
            BehaviorConditionSet::new(vec![20.0, 40.0], vec![20.0, 40.0], 10.0, 70.0).unwrap();
        let rec = evaluate(&m, &pi, &behavior_only, 5, 10, 3, EvalMode::Exact).unwrap();
        assert_eq!(rec.avg_r_g, None);
        assert_eq!(rec.avg_cv_g, None);
        assert!((rec.per_threshold[0].cost_mean - 40.0).abs() < 1e-9);
    }
}
