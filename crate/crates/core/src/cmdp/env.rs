use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::CmdpModel;
use crate::error::{Error, Result};
use crate::scalar::{is_distribution, Real};

/// Seeded RNG used for every stochastic routine in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream seed for `(seed, parts…)`, mixed with SplitMix64.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(seed), |acc, p| mix(acc ^ mix(*p)))
}

/// Outcome of one environment transition.
#[derive(Debug, Clone)]
pub struct Transition<T, S> {
    pub next: S,
    pub reward: T,
    pub cost: T,
    /// The successor is absorbing; rollouts stop after this step.
    pub terminal: bool,
}

/// Environments the learners interact with. Learners only ever see the
/// discrete observation index returned by [`Environment::observe`].
pub trait Environment<T: Real> {
    type State: Clone;

    fn n_obs(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn gamma(&self) -> T;
    fn reset(&self, rng: &mut SimRng) -> Self::State;
    fn observe(&self, state: &Self::State) -> usize;
    fn step(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut SimRng,
    ) -> Transition<T, Self::State>;
}

impl<T: Real> Environment<T> for CmdpModel<T> {
    type State = usize;

    fn n_obs(&self) -> usize {
        self.n_states()
    }

    fn n_actions(&self) -> usize {
        CmdpModel::n_actions(self)
    }

    fn gamma(&self) -> T {
        CmdpModel::gamma(self)
    }

    fn reset(&self, rng: &mut SimRng) -> usize {
        sample_index(self.mu0(), rng)
    }

    fn observe(&self, state: &usize) -> usize {
        *state
    }

    fn step(&self, &s: &usize, a: usize, rng: &mut SimRng) -> Transition<T, usize> {
        let s2 = sample_index(self.next_dist(s, a), rng);
        Transition {
            next: s2,
            reward: self.reward(s, a, s2),
            cost: self.cost(s, a, s2),
            terminal: self.is_absorbing(s2),
        }
    }
}

/// Draws an index from a (possibly unnormalized-by-rounding) distribution.
pub fn sample_index<T: Real>(probs: &[T], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Stochastic policy over observation indices.
pub trait Policy<T: Real> {
    fn n_actions(&self) -> usize;
    /// Writes `π(·|obs)` into `out` (length `n_actions`).
    fn fill_probs(&self, obs: usize, out: &mut [T]);

    fn probs(&self, obs: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_actions()];
        self.fill_probs(obs, &mut out);
        out
    }
}

/// Threshold-conditioned policy `π(·|s, ε)`.
pub trait ConditionedPolicy<T: Real> {
    fn n_actions(&self) -> usize;
    fn fill_probs_at(&self, obs: usize, epsilon: T, out: &mut [T]);

    fn probs_at(&self, obs: usize, epsilon: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_actions()];
        self.fill_probs_at(obs, epsilon, &mut out);
        out
    }

    /// Fixes the threshold, giving an ordinary [`Policy`].
    fn at(&self, epsilon: T) -> AtThreshold<'_, T, Self>
    where
        Self: Sized,
    {
        AtThreshold {
            policy: self,
            epsilon,
        }
    }
}

/// A conditioned policy with its threshold fixed.
#[derive(Debug, Clone, Copy)]
pub struct AtThreshold<'a, T, P: ?Sized> {
    pub policy: &'a P,
    pub epsilon: T,
}

impl<T: Real, P: ConditionedPolicy<T> + ?Sized> Policy<T> for AtThreshold<'_, T, P> {
    fn n_actions(&self) -> usize {
        self.policy.n_actions()
    }

    fn fill_probs(&self, obs: usize, out: &mut [T]) {
        self.policy.fill_probs_at(obs, self.epsilon, out);
    }
}

/// Explicit table `π(a|s)`, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy<T> {
    n_actions: usize,
    probs: Vec<T>,
}

impl<T: Real> TabularPolicy<T> {
    pub fn uniform(n_obs: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            probs: vec![T::one() / T::from_usize_lossy(n_actions); n_obs * n_actions],
        }
    }

    /// Builds from rows; rows are not validated here (rollouts validate).
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n_actions = rows.first().map_or(0, Vec::len);
        Self {
            n_actions,
            probs: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_flat(n_actions: usize, probs: Vec<T>) -> Self {
        assert!(n_actions > 0 && probs.len() % n_actions == 0);
        Self { n_actions, probs }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![T::zero(); actions.len() * n_actions];
        for (s, a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = T::one();
        }
        Self { n_actions, probs }
    }

    pub fn n_obs(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [T] {
        &mut self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.probs
    }

    pub fn validate(&self, tol: T) -> Result<()> {
        for s in 0..self.n_obs() {
            if !is_distribution(self.row(s), tol) {
                return Err(Error::InvalidDistribution {
                    obs: s,
                    reason: format!("{:?}", self.row(s)),
                });
            }
        }
        Ok(())
    }
}

impl<T: Real> Policy<T> for TabularPolicy<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn fill_probs(&self, obs: usize, out: &mut [T]) {
        out.copy_from_slice(self.row(obs));
    }
}

/// A plain table ignores the threshold.
impl<T: Real> ConditionedPolicy<T> for TabularPolicy<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn fill_probs_at(&self, obs: usize, _epsilon: T, out: &mut [T]) {
        out.copy_from_slice(self.row(obs));
    }
}

/// One stored transition `(s, a, s', r, c, ε̃)`; states are observation indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep<T> {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: T,
    pub cost: T,
    pub behavior_threshold: T,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Reward,
    Cost,
}

/// Runs `policy` for `horizon` steps (fewer if an absorbing state is reached).
///
/// Every step is tagged with `behavior_threshold`. Deterministic given `rng`.
pub fn rollout_with<T, E, P>(
    env: &E,
    policy: &P,
    horizon: usize,
    behavior_threshold: T,
    rng: &mut SimRng,
) -> Result<Vec<TrajectoryStep<T>>>
where
    T: Real,
    E: Environment<T>,
    P: Policy<T> + ?Sized,
{
    let mut steps = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(steps);
    }
    if policy.n_actions() != env.n_actions() {
        return Err(Error::arg(
            "policy",
            format!(
                "has {} actions, environment has {}",
                policy.n_actions(),
                env.n_actions()
            ),
        ));
    }
    let mut probs = vec![T::zero(); env.n_actions()];
    let tol = T::lit(1e-6);
    let mut state = env.reset(rng);
    for _ in 0..horizon {
        let obs = env.observe(&state);
        policy.fill_probs(obs, &mut probs);
        if !is_distribution(&probs, tol) {
            return Err(Error::InvalidDistribution {
                obs,
                reason: format!("{probs:?}"),
            });
        }
        let action = sample_index(&probs, rng);
        let tr = env.step(&state, action, rng);
        steps.push(TrajectoryStep {
            state: obs,
            action,
            next_state: env.observe(&tr.next),
            reward: tr.reward,
            cost: tr.cost,
            behavior_threshold,
            terminal: tr.terminal,
        });
        state = tr.next;
        if tr.terminal {
            break;
        }
    }
    Ok(steps)
}

/// Seeded convenience wrapper around [`rollout_with`].
pub fn rollout<T, E, P>(
    env: &E,
    policy: &P,
    horizon: usize,
    seed: u64,
) -> Result<Vec<TrajectoryStep<T>>>
where
    T: Real,
    E: Environment<T>,
    P: Policy<T> + ?Sized,
{
    let mut rng = rng_from_seed(seed);
    rollout_with(env, policy, horizon, T::zero(), &mut rng)
}

/// `Σ_t γ^t f_t` for `f` the reward or cost signal.
pub fn discounted_return<T: Real>(trajectory: &[TrajectoryStep<T>], which: Signal, gamma: T) -> T {
    let mut acc = T::zero();
    let mut w = T::one();
    for step in trajectory {
        let f = match which {
            Signal::Reward => step.reward,
            Signal::Cost => step.cost,
        };
        acc += w * f;
        w *= gamma;
    }
    acc
}

/// Undiscounted episode sum of a signal.
pub fn episode_sum<T: Real>(trajectory: &[TrajectoryStep<T>], which: Signal) -> T {
    trajectory
        .iter()
        .map(|s| match which {
            Signal::Reward => s.reward,
            Signal::Cost => s.cost,
        })
        .sum()
}

/// Bound on the tail dropped by truncating an infinite discounted sum after
/// `horizon` steps: `γ^T · max|f| / (1 − γ)`.
pub fn truncation_error<T: Real>(gamma: T, horizon: usize, max_abs_signal: T) -> T {
    gamma.powi(horizon as i32) * max_abs_signal / (T::one() - gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::model::ChainSpec;

    fn step(r: f64, c: f64) -> TrajectoryStep<f64> {
        TrajectoryStep {
            state: 0,
            action: 0,
            next_state: 0,
            reward: r,
            cost: c,
            behavior_threshold: 0.0,
            terminal: false,
        }
    }

    #[test]
    fn discounted_return_examples() {
        let t: Vec<_> = [1.0, 0.0, 1.0].iter().map(|r| step(*r, 0.0)).collect();
        assert_eq!(discounted_return(&t, Signal::Reward, 0.5), 1.25);
        assert_eq!(discounted_return(&t, Signal::Cost, 0.5), 0.0);
        let long: Vec<_> = (0..200).map(|_| step(1.0, 0.0)).collect();
        let v = discounted_return(&long, Signal::Reward, 0.9);
        assert!((v - 10.0).abs() < 1e-8);
        assert!(truncation_error(0.9, 200, 1.0) < 1e-8);
    }

    #[test]
    fn horizon_zero_is_empty() {
        let m = ChainSpec::graded(4, 1.0, 2.0, 0.9f64).build().unwrap();
        let pi = TabularPolicy::uniform(4, 2);
        assert!(rollout(&m, &pi, 0, 7).unwrap().is_empty());
    }

    #[test]
    fn always_forward_chain_matches_hand_simulation() {
        // 2-state deterministic chain: 0 -> 1 -> 0 ...
        let mut spec = ChainSpec::graded(2, 1.0, 1.0, 0.9f64);
        spec.p_forward = 1.0;
        spec.p_back = 0.0;
        let m = spec.build().unwrap().with_mu0(vec![1.0, 0.0]).unwrap();
        let pi = TabularPolicy::deterministic(&[1, 1], 2);
        let t = rollout(&m, &pi, 5, 3).unwrap();
        let states: Vec<usize> = t.iter().map(|s| s.state).collect();
        assert_eq!(states, vec![0, 1, 0, 1, 0]);
        assert!(t.iter().all(|s| s.action == 1 && s.cost == 1.0));
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let m = ChainSpec::graded(3, 1.0, 2.0, 0.9f64).build().unwrap();
        let pi = TabularPolicy::from_rows(&[vec![0.7, 0.7], vec![0.5, 0.5], vec![0.5, 0.5]]);
        let mut rng = rng_from_seed(0);
        let m0 = m.with_mu0(vec![1.0, 0.0, 0.0]).unwrap();
        let err = rollout_with(&m0, &pi, 3, 0.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution { obs: 0, .. }));
    }

    #[test]
    fn rollout_is_reproducible() {
        let m = ChainSpec::graded(6, 1.0, 3.0, 0.9f64).build().unwrap();
        let pi = TabularPolicy::uniform(6, 2);
        assert_eq!(
            rollout(&m, &pi, 50, 11).unwrap(),
            rollout(&m, &pi, 50, 11).unwrap()
        );
        assert_ne!(
            rollout(&m, &pi, 50, 11).unwrap(),
            rollout(&m, &pi, 50, 12).unwrap()
        );
    }
}
