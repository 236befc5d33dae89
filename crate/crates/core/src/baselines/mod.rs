//! Baselines: linear combinations of single-threshold policies and the
//! state-augmented Lagrangian agent.

mod lagrangian;

pub use lagrangian::{
    lagrangian_update, train_lagrangian, LagrangianAgent, LagrangianBatch, LagrangianConfig,
    LagrangianLog, LagrangianOutput,
};

use rayon::prelude::*;

use crate::cmdp::{CmdpModel, ConditionedPolicy, Environment, Policy, TabularPolicy};
use crate::error::{Error, Result};
use crate::oracle::{solve_cmdp_lp, SolveStatus};
use crate::scalar::Real;
use crate::trainer::{train, BehaviorConditionSet, ExactModel, TrainConfig};

/// `(w1, w2)` with `w2 = (ε − ε1)/(ε2 − ε1)` and `w1 = 1 − w2`.
///
/// `w2` is re-derived as `1 − w1` so that `w1 + w2` rounds to exactly one;
/// this moves `w2` by at most one ulp.
pub fn combo_weights<T: Real>(epsilon: T, eps1: T, eps2: T) -> Result<(T, T)> {
    if eps1 == eps2 {
        return Err(Error::arg(
            "eps2",
            format!("must differ from eps1 ({eps1})"),
        ));
    }
    let w2 = (epsilon - eps1) / (eps2 - eps1);
    let w1 = T::one() - w2;
    Ok((w1, T::one() - w1))
}

/// Per-threshold policies keyed by ascending `ε̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleThresholdPolicyBank<T> {
    thresholds: Vec<T>,
    policies: Vec<TabularPolicy<T>>,
}

/// Result of [`combined_policy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Combination<T> {
    pub policy: TabularPolicy<T>,
    /// Keys `(ε1, ε2)` and weights `(w1, w2)` used.
    pub keys: (T, T),
    pub weights: (T, T),
    /// Number of states where a negative probability was clipped.
    pub clipped_states: usize,
}

impl<T: Real> SingleThresholdPolicyBank<T> {
    pub fn new(mut entries: Vec<(T, TabularPolicy<T>)>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::arg("bank", "needs at least two thresholds"));
        }
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        if entries.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::arg("bank", "thresholds must be distinct and finite"));
        }
        let (n_obs, na) = (entries[0].1.n_obs(), Policy::n_actions(&entries[0].1));
        if entries
            .iter()
            .any(|(_, p)| p.n_obs() != n_obs || Policy::n_actions(p) != na)
        {
            return Err(Error::arg("bank", "policies differ in shape"));
        }
        let (thresholds, policies) = entries.into_iter().unzip();
        Ok(Self {
            thresholds,
            policies,
        })
    }

    /// Exact constrained-optimal policies from the occupancy LP, one per threshold.
    pub fn from_lp(model: &CmdpModel<T>, thresholds: &[T]) -> Result<Self>
    where
        T: Send + Sync,
    {
        let entries = thresholds
            .par_iter()
            .map(|&eps| {
                let sol = solve_cmdp_lp(model, eps)?;
                if sol.status != SolveStatus::Optimal {
                    return Err(Error::arg(
                        "thresholds",
                        format!("LP infeasible at ε = {eps}"),
                    ));
                }
                Ok((eps, sol.policy))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// One CCPO run per threshold with `Ẽ = {ε̃}`, a constant critic
    /// embedding and a threshold-independent policy.
    pub fn from_single_cvi<E>(env: &E, base: &TrainConfig<T>, thresholds: &[T]) -> Result<Self>
    where
        T: Send + Sync,
        E: Environment<T> + ExactModel<T> + Sync,
    {
        let (eps_l, eps_h) = base.conditions.bounds();
        let entries = thresholds
            .par_iter()
            .enumerate()
            .map(|(i, &eps)| {
                let mut cfg = base.clone();
                cfg.conditions = BehaviorConditionSet::new(vec![eps], vec![eps], eps_l, eps_h)?;
                cfg.critic.degree = 0;
                cfg.policy_degree = 0;
                cfg.finetune_iterations = 0;
                cfg.seed = crate::cmdp::derive_seed(base.seed, &[BANK_STREAM, i as u64]);
                let out = train(env, &cfg)?;
                Ok((eps, out.policy.tabulate(eps)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    pub fn policies(&self) -> &[TabularPolicy<T>] {
        &self.policies
    }

    pub fn n_obs(&self) -> usize {
        self.policies[0].n_obs()
    }

    /// Indices of the two keys nearest to `ε`, in ascending key order. Ties
    /// go to the smaller key.
    pub fn nearest_pair(&self, epsilon: T) -> (usize, usize) {
        let mut idx: Vec<usize> = (0..self.thresholds.len()).collect();
        let dist = |i: usize| (self.thresholds[i] - epsilon).abs();
        idx.sort_by(|a, b| {
            dist(*a)
                .partial_cmp(&dist(*b))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(b))
        });
        let (i, j) = (idx[0], idx[1]);
        (i.min(j), i.max(j))
    }

    fn weights_at(&self, epsilon: T) -> (usize, usize, T, T) {
        let e = if epsilon.is_infinite() && epsilon > T::zero() {
            self.thresholds[self.thresholds.len() - 1]
        } else {
            epsilon
        };
        let (i, j) = self.nearest_pair(e);
        let (w1, w2) =
            combo_weights(e, self.thresholds[i], self.thresholds[j]).expect("distinct keys");
        (i, j, w1, w2)
    }

    /// `w1·π1(·|s) + w2·π2(·|s)`, clipped at zero and renormalized when
    /// negative. Returns whether clipping happened.
    fn mix_row(&self, i: usize, j: usize, w1: T, w2: T, s: usize, out: &mut [T]) -> bool {
        let (p1, p2) = (self.policies[i].row(s), self.policies[j].row(s));
        let mut clipped = false;
        for (o, (a, b)) in out.iter_mut().zip(p1.iter().zip(p2)) {
            *o = w1 * *a + w2 * *b;
            if *o < T::zero() {
                *o = T::zero();
                clipped = true;
            }
        }
        if clipped {
            let z: T = out.iter().copied().sum();
            out.iter_mut().for_each(|o| *o /= z);
        }
        clipped
    }
}

impl<T: Real> ConditionedPolicy<T> for SingleThresholdPolicyBank<T> {
    fn n_actions(&self) -> usize {
        Policy::n_actions(&self.policies[0])
    }

    fn fill_probs_at(&self, obs: usize, epsilon: T, out: &mut [T]) {
        let (i, j, w1, w2) = self.weights_at(epsilon);
        self.mix_row(i, j, w1, w2, obs, out);
    }
}

const BANK_STREAM: u64 = 0xBA4C;

/// The combination of the two bank policies nearest to `ε`, as a table.
pub fn combined_policy<T: Real>(
    bank: &SingleThresholdPolicyBank<T>,
    epsilon: T,
) -> Result<Combination<T>> {
    if epsilon.is_nan() {
        return Err(Error::arg("epsilon", "NaN"));
    }
    let (i, j, w1, w2) = bank.weights_at(epsilon);
    let na = bank.n_actions();
    let n_obs = bank.n_obs();
    let mut probs = vec![T::zero(); n_obs * na];
    let mut clipped_states = 0;
    for s in 0..n_obs {
        if bank.mix_row(i, j, w1, w2, s, &mut probs[s * na..(s + 1) * na]) {
            clipped_states += 1;
        }
    }
    if clipped_states > 0 {
        log::info!(
            "combination at ε = {epsilon}: weights ({w1}, {w2}) clipped in {clipped_states} of {n_obs} states"
        );
    }
    Ok(Combination {
        policy: TabularPolicy::from_flat(na, probs),
        keys: (bank.thresholds[i], bank.thresholds[j]),
        weights: (w1, w2),
        clipped_states,
    })
}
