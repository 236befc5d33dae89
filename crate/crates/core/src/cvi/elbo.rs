use crate::cmdp::{
    rng_from_seed, rollout_with, CmdpModel, ConditionedPolicy, Environment, Policy, TabularPolicy,
};
use crate::error::{Error, Result};
use crate::oracle::values_of;
use crate::scalar::{kl_divergence, Real};

use super::estep::VariationalPolicy;

/// `J(q, θ | ε) = E_q[Σ_t γ^t (r_t − α·KL(q(·|s_t) ‖ π(·|s_t, ε)))]`, solved
/// exactly on a tabular model.
pub fn elbo_exact<T: Real>(
    model: &CmdpModel<T>,
    q: &VariationalPolicy<T>,
    pi: &impl ConditionedPolicy<T>,
    alpha: T,
) -> Result<T> {
    let (ns, na) = (model.n_states(), model.n_actions());
    if q.n_obs() != ns || Policy::n_actions(q) != na {
        return Err(Error::arg("q", "shape does not match the model"));
    }
    let r = model.expected_reward();
    let f: Vec<T> = (0..ns)
        .map(|s| {
            let row = q.row(s);
            let rew: T = row
                .iter()
                .zip(&r[s * na..(s + 1) * na])
                .map(|(p, r)| *p * *r)
                .sum();
            if alpha == T::zero() {
                rew
            } else {
                rew - alpha * kl_divergence(row, &pi.probs_at(s, q.epsilon))
            }
        })
        .collect();
    let table = TabularPolicy::from_flat(na, q.as_flat().to_vec());
    let v = values_of(model, &table, &f)?;
    Ok(v.iter().zip(model.mu0()).map(|(v, m)| *v * *m).sum())
}

/// Monte-Carlo estimate of the same quantity from `episodes` rollouts of `q`
/// truncated at `horizon`.
pub fn elbo_monte_carlo<T, E>(
    env: &E,
    q: &VariationalPolicy<T>,
    pi: &impl ConditionedPolicy<T>,
    alpha: T,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<T>
where
    T: Real,
    E: Environment<T>,
{
    if episodes == 0 {
        return Err(Error::arg("episodes", "must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let g = env.gamma();
    let mut total = T::zero();
    for _ in 0..episodes {
        let traj = rollout_with(env, q, horizon, q.epsilon, &mut rng)?;
        let mut w = T::one();
        for step in &traj {
            let kl = if alpha == T::zero() {
                T::zero()
            } else {
                kl_divergence(q.row(step.state), &pi.probs_at(step.state, q.epsilon))
            };
            total += w * (step.reward - alpha * kl);
            w *= g;
        }
    }
    Ok(total / T::from_usize_lossy(episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{random_model, Signal};
    use crate::oracle::expected_return;

    #[test]
    fn prior_equal_to_q_gives_return() {
        let m = random_model::<f64>(4, 3, 0.9, 7).unwrap();
        let pi = TabularPolicy::from_rows(&[
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.2, 0.2],
            vec![1.0 / 3.0; 3],
            vec![0.1, 0.1, 0.8],
        ]);
        let q = VariationalPolicy::from_policy(&pi, 4, 1.0);
        let ret = expected_return(&m, &pi, Signal::Reward).unwrap();
        assert!((elbo_exact(&m, &q, &pi, 0.7).unwrap() - ret).abs() < 1e-10);
        let uniform = TabularPolicy::uniform(4, 3);
        assert!((elbo_exact(&m, &q, &uniform, 0.0).unwrap() - ret).abs() < 1e-10);
        assert!(elbo_exact(&m, &q, &uniform, 0.5).unwrap() < ret);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let m = random_model::<f64>(4, 2, 0.8, 1).unwrap();
        let q =
            VariationalPolicy::new(0.0, 2, vec![0.3, 0.7, 0.5, 0.5, 0.9, 0.1, 0.2, 0.8]).unwrap();
        let pi = TabularPolicy::uniform(4, 2);
        let exact = elbo_exact(&m, &q, &pi, 0.3).unwrap();
        let mc = elbo_monte_carlo(&m, &q, &pi, 0.3, 20_000, 80, 3).unwrap();
        assert!((exact - mc).abs() < 0.05, "{exact} vs {mc}");
    }
}
