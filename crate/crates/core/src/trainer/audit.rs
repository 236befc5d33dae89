use crate::cmdp::{CmdpModel, ConditionedPolicy, Signal, TabularPolicy};
use crate::critic::{estimation_error_bound, fit_B_beta, CriticPair};
use crate::error::{Error, Result};
use crate::oracle::expected_return;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyPoint<T> {
    pub epsilon: T,
    /// Exact discounted cost `V_c(ε)` of `π(·|ε)`.
    pub v_c: T,
    /// `V_c(ε) − ε`.
    pub violation: T,
    pub bound: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyAudit<T> {
    pub points: Vec<SafetyPoint<T>>,
    /// Pooled residual standard deviation of the cost critic's polynomial fit
    /// (0 when the fit interpolates).
    pub sigma_hat: T,
    pub n_behavior: usize,
    pub degree: usize,
    pub b: T,
    pub beta: T,
    pub k_c: T,
    pub dim: usize,
}

impl<T: Real> SafetyAudit<T> {
    pub fn pass_fraction(&self) -> f64 {
        let n = self.points.len().max(1) as f64;
        self.points.iter().filter(|p| p.pass).count() as f64 / n
    }
}

/// Compares the exact violation `V_c(ε) − ε` of the versatile policy with
/// `z_{α/2}·B(p)/N^β(p)·√(σ̂²K_c²M)` at every grid threshold.
pub fn safety_bound_audit<T, P>(
    critic: &CriticPair<T>,
    pi: &P,
    model: &CmdpModel<T>,
    grid: &[T],
    alpha: f64,
) -> Result<SafetyAudit<T>>
where
    T: Real,
    P: ConditionedPolicy<T> + ?Sized,
{
    let cost = &critic.cost;
    let fit = cost
        .fit()
        .ok_or_else(|| Error::arg("critic", "cost critic has no polynomial fit"))?;
    let sigma_hat = fit.sigma_hat().unwrap_or(T::zero());
    let n = cost.behavior().len();
    let p = cost.embedding().degree();
    let range: Vec<usize> = ((p + 1).max(1)..=20).collect();
    let law = fit_B_beta::<T>(p, &range)?;
    let k_c = cost.psi().k_bound();
    let dim = cost.psi().dim();
    let bound = estimation_error_bound(&law, n, sigma_hat, k_c, dim, alpha)?;
    let na = model.n_actions();
    let mut points = Vec::with_capacity(grid.len());
    for &eps in grid {
        let mut probs = vec![T::zero(); model.n_states() * na];
        for s in 0..model.n_states() {
            pi.fill_probs_at(s, eps, &mut probs[s * na..(s + 1) * na]);
        }
        let v_c = expected_return(model, &TabularPolicy::from_flat(na, probs), Signal::Cost)?;
        let violation = v_c - eps;
        let slack = T::tight_eps() * eps.abs().max(T::one());
        points.push(SafetyPoint {
            epsilon: eps,
            v_c,
            violation,
            bound,
            pass: violation <= bound + slack,
        });
    }
    Ok(SafetyAudit {
        points,
        sigma_hat,
        n_behavior: n,
        degree: p,
        b: law.b,
        beta: law.beta,
        k_c,
        dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::ChainSpec;
    use crate::trainer::{init_critic, BehaviorConditionSet, TrainConfig};

    #[test]
    fn zero_residual_fit_demands_exact_feasibility() {
        let m = ChainSpec::<f64>::graded(8, 4.0, 12.0, 0.9).build().unwrap();
        let set = BehaviorConditionSet::standard();
        let cfg = TrainConfig::new(set.clone(), 10, 0);
        let mut critic = init_critic(8, 2, &set, &cfg.critic, 0).unwrap();
        // raw vectors exactly linear in ε̂ give zero residuals
        let raw: Vec<Vec<f64>> = set.behavior().iter().map(|e| vec![*e; 16]).collect();
        critic.cost.set_raw_z(raw.clone()).unwrap();
        critic.reward.set_raw_z(raw).unwrap();
        critic.refit().unwrap();
        let pi = TabularPolicy::<f64>::uniform(8, 2);
        let audit =
            safety_bound_audit(&critic, &pi, &m, &[30.0, 40.0, 50.0, f64::INFINITY], 0.05).unwrap();
        assert!(audit.sigma_hat < 1e-9);
        assert!(audit.points[0].bound < 1e-6);
        let pass: Vec<bool> = audit.points.iter().map(|p| p.pass).collect();
        assert_eq!(pass, vec![false, true, true, true]);
    }
}
