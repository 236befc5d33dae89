use crate::cmdp::{CmdpModel, Signal, TabularPolicy};
use crate::error::{Error, Result};
use crate::oracle::{exact_q, expected_return, state_occupancy};
use crate::scalar::Real;

use super::dual::{slater_margin, DualVars};
use super::elbo::elbo_exact;
use super::estep::{dual_problem, estep, primal_terms, EStepReport, ExactQ, VariationalPolicy};
use super::policy::{mstep, MStepConfig, MStepTarget, ParametricPolicy};

/// Trust-region radii and ELBO temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionConfig<T> {
    /// E-step radius on `E_ρ KL(q ‖ π_old)`.
    pub kappa: T,
    /// M-step radius on `E_ρ KL(π_old ‖ π_new)`.
    pub kl_m: T,
    /// ELBO temperature `α`.
    pub alpha_temp: T,
}

impl<T: Real> TrustRegionConfig<T> {
    pub fn new(kappa: T, kl_m: T, alpha_temp: T) -> Result<Self> {
        for (name, v) in [("kappa", kappa), ("kl_m", kl_m), ("alpha_temp", alpha_temp)] {
            if !(v > T::zero()) {
                return Err(Error::arg(name, format!("must be positive, got {v}")));
            }
        }
        let cfg = Self {
            kappa,
            kl_m,
            alpha_temp,
        };
        if let Some(msg) = cfg.robustness_warning() {
            log::warn!("{msg}");
        }
        Ok(cfg)
    }

    /// The E-step is only guaranteed a feasible start when each M-step moves
    /// the policy by less than the E-step radius.
    pub fn robustness_warning(&self) -> Option<String> {
        (self.kl_m >= self.kappa).then(|| {
            format!(
                "M-step KL radius kl_m = {} is not below the E-step radius kappa = {}; \
                 the robustness condition kl_m < kappa is violated and the next E-step \
                 may start from an infeasible policy",
                self.kl_m, self.kappa
            )
        })
    }
}

/// Settings for the exact (model-based) EM loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEmConfig<T> {
    pub trust: TrustRegionConfig<T>,
    /// M-step penalty weight `ν`.
    pub penalty: T,
    pub iterations: usize,
}

/// One threshold's view of one EM iteration `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRecord<T> {
    pub iteration: usize,
    pub epsilon: T,
    pub duals: DualVars<T>,
    pub estep: EStepReport<T>,
    /// `ε − min cost` inside the trust region around `π_j`.
    pub slater_margin: T,
    /// `V_c` of `π_j` and of `q_j`.
    pub policy_cost: T,
    pub q_cost: T,
    pub q_reward: T,
    /// `J(q_{j−1}, θ_j)`; absent on the first iteration.
    pub elbo_prev_q: Option<T>,
    /// E-step cost `E_ρ E_{q_{j−1}}[Q_c^{π_j}]` and `E_ρ KL(q_{j−1} ‖ π_j)`:
    /// whether `q_{j−1}` is a candidate of the `j`-th E-step.
    pub prev_q_terms: Option<(T, T)>,
    /// `J(q_j, θ_j)`.
    pub elbo_estep: T,
    /// `J(q_j, θ_{j+1})`.
    pub elbo: T,
    pub mstep_kl: T,
}

impl<T: Real> EmRecord<T> {
    pub fn slater(&self) -> bool {
        self.slater_margin > T::zero() && !self.estep.dual.slater_violated
    }

    /// `q_j` satisfies the true discounted constraint.
    pub fn q_feasible(&self, tol: T) -> bool {
        self.q_cost <= self.epsilon + tol
    }

    /// `q_{j−1}` lies in the feasible set of this iteration's E-step.
    pub fn prev_q_admissible(&self, kappa: T, tol: T) -> bool {
        matches!(self.prev_q_terms, Some((c, k)) if c <= self.epsilon + tol && k <= kappa + tol)
    }
}

/// Runs `config.iterations` EM iterations with exact critics and exact state
/// occupancies, recording per-threshold diagnostics and ELBO values.
pub fn exact_em<T: Real>(
    model: &CmdpModel<T>,
    pi0: &ParametricPolicy<T>,
    thresholds: &[T],
    config: &ExactEmConfig<T>,
) -> Result<(ParametricPolicy<T>, Vec<Vec<EmRecord<T>>>)> {
    if thresholds.is_empty() {
        return Err(Error::arg("thresholds", "empty"));
    }
    let ns = model.n_states();
    let na = model.n_actions();
    let alpha = config.trust.alpha_temp;
    let mcfg = MStepConfig::new(config.trust.kl_m, config.penalty)?;
    let mut pi = pi0.clone();
    let mut prev_q: Vec<Option<VariationalPolicy<T>>> = vec![None; thresholds.len()];
    let mut history = Vec::with_capacity(config.iterations);
    for j in 0..config.iterations {
        let mut qs = Vec::with_capacity(thresholds.len());
        let mut partial = Vec::with_capacity(thresholds.len());
        let mut weights = Vec::with_capacity(thresholds.len());
        for (i, &eps) in thresholds.iter().enumerate() {
            let table = pi.tabulate(eps);
            let critic = ExactQ {
                n_actions: na,
                q_r: exact_q(model, &table, Signal::Reward)?,
                q_c: exact_q(model, &table, Signal::Cost)?,
            };
            let rho = state_occupancy(model, &table)?;
            let states: Vec<(usize, T)> = rho
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, w)| *w > T::zero())
                .collect();
            let problem = dual_problem(&states, &pi, &critic, eps, config.trust.kappa)?;
            let margin = slater_margin(&problem);
            let out = estep(&states, ns, &pi, &critic, eps, config.trust.kappa)?;
            let q_table = TabularPolicy::from_flat(na, out.q.as_flat().to_vec());
            let q_cost = expected_return(model, &q_table, Signal::Cost)?;
            let q_reward = expected_return(model, &q_table, Signal::Reward)?;
            let policy_cost = expected_return(model, &table, Signal::Cost)?;
            let (elbo_prev_q, prev_q_terms) = match &prev_q[i] {
                Some(q) => {
                    let flat: Vec<T> = states
                        .iter()
                        .flat_map(|(s, _)| q.row(*s).iter().copied())
                        .collect();
                    let (_, c, k) = primal_terms(&problem, &flat);
                    (Some(elbo_exact(model, q, &pi, alpha)?), Some((c, k)))
                }
                None => (None, None),
            };
            let elbo_estep = elbo_exact(model, &out.q, &pi, alpha)?;
            partial.push((
                eps,
                out.report,
                margin,
                policy_cost,
                q_cost,
                q_reward,
                elbo_prev_q,
                prev_q_terms,
                elbo_estep,
            ));
            qs.push(out.q);
            weights.push(states);
        }
        let targets: Vec<MStepTarget<'_, T>> = qs
            .iter()
            .zip(&weights)
            .map(|(q, states)| MStepTarget { q, states })
            .collect();
        let (next, mrep) = mstep(&pi, &targets, &mcfg)?;
        let mut records = Vec::with_capacity(thresholds.len());
        for (i, p) in partial.into_iter().enumerate() {
            let (
                epsilon,
                estep,
                slater_margin,
                policy_cost,
                q_cost,
                q_reward,
                elbo_prev_q,
                prev_q_terms,
                elbo_estep,
            ) = p;
            records.push(EmRecord {
                iteration: j,
                epsilon,
                duals: estep.dual.duals,
                estep,
                slater_margin,
                policy_cost,
                q_cost,
                q_reward,
                elbo_prev_q,
                prev_q_terms,
                elbo_estep,
                elbo: elbo_exact(model, &qs[i], &next, alpha)?,
                mstep_kl: mrep.kl[i],
            });
        }
        pi = next;
        prev_q = qs.into_iter().map(Some).collect();
        history.push(records);
    }
    Ok((pi, history))
}

/// Outcome of an ELBO monotonicity audit over an EM history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityAudit<T> {
    /// Steps whose premises held and were checked.
    pub checked: usize,
    /// Steps skipped because a premise failed.
    pub skipped: usize,
    pub violations: usize,
    /// Largest decrease `J_{j−1} − J_j` among checked steps (0 if none).
    pub worst_drop: T,
}

/// Checks `J(q_j, θ_{j+1}) ≥ J(q_{j−1}, θ_j) − tol` per threshold and
/// iteration. A step is checked only when Slater's condition holds at `j−1`
/// and `j` and `q_{j−1}` is admissible for the `j`-th E-step.
pub fn elbo_monotonicity<T: Real>(
    history: &[Vec<EmRecord<T>>],
    kappa: T,
    tol: T,
) -> MonotonicityAudit<T> {
    let mut audit = MonotonicityAudit {
        checked: 0,
        skipped: 0,
        violations: 0,
        worst_drop: T::zero(),
    };
    let premise_tol = T::lit(1e-9);
    for j in 1..history.len() {
        for (prev, cur) in history[j - 1].iter().zip(&history[j]) {
            if !(prev.slater() && cur.slater() && cur.prev_q_admissible(kappa, premise_tol)) {
                audit.skipped += 1;
                continue;
            }
            audit.checked += 1;
            let drop = prev.elbo - cur.elbo;
            audit.worst_drop = audit.worst_drop.max(drop);
            if drop > tol {
                audit.violations += 1;
            }
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warns_when_mstep_radius_not_smaller() {
        let ok = TrustRegionConfig::new(0.1, 0.01, 1.0).unwrap();
        assert!(ok.robustness_warning().is_none());
        let bad = TrustRegionConfig::new(0.1, 0.1, 1.0).unwrap();
        assert!(bad.robustness_warning().unwrap().contains("kl_m < kappa"));
        assert!(TrustRegionConfig::new(0.0, 0.1, 1.0).is_err());
        assert!(TrustRegionConfig::new(0.1, 0.1, 0.0).is_err());
    }
}
