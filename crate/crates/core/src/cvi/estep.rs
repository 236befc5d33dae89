use crate::cmdp::{ConditionedPolicy, Policy};
use crate::critic::CriticPair;
use crate::error::{Error, Result};
use crate::scalar::{is_distribution, kl_divergence, Real};

use super::dual::{solve_dual, DualProblem, DualSolution};

/// Slack used by the E-step feasibility diagnostics.
pub const ESTEP_TOL: f64 = 1e-3;

/// Anything that can produce `Q_r(s,·|ε)` and `Q_c(s,·|ε)` rows.
pub trait QSource<T: Real> {
    fn n_actions(&self) -> usize;
    fn fill_rows(&self, s: usize, epsilon: T, q_r: &mut [T], q_c: &mut [T]);
}

impl<T: Real> QSource<T> for CriticPair<T> {
    fn n_actions(&self) -> usize {
        self.reward.psi().n_actions()
    }

    fn fill_rows(&self, s: usize, epsilon: T, q_r: &mut [T], q_c: &mut [T]) {
        self.reward.q_row(s, epsilon, q_r);
        self.cost.q_row(s, epsilon, q_c);
    }
}

/// Fixed tables `Q_r`, `Q_c` (flat `[s][a]`), e.g. exact values from the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactQ<T> {
    pub n_actions: usize,
    pub q_r: Vec<T>,
    pub q_c: Vec<T>,
}

impl<T: Real> QSource<T> for ExactQ<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn fill_rows(&self, s: usize, _epsilon: T, q_r: &mut [T], q_c: &mut [T]) {
        let na = self.n_actions;
        q_r.copy_from_slice(&self.q_r[s * na..(s + 1) * na]);
        q_c.copy_from_slice(&self.q_c[s * na..(s + 1) * na]);
    }
}

/// Non-parametric `q(a|s, ε)` for a single threshold, stored for every
/// observation (unsampled observations carry `π_old`).
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPolicy<T> {
    pub epsilon: T,
    n_actions: usize,
    probs: Vec<T>,
}

impl<T: Real> VariationalPolicy<T> {
    pub fn new(epsilon: T, n_actions: usize, probs: Vec<T>) -> Result<Self> {
        if n_actions == 0 || probs.len() % n_actions != 0 {
            return Err(Error::arg("probs", "length not a multiple of n_actions"));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if !is_distribution(row, T::lit(1e-10)) {
                return Err(Error::InvalidDistribution {
                    obs: s,
                    reason: "q row is not a distribution".into(),
                });
            }
        }
        Ok(Self {
            epsilon,
            n_actions,
            probs,
        })
    }

    /// `q = π(·|·, ε)` on `n_obs` observations.
    pub fn from_policy(pi: &impl ConditionedPolicy<T>, n_obs: usize, epsilon: T) -> Self {
        let na = pi.n_actions();
        let mut probs = vec![T::zero(); n_obs * na];
        for s in 0..n_obs {
            pi.fill_probs_at(s, epsilon, &mut probs[s * na..(s + 1) * na]);
        }
        Self {
            epsilon,
            n_actions: na,
            probs,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.probs
    }
}

impl<T: Real> Policy<T> for VariationalPolicy<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn fill_probs(&self, obs: usize, out: &mut [T]) {
        out.copy_from_slice(self.row(obs));
    }
}

/// Diagnostics of one E-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EStepReport<T> {
    pub epsilon: T,
    pub dual: DualSolution<T>,
    /// `E_ρ E_q[Q_c]`.
    pub expected_cost: T,
    /// `E_ρ E_q[Q_r]`.
    pub expected_reward: T,
    /// `E_ρ KL(q ‖ π_old)`.
    pub kl: T,
    pub cost_feasible: bool,
    pub kl_feasible: bool,
    /// `λ*·(E_q[Q_c] − ε)`.
    pub complementary_slackness: T,
}

impl<T: Real> EStepReport<T> {
    pub fn feasible(&self) -> bool {
        self.cost_feasible && self.kl_feasible && !self.dual.slater_violated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EStepOutput<T> {
    pub q: VariationalPolicy<T>,
    pub report: EStepReport<T>,
}

/// Builds the dual problem for a weighted state sample.
pub fn dual_problem<T: Real>(
    states: &[(usize, T)],
    pi_old: &impl ConditionedPolicy<T>,
    critic: &impl QSource<T>,
    epsilon: T,
    kappa: T,
) -> Result<DualProblem<T>> {
    let na = pi_old.n_actions();
    if critic.n_actions() != na {
        return Err(Error::arg("critic", "action count differs from policy"));
    }
    let total: T = states.iter().map(|(_, w)| *w).sum();
    if states.is_empty() || !(total > T::zero()) {
        return Err(Error::EmptyBuffer(" (no states for the E-step)".into()));
    }
    let n = states.len();
    let mut weights = Vec::with_capacity(n);
    let mut pi = vec![T::zero(); n * na];
    let mut q_r = vec![T::zero(); n * na];
    let mut q_c = vec![T::zero(); n * na];
    for (i, (s, w)) in states.iter().enumerate() {
        weights.push(*w / total);
        let r = i * na..(i + 1) * na;
        pi_old.fill_probs_at(*s, epsilon, &mut pi[r.clone()]);
        critic.fill_rows(*s, epsilon, &mut q_r[r.clone()], &mut q_c[r]);
    }
    DualProblem::new(na, weights, pi, q_r, q_c, epsilon, kappa)
}

/// Constraint-conditioned E-step at threshold `ε` over the weighted state
/// sample `states` (pairs of observation and weight; weights are normalized).
/// `n_obs` sizes the returned table.
pub fn estep<T: Real>(
    states: &[(usize, T)],
    n_obs: usize,
    pi_old: &impl ConditionedPolicy<T>,
    critic: &impl QSource<T>,
    epsilon: T,
    kappa: T,
) -> Result<EStepOutput<T>> {
    let problem = dual_problem(states, pi_old, critic, epsilon, kappa)?;
    let dual = solve_dual(&problem)?;
    Ok(estep_with(states, n_obs, pi_old, &problem, dual))
}

fn estep_with<T: Real>(
    states: &[(usize, T)],
    n_obs: usize,
    pi_old: &impl ConditionedPolicy<T>,
    problem: &DualProblem<T>,
    dual: DualSolution<T>,
) -> EStepOutput<T> {
    let na = problem.n_actions;
    let epsilon = problem.epsilon;
    let mut q = VariationalPolicy::from_policy(pi_old, n_obs, epsilon);
    let tilt = problem.tilt(dual.duals);
    for (i, (s, _)) in states.iter().enumerate() {
        q.probs[s * na..(s + 1) * na].copy_from_slice(&tilt[i * na..(i + 1) * na]);
    }
    let report = report(problem, dual);
    EStepOutput { q, report }
}

fn report<T: Real>(problem: &DualProblem<T>, dual: DualSolution<T>) -> EStepReport<T> {
    let m = problem.moments(dual.duals);
    let tol = T::lit(ESTEP_TOL);
    let slack = if problem.epsilon.is_finite() {
        dual.duals.lambda * (m.cost - problem.epsilon)
    } else {
        T::zero()
    };
    EStepReport {
        epsilon: problem.epsilon,
        dual,
        expected_cost: m.cost,
        expected_reward: m.reward,
        kl: m.kl,
        cost_feasible: m.cost <= problem.epsilon + tol,
        kl_feasible: m.kl <= problem.kappa + tol,
        complementary_slackness: slack,
    }
}

/// Evaluates the E-step objective and constraints of an arbitrary `q` table
/// against the dual problem's data: `(E q[Q_r], E q[Q_c], E KL(q‖π_old))`.
pub fn primal_terms<T: Real>(problem: &DualProblem<T>, q: &[T]) -> (T, T, T) {
    let na = problem.n_actions;
    let (mut r, mut c, mut kl) = (T::zero(), T::zero(), T::zero());
    for i in 0..problem.n_states() {
        let w = problem.weights[i];
        let rows = i * na..(i + 1) * na;
        let qi = &q[rows.clone()];
        for a in 0..na {
            r += w * qi[a] * problem.q_r[i * na + a];
            c += w * qi[a] * problem.q_c[i * na + a];
        }
        kl += w * kl_divergence(qi, &problem.pi_old[rows]);
    }
    (r, c, kl)
}
