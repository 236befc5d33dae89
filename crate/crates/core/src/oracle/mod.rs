//! Exact solvers for small tabular CMDPs.
//!
//! Units: the LP variable `d(s,a)` is the normalized discounted occupancy
//! (`Σ d = 1`, i.e. `(1−γ)·Σ_t γ^t Pr(s_t=s, a_t=a)`). Returns in
//! discounted-sum units are `E_d[f] / (1−γ)`, matching
//! [`discounted_return`](crate::cmdp::discounted_return) in expectation.

mod lp;

use std::io::Write;

pub use lp::{LinearProgram, LpSolution, LpStatus};

use crate::cmdp::{CmdpModel, Signal, TabularPolicy};
use crate::error::{Error, Result};
use crate::fmt::format_g;
use crate::linalg::{solve, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// Optimal occupancy for one threshold. For infeasible thresholds the
/// occupancy is zero, the policy uniform and both returns NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySolution<T> {
    /// Flat `[s][a]`, sums to 1.
    pub occupancy: Vec<T>,
    pub policy: TabularPolicy<T>,
    pub v_r: T,
    pub v_c: T,
    pub status: SolveStatus,
}

impl<T: Real> OccupancySolution<T> {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Largest violation of the flow equations over states.
    pub fn flow_residual(&self, model: &CmdpModel<T>) -> T {
        let (ns, na) = (model.n_states(), model.n_actions());
        let g = model.gamma();
        let mut inflow: Vec<T> = model.mu0().iter().map(|m| (T::one() - g) * *m).collect();
        for s in 0..ns {
            for a in 0..na {
                let d = self.occupancy[s * na + a];
                for (s2, p) in model.next_dist(s, a).iter().enumerate() {
                    inflow[s2] += g * *p * d;
                }
            }
        }
        (0..ns)
            .map(|s| {
                let out: T = self.occupancy[s * na..(s + 1) * na].iter().copied().sum();
                (out - inflow[s]).abs()
            })
            .fold(T::zero(), T::max)
    }

    /// Writes `state,action,occupancy,policy` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let na = self.policy.as_flat().len() / self.policy.n_obs().max(1);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "action", "occupancy", "policy"])?;
        for (i, (d, p)) in self.occupancy.iter().zip(self.policy.as_flat()).enumerate() {
            w.write_record([
                (i / na).to_string(),
                (i % na).to_string(),
                format_g(d.as_f64()),
                format_g(p.as_f64()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves `max E_d[r]/(1−γ)` over occupancies with `E_d[c]/(1−γ) ≤ ε`.
///
/// `epsilon = +∞` drops the cost constraint. Infeasibility is reported via
/// [`SolveStatus::Infeasible`], not as an error.
pub fn solve_cmdp_lp<T: Real>(model: &CmdpModel<T>, epsilon: T) -> Result<OccupancySolution<T>> {
    if epsilon.is_nan() || epsilon < T::zero() {
        return Err(Error::arg("epsilon", format!("must be ≥ 0, got {epsilon}")));
    }
    let (ns, na) = (model.n_states(), model.n_actions());
    let n = ns * na;
    let g = model.gamma();
    let scale = T::one() / (T::one() - g);
    let mut lp = LinearProgram::new(n);
    lp.set_objective(model.expected_reward().iter().map(|r| *r * scale).collect());
    for s in 0..ns {
        let mut row = vec![T::zero(); n];
        for a in 0..na {
            row[s * na + a] += T::one();
        }
        for s1 in 0..ns {
            for a1 in 0..na {
                row[s1 * na + a1] -= g * model.p(s1, a1, s);
            }
        }
        lp.add_eq(row, (T::one() - g) * model.mu0()[s]);
    }
    if epsilon.is_finite() {
        lp.add_le(
            model.expected_cost().iter().map(|c| *c * scale).collect(),
            epsilon,
        );
    }
    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(OccupancySolution {
                occupancy: vec![T::zero(); n],
                policy: TabularPolicy::uniform(ns, na),
                v_r: T::nan(),
                v_c: T::nan(),
                status: SolveStatus::Infeasible,
            })
        }
        LpStatus::Unbounded => return Err(Error::Lp("occupancy LP unbounded".into())),
    }
    let occupancy = sol.x;
    let v_c = occupancy
        .iter()
        .zip(model.expected_cost())
        .map(|(d, c)| *d * *c)
        .sum::<T>()
        * scale;
    let v_r = occupancy
        .iter()
        .zip(model.expected_reward())
        .map(|(d, r)| *d * *r)
        .sum::<T>()
        * scale;
    Ok(OccupancySolution {
        policy: policy_from_occupancy(&occupancy, na),
        occupancy,
        v_r,
        v_c,
        status: SolveStatus::Optimal,
    })
}

/// `π(a|s) = d(s,a) / Σ_a d(s,a)`, uniform where the state has no mass.
pub fn policy_from_occupancy<T: Real>(occupancy: &[T], n_actions: usize) -> TabularPolicy<T> {
    let floor = T::epsilon() * T::lit(16.0);
    let mut probs = Vec::with_capacity(occupancy.len());
    for row in occupancy.chunks(n_actions) {
        let total: T = row.iter().copied().sum();
        if total > floor {
            probs.extend(row.iter().map(|d| *d / total));
        } else {
            probs.extend(std::iter::repeat_n(
                T::one() / T::from_usize_lossy(n_actions),
                n_actions,
            ));
        }
    }
    TabularPolicy::from_flat(n_actions, probs)
}

fn signal<T: Real>(model: &CmdpModel<T>, which: Signal) -> &[T] {
    match which {
        Signal::Reward => model.expected_reward(),
        Signal::Cost => model.expected_cost(),
    }
}

fn check_policy<T: Real>(model: &CmdpModel<T>, policy: &TabularPolicy<T>) -> Result<()> {
    if policy.n_obs() != model.n_states()
        || policy.as_flat().len() != model.n_states() * model.n_actions()
    {
        return Err(Error::arg("policy", "shape does not match the model"));
    }
    policy.validate(T::lit(1e-6))
}

/// State values `V^π_f`, from `(I − γP_π)V = f̄_π`.
pub fn exact_v<T: Real>(
    model: &CmdpModel<T>,
    policy: &TabularPolicy<T>,
    which: Signal,
) -> Result<Vec<T>> {
    check_policy(model, policy)?;
    let na = model.n_actions();
    let f = signal(model, which);
    let f_pi: Vec<T> = (0..model.n_states())
        .map(|s| {
            policy
                .row(s)
                .iter()
                .zip(&f[s * na..(s + 1) * na])
                .map(|(w, f)| *w * *f)
                .sum()
        })
        .collect();
    values_of(model, policy, &f_pi)
}

/// Solves `(I − γP_π)V = f` for an arbitrary per-state signal `f`.
pub fn values_of<T: Real>(
    model: &CmdpModel<T>,
    policy: &TabularPolicy<T>,
    f: &[T],
) -> Result<Vec<T>> {
    check_policy(model, policy)?;
    let (ns, na) = (model.n_states(), model.n_actions());
    if f.len() != ns {
        return Err(Error::arg("f", format!("length {} != {ns}", f.len())));
    }
    let g = model.gamma();
    let mut a = Matrix::identity(ns);
    for s in 0..ns {
        let pi = policy.row(s);
        for act in 0..na {
            let w = pi[act];
            if w == T::zero() {
                continue;
            }
            for (s2, p) in model.next_dist(s, act).iter().enumerate() {
                a[(s, s2)] -= g * w * *p;
            }
        }
    }
    solve(&a, f)
}

/// `Q^π_f(s,a) = f̄(s,a) + γ Σ_{s'} P(s'|s,a) V^π_f(s')`, flat `[s][a]`.
pub fn exact_q<T: Real>(
    model: &CmdpModel<T>,
    policy: &TabularPolicy<T>,
    which: Signal,
) -> Result<Vec<T>> {
    let v = exact_v(model, policy, which)?;
    Ok(q_from_v(model, which, &v))
}

pub fn q_from_v<T: Real>(model: &CmdpModel<T>, which: Signal, v: &[T]) -> Vec<T> {
    let (ns, na) = (model.n_states(), model.n_actions());
    let g = model.gamma();
    let f = signal(model, which);
    let mut q = vec![T::zero(); ns * na];
    for s in 0..ns {
        for a in 0..na {
            let ev: T = model
                .next_dist(s, a)
                .iter()
                .zip(v)
                .map(|(p, v)| *p * *v)
                .sum();
            q[s * na + a] = f[s * na + a] + g * ev;
        }
    }
    q
}

/// `E_{s~μ0}[V^π_f(s)]`.
pub fn expected_return<T: Real>(
    model: &CmdpModel<T>,
    policy: &TabularPolicy<T>,
    which: Signal,
) -> Result<T> {
    let v = exact_v(model, policy, which)?;
    Ok(v.iter().zip(model.mu0()).map(|(v, m)| *v * *m).sum())
}

/// Normalized discounted state occupancy `ρ^π(s) = (1−γ) Σ_t γ^t Pr(s_t = s)`.
pub fn state_occupancy<T: Real>(model: &CmdpModel<T>, policy: &TabularPolicy<T>) -> Result<Vec<T>> {
    check_policy(model, policy)?;
    let ns = model.n_states();
    let g = model.gamma();
    // (I − γP_πᵀ) ρ = (1−γ) μ0
    let mut a = Matrix::identity(ns);
    for s in 0..ns {
        for (act, w) in policy.row(s).iter().enumerate() {
            for (s2, p) in model.next_dist(s, act).iter().enumerate() {
                a[(s2, s)] -= g * *w * *p;
            }
        }
    }
    let b: Vec<T> = model.mu0().iter().map(|m| (T::one() - g) * *m).collect();
    solve(&a, &b)
}

/// Bellman residual `max |Q − (f̄ + γ P π Q)|`.
pub fn bellman_residual<T: Real>(
    model: &CmdpModel<T>,
    policy: &TabularPolicy<T>,
    which: Signal,
    q: &[T],
) -> T {
    let (ns, na) = (model.n_states(), model.n_actions());
    let v: Vec<T> = (0..ns)
        .map(|s| {
            policy
                .row(s)
                .iter()
                .zip(&q[s * na..(s + 1) * na])
                .map(|(p, q)| *p * *q)
                .sum()
        })
        .collect();
    let target = q_from_v(model, which, &v);
    target
        .iter()
        .zip(q)
        .map(|(t, q)| (*t - *q).abs())
        .fold(T::zero(), T::max)
}

/// Unconstrained reward-optimal values by value iteration.
/// Stops when successive iterates differ by at most `tol` in sup norm.
pub fn value_iteration<T: Real>(
    model: &CmdpModel<T>,
    tol: T,
    max_iter: usize,
) -> (Vec<T>, TabularPolicy<T>) {
    let (ns, na) = (model.n_states(), model.n_actions());
    let mut v = vec![T::zero(); ns];
    let mut q = q_from_v(model, Signal::Reward, &v);
    for _ in 0..max_iter {
        q = q_from_v(model, Signal::Reward, &v);
        let mut delta = T::zero();
        for s in 0..ns {
            let best = q[s * na..(s + 1) * na]
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta <= tol {
            break;
        }
    }
    let actions: Vec<usize> = (0..ns)
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b })
        })
        .collect();
    (v, TabularPolicy::deterministic(&actions, na))
}

/// LP solution and exact `Q_r`, `Q_c` of its policy for one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub epsilon: T,
    pub solution: OccupancySolution<T>,
    pub q_r: Vec<T>,
    pub q_c: Vec<T>,
}

/// One [`GroundTruth`] per grid entry, in grid order. Infeasible thresholds
/// carry the uniform fallback policy's Q tables.
pub fn per_threshold_ground_truth<T: Real>(
    model: &CmdpModel<T>,
    epsilon_grid: &[T],
) -> Result<Vec<GroundTruth<T>>> {
    if epsilon_grid.is_empty() {
        return Err(Error::arg("epsilon_grid", "empty"));
    }
    epsilon_grid
        .iter()
        .map(|&eps| {
            let solution = solve_cmdp_lp(model, eps)?;
            let q_r = exact_q(model, &solution.policy, Signal::Reward)?;
            let q_c = exact_q(model, &solution.policy, Signal::Cost)?;
            Ok(GroundTruth {
                epsilon: eps,
                solution,
                q_r,
                q_c,
            })
        })
        .collect()
}
