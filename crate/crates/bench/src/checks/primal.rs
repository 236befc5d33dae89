//! Primal E-step by a log-barrier interior-point method.
//!
//! Maximizes `Σ_s w_s Σ_a q_sa Q_r` over per-state distributions subject to
//! `Σ_s w_s Σ_a q_sa Q_c ≤ ε` and `Σ_s w_s KL(q_s ‖ π_s) ≤ κ`, working
//! directly on the `|S|·|A|` probabilities with equality-constrained Newton
//! steps.

use ccpo_core::cvi::DualProblem;
use ccpo_core::linalg::{solve, Matrix};

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub q: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub kl: f64,
    /// Barrier parameter at exit; the duality gap is at most `2/t`.
    pub t: f64,
}

struct Terms {
    r: Vec<f64>,
    c: Vec<f64>,
    w: Vec<f64>,
    log_pi: Vec<f64>,
    na: usize,
    eps: f64,
    kappa: f64,
}

impl Terms {
    fn new(p: &DualProblem<f64>) -> Self {
        let na = p.n_actions;
        let w: Vec<f64> = (0..p.q_r.len()).map(|k| p.weights[k / na]).collect();
        Self {
            r: p.q_r.iter().zip(&w).map(|(q, w)| q * w).collect(),
            c: p.q_c.iter().zip(&w).map(|(q, w)| q * w).collect(),
            log_pi: p.pi_old.iter().map(|x| x.ln()).collect(),
            w,
            na,
            eps: p.epsilon,
            kappa: p.kappa,
        }
    }

    fn reward(&self, x: &[f64]) -> f64 {
        dot(&self.r, x)
    }

    fn cost(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    fn kl(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.w)
            .zip(&self.log_pi)
            .map(|((q, w), lp)| if *q > 0.0 { w * q * (q.ln() - lp) } else { 0.0 })
            .sum()
    }

    fn interior(&self, x: &[f64]) -> bool {
        x.iter().all(|v| *v > 0.0) && self.cost(x) < self.eps && self.kl(x) < self.kappa
    }

    fn barrier(&self, x: &[f64], t: f64) -> f64 {
        if !self.interior(x) {
            return f64::INFINITY;
        }
        -t * self.reward(x) - (self.eps - self.cost(x)).ln() - (self.kappa - self.kl(x)).ln()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn newton_direction(terms: &Terms, x: &[f64], t: f64) -> Option<(Vec<f64>, f64)> {
    let n = x.len();
    let ns = n / terms.na;
    let sc = terms.eps - terms.cost(x);
    let sk = terms.kappa - terms.kl(x);
    let dk: Vec<f64> = (0..n)
        .map(|k| terms.w[k] * (x[k].ln() - terms.log_pi[k] + 1.0))
        .collect();
    let grad: Vec<f64> = (0..n)
        .map(|k| -t * terms.r[k] + terms.c[k] / sc + dk[k] / sk)
        .collect();
    let dim = n + ns;
    let mut kkt = Matrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = terms.c[i] * terms.c[j] / (sc * sc) + dk[i] * dk[j] / (sk * sk);
        }
        kkt[(i, i)] += terms.w[i] / (x[i] * sk);
        let s = i / terms.na;
        kkt[(i, n + s)] = 1.0;
        kkt[(n + s, i)] = 1.0;
    }
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        rhs[i] = -grad[i];
    }
    let sol = solve(&kkt, &rhs).ok()?;
    let dx = sol[..n].to_vec();
    let decrement = -dot(&grad, &dx);
    Some((dx, decrement))
}

/// Solves from the strictly feasible `start`. Returns `None` when `start` is
/// not interior or a Newton system is singular.
pub fn solve_primal(problem: &DualProblem<f64>, start: &[f64]) -> Option<PrimalSolution> {
    let terms = Terms::new(problem);
    if !terms.interior(start) {
        return None;
    }
    let mut x = start.to_vec();
    let mut t = 1.0;
    let scale = 1.0 + terms.r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    while 2.0 / t > 1e-12 * scale {
        for _ in 0..200 {
            let (dx, decrement) = newton_direction(&terms, &x, t)?;
            if decrement / 2.0 <= 1e-14 {
                break;
            }
            let f0 = terms.barrier(&x, t);
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-16 {
                let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
                let f1 = terms.barrier(&cand, t);
                if f1 <= f0 - 0.25 * step * decrement {
                    x = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        t *= 8.0;
    }
    Some(PrimalSolution {
        reward: terms.reward(&x),
        cost: terms.cost(&x),
        kl: terms.kl(&x),
        q: x,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(eps: f64, kappa: f64) -> DualProblem<f64> {
        DualProblem::new(
            2,
            vec![1.0],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            eps,
            kappa,
        )
        .unwrap()
    }

    #[test]
    fn cost_constraint_binds() {
        // KL(q‖u) ≤ 0.1 allows q1 up to ≈ 0.72, the cost cap stops it at 0.6
        let sol = solve_primal(&one_state(0.6, 0.1), &[0.5, 0.5]).unwrap();
        assert!((sol.q[1] - 0.6).abs() < 1e-8, "{:?}", sol.q);
    }

    #[test]
    fn kl_constraint_binds() {
        let sol = solve_primal(&one_state(10.0, 0.1), &[0.5, 0.5]).unwrap();
        let p = sol.q[1];
        let kl = p * (2.0 * p).ln() + (1.0 - p) * (2.0 * (1.0 - p)).ln();
        assert!((kl - 0.1).abs() < 1e-8);
        assert!(p > 0.5);
    }

    #[test]
    fn rejects_infeasible_start() {
        assert!(solve_primal(&one_state(0.4, 0.1), &[0.5, 0.5]).is_none());
    }
}
