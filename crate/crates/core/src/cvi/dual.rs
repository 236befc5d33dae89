//! The E-step dual `g(η, λ)` and its solver.

use crate::error::{Error, Result};
use crate::scalar::{kl_divergence, log_weighted_sum_exp, Real};

pub const ETA_FLOOR: f64 = 1e-6;
pub const LAMBDA_MAX: f64 = 1e6;
pub const DUAL_TOL: f64 = 1e-6;
pub const DUAL_MAX_ITER: usize = 10_000;

/// Temperature `η` and constraint multiplier `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualVars<T> {
    pub eta: T,
    pub lambda: T,
}

impl<T: Real> DualVars<T> {
    pub fn new(eta: T, lambda: T) -> Result<Self> {
        if !(eta >= T::lit(ETA_FLOOR)) {
            return Err(Error::arg("eta", format!("{eta} below floor {ETA_FLOOR}")));
        }
        if !(lambda >= T::zero()) {
            return Err(Error::arg("lambda", format!("{lambda} is negative")));
        }
        Ok(Self { eta, lambda })
    }
}

/// `q*(a) ∝ π_old(a)·exp((Q_r(a) − λQ_c(a))/η)`.
pub fn closed_form_q<T: Real>(pi_old: &[T], q_r: &[T], q_c: &[T], duals: DualVars<T>) -> Vec<T> {
    let mut out = vec![T::zero(); pi_old.len()];
    closed_form_q_into(pi_old, q_r, q_c, duals, &mut out);
    out
}

pub fn closed_form_q_into<T: Real>(
    pi_old: &[T],
    q_r: &[T],
    q_c: &[T],
    duals: DualVars<T>,
    out: &mut [T],
) {
    let mut max = T::neg_infinity();
    for a in 0..pi_old.len() {
        let u = (q_r[a] - duals.lambda * q_c[a]) / duals.eta;
        out[a] = u;
        if pi_old[a] > T::zero() && u > max {
            max = u;
        }
    }
    let mut z = T::zero();
    for a in 0..pi_old.len() {
        out[a] = if pi_old[a] > T::zero() {
            pi_old[a] * (out[a] - max).exp()
        } else {
            T::zero()
        };
        z += out[a];
    }
    for x in out.iter_mut() {
        *x /= z;
    }
}

/// The per-state data entering the dual: state weights `ρ`, `π_old` rows and
/// critic rows, all flat `[state][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProblem<T> {
    pub n_actions: usize,
    pub weights: Vec<T>,
    pub pi_old: Vec<T>,
    pub q_r: Vec<T>,
    pub q_c: Vec<T>,
    pub epsilon: T,
    pub kappa: T,
}

impl<T: Real> DualProblem<T> {
    pub fn new(
        n_actions: usize,
        weights: Vec<T>,
        pi_old: Vec<T>,
        q_r: Vec<T>,
        q_c: Vec<T>,
        epsilon: T,
        kappa: T,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 || n_actions == 0 {
            return Err(Error::arg("weights", "empty state sample"));
        }
        for (name, v) in [("pi_old", &pi_old), ("q_r", &q_r), ("q_c", &q_c)] {
            if v.len() != n * n_actions {
                return Err(Error::arg(
                    name,
                    format!("length {} != {}", v.len(), n * n_actions),
                ));
            }
        }
        let total: T = weights.iter().copied().sum();
        if weights.iter().any(|w| *w < T::zero()) || (total - T::one()).abs() > T::lit(1e-8) {
            return Err(Error::arg(
                "weights",
                format!("must be a distribution (sum {total})"),
            ));
        }
        if !(kappa > T::zero()) {
            return Err(Error::arg("kappa", "must be positive"));
        }
        if epsilon.is_nan() {
            return Err(Error::arg("epsilon", "is NaN"));
        }
        Ok(Self {
            n_actions,
            weights,
            pi_old,
            q_r,
            q_c,
            epsilon,
            kappa,
        })
    }

    pub fn n_states(&self) -> usize {
        self.weights.len()
    }

    fn rows(&self, i: usize) -> (&[T], &[T], &[T]) {
        let r = i * self.n_actions..(i + 1) * self.n_actions;
        (&self.pi_old[r.clone()], &self.q_r[r.clone()], &self.q_c[r])
    }

    fn has_finite_budget(&self) -> bool {
        self.epsilon.is_finite()
    }

    /// `g(η, λ)`; an infinite budget drops the `λε` term and pins `λ = 0`.
    pub fn value(&self, d: DualVars<T>) -> T {
        let mut acc = T::zero();
        let mut u = vec![T::zero(); self.n_actions];
        for i in 0..self.n_states() {
            let w = self.weights[i];
            if w == T::zero() {
                continue;
            }
            let (pi, qr, qc) = self.rows(i);
            for a in 0..self.n_actions {
                u[a] = (qr[a] - d.lambda * qc[a]) / d.eta;
            }
            acc += w * log_weighted_sum_exp(pi, &u);
        }
        let budget = if self.has_finite_budget() {
            d.lambda * self.epsilon
        } else {
            T::zero()
        };
        budget + d.eta * self.kappa + d.eta * acc
    }

    /// Tilted distributions for every sampled state, flat `[state][action]`.
    pub fn tilt(&self, d: DualVars<T>) -> Vec<T> {
        let mut q = vec![T::zero(); self.pi_old.len()];
        for i in 0..self.n_states() {
            let (pi, qr, qc) = self.rows(i);
            closed_form_q_into(
                pi,
                qr,
                qc,
                d,
                &mut q[i * self.n_actions..(i + 1) * self.n_actions],
            );
        }
        q
    }

    /// Weighted moments of the tilt at `d`.
    pub fn moments(&self, d: DualVars<T>) -> TiltMoments<T> {
        let na = self.n_actions;
        let mut m = TiltMoments::default();
        let mut q = vec![T::zero(); na];
        for i in 0..self.n_states() {
            let w = self.weights[i];
            if w == T::zero() {
                continue;
            }
            let (pi, qr, qc) = self.rows(i);
            closed_form_q_into(pi, qr, qc, d, &mut q);
            let adv = |a: usize| qr[a] - d.lambda * qc[a];
            let mut e_c = T::zero();
            let mut e_a = T::zero();
            let mut e_r = T::zero();
            for a in 0..na {
                if q[a] > T::zero() {
                    e_c += q[a] * qc[a];
                    e_a += q[a] * adv(a);
                    e_r += q[a] * qr[a];
                }
            }
            let (mut v_a, mut v_c, mut cov) = (T::zero(), T::zero(), T::zero());
            for a in 0..na {
                if q[a] > T::zero() {
                    let da = adv(a) - e_a;
                    let dc = qc[a] - e_c;
                    v_a += q[a] * da * da;
                    v_c += q[a] * dc * dc;
                    cov += q[a] * da * dc;
                }
            }
            m.cost += w * e_c;
            m.reward += w * e_r;
            m.kl += w * kl_divergence(&q, pi);
            m.var_adv += w * v_a;
            m.var_cost += w * v_c;
            m.cov += w * cov;
        }
        m
    }

    /// `(∂g/∂η, ∂g/∂λ)`.
    pub fn gradient(&self, d: DualVars<T>) -> [T; 2] {
        let m = self.moments(d);
        let g_lambda = if self.has_finite_budget() {
            self.epsilon - m.cost
        } else {
            T::zero()
        };
        [self.kappa - m.kl, g_lambda]
    }

    /// Hessian in `(η, λ)` order.
    pub fn hessian(&self, d: DualVars<T>) -> [[T; 2]; 2] {
        let m = self.moments(d);
        let e = d.eta;
        let h_ee = m.var_adv / (e * e * e);
        let h_el = m.cov / (e * e);
        let h_ll = m.var_cost / e;
        [[h_ee, h_el], [h_el, h_ll]]
    }

    fn projected_gradient(&self, d: DualVars<T>) -> [T; 2] {
        let [ge, gl] = self.gradient(d);
        let floor = T::lit(ETA_FLOOR);
        let at_floor = d.eta <= floor * (T::one() + T::lit(1e-9));
        let pe = if at_floor && ge > T::zero() {
            T::zero()
        } else {
            ge
        };
        let lmax = T::lit(LAMBDA_MAX);
        let pl =
            if (d.lambda <= T::zero() && gl > T::zero()) || (d.lambda >= lmax && gl < T::zero()) {
                T::zero()
            } else {
                gl
            };
        [pe, pl]
    }
}

/// Expectations under the tilted distribution, weighted by `ρ`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TiltMoments<T> {
    pub cost: T,
    pub reward: T,
    pub kl: T,
    pub var_adv: T,
    pub var_cost: T,
    pub cov: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution<T> {
    pub duals: DualVars<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    /// `λ` reached `LAMBDA_MAX`: no strictly feasible distribution inside
    /// the trust region was found.
    pub slater_violated: bool,
    pub eta_at_floor: bool,
}

/// `ε − min E_ρ E_q[Q_c]` over `q` with `E_ρ KL(q ‖ π_old) ≤ κ`: positive
/// exactly when a strictly feasible distribution exists inside the trust
/// region. The minimizer is a cost tilt `q ∝ π_old·exp(−Q_c/τ)`, with `τ`
/// found by bisection on the KL.
pub fn slater_margin<T: Real>(problem: &DualProblem<T>) -> T {
    if !problem.has_finite_budget() {
        return T::infinity();
    }
    let zero_r = DualProblem {
        q_r: vec![T::zero(); problem.q_r.len()],
        ..problem.clone()
    };
    let at = |tau: T| {
        zero_r.moments(DualVars {
            eta: tau,
            lambda: T::one(),
        })
    };
    let hard = at(T::lit(1e-9));
    let best = if hard.kl <= problem.kappa {
        hard.cost
    } else {
        let (mut lo, mut hi) = (
            T::lit(-9.0) * T::lit(10.0).ln(),
            T::lit(12.0) * T::lit(10.0).ln(),
        );
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if at(mid.exp()).kl > problem.kappa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(hi.exp()).cost
    };
    problem.epsilon - best
}

/// Golden-section search on a unimodal `f` over `[lo, hi]`; returns the final bracket.
fn golden_bracket<T: Real>(f: &impl Fn(T) -> T, mut lo: T, mut hi: T, iters: usize) -> (T, T) {
    let r = T::lit(0.618_033_988_749_894_9);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo, hi)
}

/// Minimizes a convex `f` with derivative `df` on `[lo, hi]`.
///
/// Golden-section narrows the bracket on function values; bisection on the
/// sign of `df` then resolves the minimizer below the resolution at which
/// function values stop being distinguishable.
fn line_minimize<T: Real>(f: impl Fn(T) -> T, df: impl Fn(T) -> T, lo: T, hi: T) -> T {
    if df(lo) >= T::zero() {
        return lo;
    }
    if df(hi) <= T::zero() {
        return hi;
    }
    let (mut a, mut b) = golden_bracket(&f, lo, hi, 60);
    if a > lo && df(a) > T::zero() {
        a = lo;
    }
    if b < hi && df(b) < T::zero() {
        b = hi;
    }
    for _ in 0..400 {
        let m = (a + b) / T::lit(2.0);
        if m <= a || m >= b {
            break;
        }
        if df(m) > T::zero() {
            b = m;
        } else {
            a = m;
        }
    }
    (a + b) / T::lit(2.0)
}

/// Upper end of a search interval starting at `x0`: doubles the step until
/// `f` increases, capped at `cap`.
fn bracket_up<T: Real>(f: &impl Fn(T) -> T, lo: T, x0: T, cap: T) -> T {
    let f0 = f(x0);
    let mut step = (x0 - lo).abs().max(T::one());
    loop {
        let next = (x0 + step).min(cap);
        if f(next) > f0 || next >= cap {
            return next;
        }
        step = step * T::lit(2.0);
    }
}

fn norm2<T: Real>(v: [T; 2]) -> T {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Minimizes `g` over `η ≥ η_floor`, `0 ≤ λ ≤ λ_max`.
///
/// Projected coordinate descent: exact line searches in `log η` and in `λ`,
/// each a golden-section bracket refined by derivative bisection. A projected
/// Newton step is attempted after every sweep and kept only when it lowers
/// both `g` and the projected gradient.
pub fn solve_dual<T: Real>(problem: &DualProblem<T>) -> Result<DualSolution<T>> {
    let floor = T::lit(ETA_FLOOR);
    let lmax = T::lit(LAMBDA_MAX);
    let tol = T::lit(DUAL_TOL);
    let finite = problem.has_finite_budget();
    let scale = problem
        .q_r
        .iter()
        .chain(&problem.q_c)
        .fold(T::zero(), |m, x| m.max(x.abs()));
    let mut d = DualVars {
        eta: (scale / T::lit(10.0)).max(T::one()),
        lambda: T::zero(),
    };
    let log_floor = floor.ln();
    let log_cap = T::lit(40.0);
    let mut iterations = 0;
    let mut grad_norm = T::infinity();
    while iterations < DUAL_MAX_ITER {
        iterations += 1;
        grad_norm = norm2(problem.projected_gradient(d));
        if grad_norm <= tol {
            break;
        }
        let lam = d.lambda;
        let at_eta = |le: T| DualVars {
            eta: le.exp().max(floor),
            lambda: lam,
        };
        let ge = |le: T| problem.value(at_eta(le));
        let dge = |le: T| problem.gradient(at_eta(le))[0];
        let hi = bracket_up(&ge, log_floor, d.eta.ln(), log_cap);
        d.eta = line_minimize(ge, dge, log_floor, hi).exp().max(floor);
        if finite {
            let eta = d.eta;
            let gl = |l: T| problem.value(DualVars { eta, lambda: l });
            let dgl = |l: T| problem.gradient(DualVars { eta, lambda: l })[1];
            let hi = bracket_up(&gl, T::zero(), d.lambda, lmax);
            d.lambda = line_minimize(gl, dgl, T::zero(), hi);
        }
        newton_step(problem, &mut d);
        if finite && d.eta < floor * T::lit(1e3) {
            floor_step(problem, &mut d);
        }
    }
    if grad_norm > tol {
        return Err(Error::DualNotConverged {
            iterations,
            grad_norm: grad_norm.as_f64(),
        });
    }
    if finite && d.lambda > T::zero() {
        let at_zero = DualVars {
            eta: d.eta,
            lambda: T::zero(),
        };
        let g0 = problem.value(at_zero);
        let g = problem.value(d);
        if g0 <= g + T::tight_eps() * (T::one() + g.abs())
            && norm2(problem.projected_gradient(at_zero)) <= tol
        {
            d.lambda = T::zero();
        }
    }
    let slater_violated = d.lambda >= lmax * T::lit(0.999_999);
    if slater_violated {
        log::warn!(
            "E-step dual hit lambda_max = {LAMBDA_MAX:e}: Slater's condition appears violated \
             (no strictly feasible action distribution within the trust region)"
        );
    }
    Ok(DualSolution {
        duals: d,
        value: problem.value(d),
        grad_norm,
        iterations,
        slater_violated,
        eta_at_floor: d.eta <= floor * T::lit(1.000_001),
    })
}

/// Pins `η` to the floor and minimizes over `λ` alone. Kept only if it does
/// not raise `g`; this settles the case of a slack trust region, where the
/// minimizer sits on the floor at a kink in `λ`.
fn floor_step<T: Real>(problem: &DualProblem<T>, d: &mut DualVars<T>) {
    let eta = T::lit(ETA_FLOOR);
    let gl = |l: T| problem.value(DualVars { eta, lambda: l });
    let dgl = |l: T| problem.gradient(DualVars { eta, lambda: l })[1];
    let hi = bracket_up(&gl, T::zero(), d.lambda, T::lit(LAMBDA_MAX));
    let cand = DualVars {
        eta,
        lambda: line_minimize(gl, dgl, T::zero(), hi),
    };
    if problem.value(cand) <= problem.value(*d) {
        *d = cand;
    }
}

/// Projected Newton step on both coordinates, kept only if it lowers `g` (up
/// to rounding) and the projected gradient norm.
fn newton_step<T: Real>(problem: &DualProblem<T>, d: &mut DualVars<T>) {
    let floor = T::lit(ETA_FLOOR);
    let lmax = T::lit(LAMBDA_MAX);
    if !problem.has_finite_budget() || d.eta <= floor || d.lambda <= T::zero() || d.lambda >= lmax {
        return;
    }
    let g = problem.gradient(*d);
    let h = problem.hessian(*d);
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(det > T::zero()) || !(h[0][0] > T::zero()) {
        return;
    }
    let step = [
        -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
        -(h[0][0] * g[1] - h[1][0] * g[0]) / det,
    ];
    if !step.iter().all(|x| x.is_finite()) {
        return;
    }
    let g0 = problem.value(*d);
    let slack = T::lit(4.0) * T::epsilon() * (T::one() + g0.abs());
    let n0 = norm2(problem.projected_gradient(*d));
    let mut t = T::one();
    for _ in 0..20 {
        let cand = DualVars {
            eta: (d.eta + t * step[0]).max(floor),
            lambda: (d.lambda + t * step[1]).max(T::zero()).min(lmax),
        };
        if problem.value(cand) <= g0 + slack && norm2(problem.projected_gradient(cand)) < n0 {
            *d = cand;
            return;
        }
        t = t * T::lit(0.5);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(qr: f64, qc: f64, eps: f64, kappa: f64) -> DualProblem<f64> {
        DualProblem::new(1, vec![1.0], vec![1.0], vec![qr], vec![qc], eps, kappa).unwrap()
    }

    #[test]
    fn softmax_example() {
        let d = DualVars {
            eta: 1.0,
            lambda: 7.0,
        };
        let q = closed_form_q(&[0.5, 0.5], &[1.0, 0.0], &[0.0, 0.0], d);
        let e = std::f64::consts::E;
        assert!((q[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((q[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn large_temperature_returns_prior() {
        let pi = [0.2, 0.3, 0.5];
        let d = DualVars {
            eta: 1e9,
            lambda: 0.0,
        };
        let q = closed_form_q(&pi, &[3.0, -1.0, 2.0], &[1.0, 2.0, 0.0], d);
        assert!(crate::scalar::total_variation(&q, &pi) < 1e-6);
    }

    #[test]
    fn shift_and_scale_invariance() {
        let pi = [0.2, 0.3, 0.5];
        let qr = [3.0, -1.0, 2.0];
        let qc = [1.0, 2.0, 0.0];
        let d = DualVars {
            eta: 0.7,
            lambda: 0.4,
        };
        let base = closed_form_q(&pi, &qr, &qc, d);
        let shifted: Vec<f64> = qr.iter().map(|x| x + 100.0).collect();
        let q = closed_form_q(&pi, &shifted, &qc, d);
        assert!(base.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
        let c = 3.5;
        let qr2: Vec<f64> = qr.iter().map(|x| x * c).collect();
        let qc2: Vec<f64> = qc.iter().map(|x| x * c).collect();
        let q = closed_form_q(
            &pi,
            &qr2,
            &qc2,
            DualVars {
                eta: 0.7 * c,
                lambda: 0.4,
            },
        );
        assert!(base.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn degenerate_single_action() {
        let p = single(1.0, 0.5, 1.0, 0.1);
        for (eta, lambda) in [(1.0, 0.0), (2.0, 3.0), (1e-6, 0.5)] {
            let g = p.value(DualVars { eta, lambda });
            assert!((g - (1.0 + 0.5 * lambda + 0.1 * eta)).abs() < 1e-12);
        }
        let sol = solve_dual(&p).unwrap();
        assert!(sol.duals.lambda <= 1e-6);
        assert!(sol.duals.eta <= 1e-5);
    }

    #[test]
    fn constant_reward_ignores_prior() {
        let a = DualProblem::<f64>::new(
            2,
            vec![1.0],
            vec![0.1, 0.9],
            vec![2.0, 2.0],
            vec![0.0, 1.0],
            1.0,
            0.3,
        )
        .unwrap();
        let mut b = a.clone();
        b.pi_old = vec![0.6, 0.4];
        let d = DualVars {
            eta: 0.8,
            lambda: 0.0,
        };
        assert!((a.value(d) - (0.8 * 0.3 + 2.0)).abs() < 1e-12);
        assert!((a.value(d) - b.value(d)).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_keeps_lambda_zero() {
        let p = DualProblem::<f64>::new(
            3,
            vec![0.5, 0.5],
            vec![1.0 / 3.0; 6],
            vec![1.0, 0.0, 2.0, 0.5, 0.1, 0.3],
            vec![0.0; 6],
            5.0,
            0.1,
        )
        .unwrap();
        let sol = solve_dual(&p).unwrap();
        assert!(sol.duals.lambda <= 1e-6);
        assert!((p.moments(sol.duals).kl - 0.1).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = DualProblem::<f64>::new(
            2,
            vec![0.3, 0.7],
            vec![0.4, 0.6, 0.5, 0.5],
            vec![1.0, 2.0, -0.5, 0.5],
            vec![0.0, 3.0, 1.0, 0.0],
            1.0,
            0.05,
        )
        .unwrap();
        let d = DualVars {
            eta: 0.6,
            lambda: 0.3,
        };
        let g = p.gradient(d);
        let h = 1e-6;
        let fe = (p.value(DualVars { eta: 0.6 + h, ..d })
            - p.value(DualVars { eta: 0.6 - h, ..d }))
            / (2.0 * h);
        let fl = (p.value(DualVars {
            lambda: 0.3 + h,
            ..d
        }) - p.value(DualVars {
            lambda: 0.3 - h,
            ..d
        })) / (2.0 * h);
        assert!((g[0] - fe).abs() < 1e-6);
        assert!((g[1] - fl).abs() < 1e-6);
        let hs = p.hessian(d);
        let ge = |eta: f64| p.gradient(DualVars { eta, ..d });
        let fd = (ge(0.6 + h)[0] - ge(0.6 - h)[0]) / (2.0 * h);
        assert!((hs[0][0] - fd).abs() < 1e-4);
        let gl = |lambda: f64| p.gradient(DualVars { lambda, ..d });
        let fd = (gl(0.3 + h)[1] - gl(0.3 - h)[1]) / (2.0 * h);
        assert!((hs[1][1] - fd).abs() < 1e-4);
        let fd = (gl(0.3 + h)[0] - gl(0.3 - h)[0]) / (2.0 * h);
        assert!((hs[0][1] - fd).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(DualVars::new(0.0, 1.0).is_err());
        assert!(DualVars::<f64>::new(1.0, -1.0).is_err());
        assert!(DualProblem::new(1, vec![0.5], vec![1.0], vec![0.0], vec![0.0], 1.0, 0.1).is_err());
        assert!(DualProblem::new(1, vec![1.0], vec![1.0], vec![0.0], vec![0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn slack_trust_region_settles_on_floor() {
        let p = DualProblem::new(
            2,
            vec![0.1265, 0.128, 0.1305, 0.1175, 0.118, 0.122, 0.127, 0.1305],
            vec![
                0.014400747924339886,
                0.9855992520756601,
                0.006445531444284735,
                0.9935544685557154,
                0.004630097249122497,
                0.9953699027508774,
                0.04547978968859636,
                0.9545202103114038,
                0.06970857203007155,
                0.9302914279699286,
                0.5193584236361439,
                0.4806415763638562,
                0.8815079264463609,
                0.11849207355363914,
                0.9434271166886902,
                0.05657288331130993,
            ],
            vec![
                57.16797082063412,
                62.3723746667356,
                56.711191471281296,
                65.09515282590516,
                50.78261106155769,
                55.738930853249556,
                44.4686471257705,
                48.07454859057249,
                40.84397016429304,
                47.08281269997344,
                40.40988639957488,
                44.01654685201397,
                44.01405249522058,
                45.14907016264515,
                51.576377752772935,
                54.9721956474707,
            ],
            vec![
                63.33106766809156,
                69.22153809304508,
                64.77064860502331,
                74.95722071427171,
                58.83892913596377,
                66.08165273784034,
                52.44639949185537,
                57.88966509451265,
                46.68855785625021,
                57.847689807720215,
                44.04847555595761,
                51.59114386080559,
                46.67225063443962,
                50.21241971425874,
                55.452331474611654,
                65.79714688685411,
            ],
            60.0,
            0.1,
        )
        .unwrap();
        let sol = solve_dual(&p).unwrap();
        assert!(sol.eta_at_floor);
        let q = p.tilt(sol.duals);
        let cost: f64 = (0..q.len())
            .map(|k| p.weights[k / 2] * q[k] * p.q_c[k])
            .sum();
        let kl: f64 = (0..8)
            .map(|s| {
                p.weights[s] * kl_divergence(&q[2 * s..2 * s + 2], &p.pi_old[2 * s..2 * s + 2])
            })
            .sum();
        assert!(cost <= 60.0 + 1e-6, "{cost}");
        assert!(kl <= 0.1, "{kl}");
    }
}
