use crate::cmdp::{ConditionedPolicy, TabularPolicy};
use crate::critic::{normalize_threshold, poly_row};
use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};
use crate::scalar::{kl_divergence, Real};

use super::estep::VariationalPolicy;

/// Softmax policy with logits `Σ_k θ[s,a,k]·ε̂^k`, `ε̂` the normalized threshold.
///
/// Infinite thresholds are evaluated at `ε_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricPolicy<T> {
    n_obs: usize,
    n_actions: usize,
    degree: usize,
    eps_l: T,
    eps_h: T,
    theta: Vec<T>,
}

impl<T: Real> ParametricPolicy<T> {
    /// All-zero weights: uniform at every threshold.
    pub fn uniform(
        n_obs: usize,
        n_actions: usize,
        degree: usize,
        eps_l: T,
        eps_h: T,
    ) -> Result<Self> {
        if n_obs == 0 || n_actions == 0 {
            return Err(Error::arg("n_actions", "empty observation or action set"));
        }
        normalize_threshold(eps_l, eps_l, eps_h)?;
        Ok(Self {
            n_obs,
            n_actions,
            degree,
            eps_l,
            eps_h,
            theta: vec![T::zero(); n_obs * n_actions * (degree + 1)],
        })
    }

    /// Threshold-independent policy with `θ_0 = log π`. Zero probabilities
    /// are floored at `1e-12` before taking logs.
    pub fn from_tabular(pi: &TabularPolicy<T>, degree: usize, eps_l: T, eps_h: T) -> Result<Self> {
        let na = crate::cmdp::Policy::n_actions(pi);
        let mut out = Self::uniform(pi.n_obs(), na, degree, eps_l, eps_h)?;
        let floor = T::lit(1e-12);
        for s in 0..pi.n_obs() {
            for a in 0..na {
                let i = out.index(s, a, 0);
                out.theta[i] = pi.row(s)[a].max(floor).ln();
            }
        }
        Ok(out)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn bounds(&self) -> (T, T) {
        (self.eps_l, self.eps_h)
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<T>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::arg(
                "theta",
                format!("length {} != {}", theta.len(), self.theta.len()),
            ));
        }
        self.theta = theta;
        Ok(())
    }

    #[inline]
    fn index(&self, s: usize, a: usize, k: usize) -> usize {
        (s * self.n_actions + a) * (self.degree + 1) + k
    }

    fn n_params_per_state(&self) -> usize {
        self.n_actions * (self.degree + 1)
    }

    /// Threshold features `[1, ε̂, …, ε̂^p]`.
    pub fn features(&self, epsilon: T) -> Vec<T> {
        let e = if epsilon.is_infinite() && epsilon > T::zero() {
            self.eps_h
        } else {
            epsilon
        };
        poly_row((e - self.eps_l) / self.eps_h, self.degree)
    }

    fn fill_with_features(theta: &[T], na: usize, x: &[T], out: &mut [T]) {
        let p = x.len();
        let mut max = T::neg_infinity();
        for a in 0..na {
            let l: T = theta[a * p..(a + 1) * p]
                .iter()
                .zip(x)
                .map(|(t, x)| *t * *x)
                .sum();
            out[a] = l;
            max = max.max(l);
        }
        let mut z = T::zero();
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }

    fn state_theta(&self, s: usize) -> &[T] {
        let n = self.n_params_per_state();
        &self.theta[s * n..(s + 1) * n]
    }

    /// `θ[s,a,·] += step·g[a]·x(ε)`, i.e. moves the logits at `(s, ε)` along `g`.
    pub fn ascend_logits(&mut self, s: usize, epsilon: T, g: &[T], step: T) {
        let x = self.features(epsilon);
        for (a, ga) in g.iter().enumerate().take(self.n_actions) {
            for (k, xk) in x.iter().enumerate() {
                let i = self.index(s, a, k);
                self.theta[i] += step * *ga * *xk;
            }
        }
    }

    /// Table of `π(·|·, ε)`.
    pub fn tabulate(&self, epsilon: T) -> TabularPolicy<T> {
        let na = self.n_actions;
        let x = self.features(epsilon);
        let mut probs = vec![T::zero(); self.n_obs * na];
        for s in 0..self.n_obs {
            Self::fill_with_features(
                self.state_theta(s),
                na,
                &x,
                &mut probs[s * na..(s + 1) * na],
            );
        }
        TabularPolicy::from_flat(na, probs)
    }
}

impl<T: Real> ConditionedPolicy<T> for ParametricPolicy<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn fill_probs_at(&self, obs: usize, epsilon: T, out: &mut [T]) {
        let x = self.features(epsilon);
        Self::fill_with_features(self.state_theta(obs), self.n_actions, &x, out);
    }
}

/// One projection target: the E-step distribution `q` at its threshold and
/// the weighted states it was computed on.
#[derive(Debug, Clone, Copy)]
pub struct MStepTarget<'a, T> {
    pub q: &'a VariationalPolicy<T>,
    pub states: &'a [(usize, T)],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStepConfig<T> {
    /// Per-threshold bound on `E_ρ KL(π_old ‖ π_θ)`.
    pub kl_m: T,
    /// Weight `ν` of the `KL(π_old ‖ π_θ)` penalty in the objective. In the
    /// tabular case the maximizer is `(q + νπ_old)/(1 + ν)`.
    pub penalty: T,
    pub max_newton: usize,
    pub max_backoffs: usize,
}

impl<T: Real> MStepConfig<T> {
    pub fn new(kl_m: T, penalty: T) -> Result<Self> {
        if !(kl_m >= T::zero()) {
            return Err(Error::arg("kl_m", "must be nonnegative"));
        }
        if !(penalty >= T::zero() && penalty.is_finite()) {
            return Err(Error::arg("penalty", "must be finite and nonnegative"));
        }
        Ok(Self {
            kl_m,
            penalty,
            max_newton: 100,
            max_backoffs: 60,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStepReport<T> {
    /// `E_ρ KL(π_old ‖ π_new)` per target.
    pub kl: Vec<T>,
    /// Fraction of the full step kept after the KL backoff.
    pub step_fraction: T,
    /// Weighted log-likelihood of the targets before and after.
    pub log_likelihood: (T, T),
}

struct StateSlice<T> {
    features: Vec<Vec<T>>,
    weights: Vec<T>,
    targets: Vec<Vec<T>>,
}

/// KL-constrained weighted maximum likelihood onto the targets.
///
/// Maximizes `(1/|E|)·Σ_i E_ρi[E_{q_i} log π_θ(·|s,ε_i) − ν·KL(π_old ‖ π_θ)]`
/// by per-state damped Newton, then shrinks the step toward the old weights
/// until every per-threshold KL is within `kl_m`.
pub fn mstep<T: Real>(
    pi: &ParametricPolicy<T>,
    targets: &[MStepTarget<'_, T>],
    config: &MStepConfig<T>,
) -> Result<(ParametricPolicy<T>, MStepReport<T>)> {
    if targets.is_empty() {
        return Err(Error::EmptyBuffer(" (no M-step targets)".into()));
    }
    let na = pi.n_actions;
    for t in targets {
        if t.q.n_obs() != pi.n_obs || crate::cmdp::Policy::n_actions(t.q) != na {
            return Err(Error::arg(
                "targets",
                "target table shape differs from policy",
            ));
        }
    }
    let ll_before = log_likelihood(pi, targets);
    if config.kl_m == T::zero() {
        let report = MStepReport {
            kl: vec![T::zero(); targets.len()],
            step_fraction: T::zero(),
            log_likelihood: (ll_before, ll_before),
        };
        return Ok((pi.clone(), report));
    }
    let slices = gather(pi, targets, config.penalty);
    let mut full = pi.clone();
    let n = pi.n_params_per_state();
    for (s, slice) in slices.iter().enumerate() {
        if let Some(slice) = slice {
            let th = newton_state(pi.state_theta(s), slice, na, config);
            full.theta[s * n..(s + 1) * n].copy_from_slice(&th);
        }
    }
    let kl_at = |cand: &ParametricPolicy<T>| -> Vec<T> {
        targets.iter().map(|t| mean_kl(pi, cand, t)).collect()
    };
    let within = |kl: &[T]| kl.iter().all(|k| *k <= config.kl_m);
    let mut kl = kl_at(&full);
    let mut fraction = T::one();
    let mut out = full.clone();
    if !within(&kl) {
        let blend = |t: T| {
            let mut c = pi.clone();
            for (o, (a, b)) in c.theta.iter_mut().zip(pi.theta.iter().zip(&full.theta)) {
                *o = *a + t * (*b - *a);
            }
            c
        };
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..config.max_backoffs {
            let mid = (lo + hi) / T::lit(2.0);
            if within(&kl_at(&blend(mid))) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        fraction = lo;
        out = blend(lo);
        kl = kl_at(&out);
        let worst = kl.iter().copied().fold(T::zero(), T::max);
        if !(worst <= config.kl_m + T::lit(1e-3)) {
            return Err(Error::KlUnrecoverable {
                kl: worst.as_f64(),
                limit: config.kl_m.as_f64(),
            });
        }
    }
    let ll_after = log_likelihood(&out, targets);
    Ok((
        out,
        MStepReport {
            kl,
            step_fraction: fraction,
            log_likelihood: (ll_before, ll_after),
        },
    ))
}

fn normalized<T: Real>(states: &[(usize, T)]) -> Vec<(usize, T)> {
    let total: T = states.iter().map(|(_, w)| *w).sum();
    if !(total > T::zero()) {
        return Vec::new();
    }
    states.iter().map(|(s, w)| (*s, *w / total)).collect()
}

fn gather<T: Real>(
    pi: &ParametricPolicy<T>,
    targets: &[MStepTarget<'_, T>],
    penalty: T,
) -> Vec<Option<StateSlice<T>>> {
    let inv = T::one() / T::from_usize_lossy(targets.len());
    let mut slices: Vec<Option<StateSlice<T>>> = (0..pi.n_obs).map(|_| None).collect();
    for t in targets {
        let x = pi.features(t.q.epsilon);
        for (s, w) in normalized(t.states) {
            if w == T::zero() {
                continue;
            }
            let old = pi.probs_at(s, t.q.epsilon);
            let target: Vec<T> =
                t.q.row(s)
                    .iter()
                    .zip(&old)
                    .map(|(q, o)| *q + penalty * *o)
                    .collect();
            let slot = slices[s].get_or_insert_with(|| StateSlice {
                features: Vec::new(),
                weights: Vec::new(),
                targets: Vec::new(),
            });
            slot.features.push(x.clone());
            slot.weights.push(w * inv);
            slot.targets.push(target);
        }
    }
    slices
}

/// `Σ_i w_i Σ_a t_ia log softmax(θ x_i)_a`.
fn state_objective<T: Real>(theta: &[T], slice: &StateSlice<T>, na: usize) -> T {
    let mut probs = vec![T::zero(); na];
    let mut acc = T::zero();
    for ((x, w), t) in slice
        .features
        .iter()
        .zip(&slice.weights)
        .zip(&slice.targets)
    {
        ParametricPolicy::fill_with_features(theta, na, x, &mut probs);
        for a in 0..na {
            if t[a] > T::zero() {
                acc += *w * t[a] * probs[a].ln();
            }
        }
    }
    acc
}

fn newton_state<T: Real>(
    theta0: &[T],
    slice: &StateSlice<T>,
    na: usize,
    config: &MStepConfig<T>,
) -> Vec<T> {
    let p = slice.features[0].len();
    let n = na * p;
    let mut theta = theta0.to_vec();
    let mut probs = vec![T::zero(); na];
    let mut f = state_objective(&theta, slice, na);
    for _ in 0..config.max_newton {
        let mut grad = vec![T::zero(); n];
        let mut hess = Matrix::zeros(n, n);
        for ((x, w), t) in slice
            .features
            .iter()
            .zip(&slice.weights)
            .zip(&slice.targets)
        {
            ParametricPolicy::fill_with_features(&theta, na, x, &mut probs);
            let mass: T = t.iter().copied().sum();
            for a in 0..na {
                let r = *w * (t[a] - mass * probs[a]);
                for k in 0..p {
                    grad[a * p + k] += r * x[k];
                }
                for b in 0..na {
                    let cov = if a == b {
                        probs[a] - probs[a] * probs[b]
                    } else {
                        -probs[a] * probs[b]
                    };
                    let c = *w * mass * cov;
                    for k in 0..p {
                        for l in 0..p {
                            hess[(a * p + k, b * p + l)] += c * x[k] * x[l];
                        }
                    }
                }
            }
        }
        let gnorm = grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if gnorm <= T::lit(1e-13) {
            break;
        }
        // softmax logits are invariant to a common shift, so the curvature is
        // singular along that direction; a small ridge makes the step unique
        let trace: T = (0..n).map(|i| hess[(i, i)]).sum();
        let ridge = (trace / T::from_usize_lossy(n)) * T::lit(1e-8) + T::lit(1e-14);
        for i in 0..n {
            hess[(i, i)] += ridge;
        }
        let Ok(step) = solve(&hess, &grad) else { break };
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<T> = theta.iter().zip(&step).map(|(a, d)| *a + t * *d).collect();
            let fc = state_objective(&cand, slice, na);
            if fc > f {
                theta = cand;
                f = fc;
                improved = true;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !improved {
            break;
        }
    }
    theta
}

fn mean_kl<T: Real>(
    old: &ParametricPolicy<T>,
    new: &ParametricPolicy<T>,
    target: &MStepTarget<'_, T>,
) -> T {
    let eps = target.q.epsilon;
    normalized(target.states)
        .into_iter()
        .map(|(s, w)| w * kl_divergence(&old.probs_at(s, eps), &new.probs_at(s, eps)))
        .sum()
}

fn log_likelihood<T: Real>(pi: &ParametricPolicy<T>, targets: &[MStepTarget<'_, T>]) -> T {
    let inv = T::one() / T::from_usize_lossy(targets.len());
    let mut acc = T::zero();
    for t in targets {
        for (s, w) in normalized(t.states) {
            let p = pi.probs_at(s, t.q.epsilon);
            for (q, p) in t.q.row(s).iter().zip(&p) {
                if *q > T::zero() {
                    acc += inv * w * *q * p.ln();
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::total_variation;

    fn target(eps: f64, rows: &[[f64; 3]]) -> VariationalPolicy<f64> {
        VariationalPolicy::new(eps, 3, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn unconstrained_fit_reproduces_target() {
        let pi = ParametricPolicy::uniform(2, 3, 1, 0.0, 10.0).unwrap();
        let q = target(5.0, &[[0.7, 0.2, 0.1], [0.05, 0.05, 0.9]]);
        let states = [(0, 0.5), (1, 0.5)];
        let cfg = MStepConfig::new(f64::INFINITY, 0.0).unwrap();
        let (new, rep) = mstep(
            &pi,
            &[MStepTarget {
                q: &q,
                states: &states,
            }],
            &cfg,
        )
        .unwrap();
        for s in 0..2 {
            assert!(total_variation(&new.probs_at(s, 5.0), q.row(s)) < 1e-4);
        }
        assert!(rep.log_likelihood.1 > rep.log_likelihood.0);
        assert_eq!(rep.step_fraction, 1.0);
    }

    #[test]
    fn penalty_gives_mixture() {
        let pi = ParametricPolicy::uniform(1, 3, 1, 0.0, 10.0).unwrap();
        let q = target(2.0, &[[0.7, 0.2, 0.1]]);
        let nu = 3.0;
        let cfg = MStepConfig::new(f64::INFINITY, nu).unwrap();
        let (new, _) = mstep(
            &pi,
            &[MStepTarget {
                q: &q,
                states: &[(0, 1.0)],
            }],
            &cfg,
        )
        .unwrap();
        let p = new.probs_at(0, 2.0);
        for a in 0..3 {
            let expect = (q.row(0)[a] + nu / 3.0) / (1.0 + nu);
            assert!((p[a] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_radius_is_identity() {
        let pi = ParametricPolicy::uniform(1, 3, 1, 0.0, 10.0).unwrap();
        let q = target(2.0, &[[0.7, 0.2, 0.1]]);
        let cfg = MStepConfig::new(0.0, 0.0).unwrap();
        let (new, _) = mstep(
            &pi,
            &[MStepTarget {
                q: &q,
                states: &[(0, 1.0)],
            }],
            &cfg,
        )
        .unwrap();
        assert_eq!(new, pi);
    }

    #[test]
    fn backoff_respects_radius() {
        let pi = ParametricPolicy::uniform(2, 3, 1, 0.0, 10.0).unwrap();
        let q = target(5.0, &[[0.9, 0.05, 0.05], [0.05, 0.05, 0.9]]);
        let cfg = MStepConfig::new(0.01, 0.0).unwrap();
        let states = [(0, 0.5), (1, 0.5)];
        let (_, rep) = mstep(
            &pi,
            &[MStepTarget {
                q: &q,
                states: &states,
            }],
            &cfg,
        )
        .unwrap();
        assert!(rep.kl[0] <= 0.01 + 1e-12);
        assert!(rep.kl[0] > 0.0099);
        assert!(rep.step_fraction < 1.0);
    }

    #[test]
    fn infinite_threshold_uses_upper_bound() {
        let mut pi = ParametricPolicy::uniform(1, 2, 1, 0.0, 10.0).unwrap();
        pi.set_theta(vec![0.0, 0.0, 1.0, -1.0]).unwrap();
        assert_eq!(pi.probs_at(0, f64::INFINITY), pi.probs_at(0, 10.0));
        assert!(pi.set_theta(vec![0.0]).is_err());
    }
}
