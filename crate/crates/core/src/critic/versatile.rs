//! Versatile value estimation `Q_f(s,a|ε) = ψ_f(s,a)ᵀ z_f(ε)`.

use rand::Rng;

use super::regression::{fit_z_poly, normalize_threshold, poly_row, PolyDesign, PolyFit};
use crate::cmdp::{rng_from_seed, ConditionedPolicy, Signal, TrajectoryStep};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
enum Features<T> {
    /// `ψ(s,a) = e_{s·|A|+a}`, fixed.
    OneHot,
    /// Lookup table `n_states·n_actions × dim`, row-major.
    Table { weights: Vec<T>, learnable: bool },
}

/// `ψ(s,a) ∈ ℝ^M` with `‖ψ‖_∞ ≤ K`. Learnable tables are clipped to
/// `[−K, K]` after every update; [`FeatureMap::clip_count`] counts clipped entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    k_bound: T,
    features: Features<T>,
    clip_count: usize,
}

impl<T: Real> FeatureMap<T> {
    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            dim: n_states * n_actions,
            k_bound: T::one(),
            features: Features::OneHot,
            clip_count: 0,
        }
    }

    /// Learnable table with entries drawn uniformly from `[−K, K]`.
    pub fn random(n_states: usize, n_actions: usize, dim: usize, k_bound: T, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let k = k_bound.as_f64();
        let weights = (0..n_states * n_actions * dim)
            .map(|_| T::lit(rng.random_range(-k..=k)))
            .collect();
        Self {
            n_states,
            n_actions,
            dim,
            k_bound,
            features: Features::Table {
                weights,
                learnable: true,
            },
            clip_count: 0,
        }
    }

    /// Explicit table; entries outside `[−K, K]` are clipped and counted.
    pub fn from_table(
        n_states: usize,
        n_actions: usize,
        dim: usize,
        k_bound: T,
        weights: Vec<T>,
        learnable: bool,
    ) -> Result<Self> {
        if weights.len() != n_states * n_actions * dim {
            return Err(Error::arg(
                "weights",
                "length must be n_states·n_actions·dim",
            ));
        }
        if !(k_bound > T::zero()) {
            return Err(Error::arg("k_bound", "must be > 0"));
        }
        let mut map = Self {
            n_states,
            n_actions,
            dim,
            k_bound,
            features: Features::Table { weights, learnable },
            clip_count: 0,
        };
        map.clip();
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn k_bound(&self) -> T {
        self.k_bound
    }

    pub fn clip_count(&self) -> usize {
        self.clip_count
    }

    pub fn is_learnable(&self) -> bool {
        matches!(
            self.features,
            Features::Table {
                learnable: true,
                ..
            }
        )
    }

    fn index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        s * self.n_actions + a
    }

    /// Dense `ψ(s,a)`.
    pub fn eval(&self, s: usize, a: usize) -> Vec<T> {
        let i = self.index(s, a);
        match &self.features {
            Features::OneHot => {
                let mut v = vec![T::zero(); self.dim];
                v[i] = T::one();
                v
            }
            Features::Table { weights, .. } => {
                let row = weights[i * self.dim..(i + 1) * self.dim].to_vec();
                assert!(
                    row.iter().all(|x| x.abs() <= self.k_bound),
                    "feature exceeds its sup-norm bound"
                );
                row
            }
        }
    }

    /// `ψ(s,a)ᵀz`.
    pub fn dot(&self, s: usize, a: usize, z: &[T]) -> T {
        let i = self.index(s, a);
        match &self.features {
            Features::OneHot => z[i],
            Features::Table { weights, .. } => weights[i * self.dim..(i + 1) * self.dim]
                .iter()
                .zip(z)
                .map(|(w, z)| *w * *z)
                .sum(),
        }
    }

    /// `z += scale · ψ(s,a)`.
    fn axpy_into(&self, s: usize, a: usize, scale: T, z: &mut [T]) {
        let i = self.index(s, a);
        match &self.features {
            Features::OneHot => z[i] += scale,
            Features::Table { weights, .. } => {
                for (zi, w) in z.iter_mut().zip(&weights[i * self.dim..(i + 1) * self.dim]) {
                    *zi += scale * *w;
                }
            }
        }
    }

    /// `z += scale·ψ(s,a)∘ψ(s,a)`.
    fn sq_axpy_into(&self, s: usize, a: usize, scale: T, z: &mut [T]) {
        let i = self.index(s, a);
        match &self.features {
            Features::OneHot => z[i] += scale,
            Features::Table { weights, .. } => {
                for (zi, w) in z.iter_mut().zip(&weights[i * self.dim..(i + 1) * self.dim]) {
                    *zi += scale * *w * *w;
                }
            }
        }
    }

    fn params(&self) -> &[T] {
        match &self.features {
            Features::OneHot => &[],
            Features::Table { weights, .. } => weights,
        }
    }

    fn params_mut(&mut self) -> &mut [T] {
        match &mut self.features {
            Features::OneHot => &mut [],
            Features::Table { weights, .. } => weights,
        }
    }

    fn clip(&mut self) {
        let k = self.k_bound;
        let mut clipped = 0;
        for w in self.params_mut() {
            if w.abs() > k {
                *w = w.max(-k).min(k);
                clipped += 1;
            }
        }
        if clipped > 0 {
            log::debug!("clipped {clipped} feature entries to ±{k}");
        }
        self.clip_count += clipped;
    }
}

/// `z(ε) = B·x(ε̂)` with `B ∈ ℝ^{M×(p+1)}` and `ε̂ = (ε − ε_L)/ε_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEmbedding<T> {
    dim: usize,
    degree: usize,
    coefficients: Vec<T>,
    eps_l: T,
    eps_h: T,
}

impl<T: Real> ThresholdEmbedding<T> {
    pub fn new(dim: usize, degree: usize, eps_l: T, eps_h: T) -> Result<Self> {
        normalize_threshold(eps_l, eps_l, eps_h)?;
        Ok(Self {
            dim,
            degree,
            coefficients: vec![T::zero(); dim * (degree + 1)],
            eps_l,
            eps_h,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn bounds(&self) -> (T, T) {
        (self.eps_l, self.eps_h)
    }

    pub fn normalize(&self, epsilon: T) -> T {
        (epsilon - self.eps_l) / self.eps_h
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn set_coefficients(&mut self, coefficients: Vec<T>) -> Result<()> {
        if coefficients.len() != self.dim * (self.degree + 1) {
            return Err(Error::arg("coefficients", "must be dim·(degree+1) long"));
        }
        self.coefficients = coefficients;
        Ok(())
    }

    pub fn eval(&self, epsilon: T) -> Vec<T> {
        let x = poly_row(self.normalize(epsilon), self.degree);
        self.coefficients
            .chunks(self.degree + 1)
            .map(|b| b.iter().zip(&x).map(|(b, x)| *b * *x).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Per-behavior `z` vectors trained by MSBE, then a polynomial fit across `Ẽ`.
    TwoStage,
    /// Polynomial coefficients trained directly by MSBE.
    EndToEnd,
}

/// Transitions collected under behavior threshold `ε̃_i` (index into the
/// critic's behavior set), with optional per-step weights.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub behavior: usize,
    pub steps: &'a [TrajectoryStep<T>],
    pub weights: Option<&'a [T]>,
}

impl<'a, T> Batch<'a, T> {
    pub fn uniform(behavior: usize, steps: &'a [TrajectoryStep<T>]) -> Self {
        Self {
            behavior,
            steps,
            weights: None,
        }
    }
}

/// One versatile critic with target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct VersatileQ<T> {
    psi: FeatureMap<T>,
    z: ThresholdEmbedding<T>,
    target_psi: FeatureMap<T>,
    target_z: ThresholdEmbedding<T>,
    behavior: Vec<T>,
    raw_z: Vec<Vec<T>>,
    target_raw_z: Vec<Vec<T>>,
    mode: FitMode,
    fit: Option<PolyFit<T>>,
    preconditioned: bool,
}

impl<T: Real> VersatileQ<T> {
    pub fn new(
        psi: FeatureMap<T>,
        z: ThresholdEmbedding<T>,
        behavior: Vec<T>,
        mode: FitMode,
    ) -> Result<Self> {
        if psi.dim() != z.dim() {
            return Err(Error::arg("z", "embedding and feature dimensions differ"));
        }
        if behavior.is_empty() {
            return Err(Error::arg("behavior", "empty behavior threshold set"));
        }
        let raw_z = vec![vec![T::zero(); psi.dim()]; behavior.len()];
        Ok(Self {
            target_psi: psi.clone(),
            target_z: z.clone(),
            target_raw_z: raw_z.clone(),
            psi,
            z,
            behavior,
            raw_z,
            mode,
            fit: None,
            preconditioned: false,
        })
    }

    /// Two-stage mode only: scales each coordinate of the raw-vector
    /// gradient by `1 / (2·E_D[ψ_j²])`, so one-hot features take the step
    /// `lr·mean TD error` per visited pair regardless of visit frequency.
    pub fn set_preconditioned(&mut self, on: bool) {
        self.preconditioned = on;
    }

    pub fn is_preconditioned(&self) -> bool {
        self.preconditioned
    }

    pub fn psi(&self) -> &FeatureMap<T> {
        &self.psi
    }

    pub fn embedding(&self) -> &ThresholdEmbedding<T> {
        &self.z
    }

    pub fn embedding_mut(&mut self) -> &mut ThresholdEmbedding<T> {
        &mut self.z
    }

    pub fn behavior(&self) -> &[T] {
        &self.behavior
    }

    pub fn mode(&self) -> FitMode {
        self.mode
    }

    pub fn raw_z(&self) -> &[Vec<T>] {
        &self.raw_z
    }

    /// Overwrites the per-behavior vectors (online and target).
    pub fn set_raw_z(&mut self, raw_z: Vec<Vec<T>>) -> Result<()> {
        if raw_z.len() != self.behavior.len() || raw_z.iter().any(|z| z.len() != self.psi.dim()) {
            return Err(Error::arg(
                "raw_z",
                "one vector of length M per behavior threshold",
            ));
        }
        self.target_raw_z = raw_z.clone();
        self.raw_z = raw_z;
        Ok(())
    }

    pub fn target_raw_z(&self) -> &[Vec<T>] {
        &self.target_raw_z
    }

    /// Overwrites only the target per-behavior vectors.
    pub fn set_target_raw_z(&mut self, raw_z: Vec<Vec<T>>) -> Result<()> {
        if raw_z.len() != self.behavior.len() || raw_z.iter().any(|z| z.len() != self.psi.dim()) {
            return Err(Error::arg(
                "raw_z",
                "one vector of length M per behavior threshold",
            ));
        }
        self.target_raw_z = raw_z;
        Ok(())
    }

    /// Last two-stage regression, if any.
    pub fn fit(&self) -> Option<&PolyFit<T>> {
        self.fit.as_ref()
    }

    pub fn z_at(&self, epsilon: T) -> Vec<T> {
        self.z.eval(epsilon)
    }

    pub fn q_value(&self, s: usize, a: usize, epsilon: T) -> T {
        self.psi.dot(s, a, &self.z.eval(epsilon))
    }

    /// `Q(s, ·|ε)` into `out`.
    pub fn q_row(&self, s: usize, epsilon: T, out: &mut [T]) {
        let z = self.z.eval(epsilon);
        self.q_row_with(s, &z, out);
    }

    pub fn q_row_with(&self, s: usize, z: &[T], out: &mut [T]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.psi.dot(s, a, z);
        }
    }

    /// Flat `[s][a]` table at threshold `ε`.
    pub fn q_table(&self, epsilon: T) -> Vec<T> {
        let z = self.z.eval(epsilon);
        let (ns, na) = (self.psi.n_states(), self.psi.n_actions());
        let mut out = vec![T::zero(); ns * na];
        for s in 0..ns {
            self.q_row_with(s, &z, &mut out[s * na..(s + 1) * na]);
        }
        out
    }

    fn behavior_z(&self, i: usize, target: bool) -> Vec<T> {
        match (self.mode, target) {
            (FitMode::TwoStage, false) => self.raw_z[i].clone(),
            (FitMode::TwoStage, true) => self.target_raw_z[i].clone(),
            (FitMode::EndToEnd, false) => self.z.eval(self.behavior[i]),
            (FitMode::EndToEnd, true) => self.target_z.eval(self.behavior[i]),
        }
    }

    /// `Q(s,a|ε̃_i)` as trained by MSBE (raw vectors in two-stage mode).
    pub fn q_behavior(&self, s: usize, a: usize, i: usize) -> T {
        self.psi.dot(s, a, &self.behavior_z(i, false))
    }

    /// One gradient step on `Σ_i E_{D_i}[(Q(s,a|ε̃_i) − y)²]` with
    /// `y = f + γ E_{a'~π(·|s',ε̃_i)} Q'(s',a'|ε̃_i)` from the target copies.
    /// Returns the loss before the step.
    pub fn msbe_update<P>(
        &mut self,
        batches: &[Batch<'_, T>],
        policy: &P,
        which: Signal,
        gamma: T,
        learning_rate: T,
    ) -> Result<T>
    where
        P: ConditionedPolicy<T> + ?Sized,
    {
        if batches.is_empty() || batches.iter().all(|b| b.steps.is_empty()) {
            return Err(Error::EmptyBuffer(" (no transitions in any batch)".into()));
        }
        let m = self.psi.dim();
        let na = self.psi.n_actions();
        let k = self.z.degree() + 1;
        let mut probs = vec![T::zero(); na];
        let mut loss = T::zero();
        let mut grad_raw = vec![vec![T::zero(); m]; self.behavior.len()];
        let precondition = self.preconditioned && self.mode == FitMode::TwoStage;
        let mut curvature =
            vec![vec![T::zero(); if precondition { m } else { 0 }]; self.behavior.len()];
        let mut grad_coef = vec![T::zero(); self.z.coefficients().len()];
        let mut grad_psi = vec![T::zero(); self.psi.params().len()];
        for batch in batches {
            if batch.steps.is_empty() {
                continue;
            }
            let i = batch.behavior;
            if i >= self.behavior.len() {
                return Err(Error::arg(
                    "batch",
                    format!("behavior index {i} out of range"),
                ));
            }
            if let Some(w) = batch.weights {
                if w.len() != batch.steps.len() {
                    return Err(Error::arg("batch", "weights and steps differ in length"));
                }
            }
            let eps_i = self.behavior[i];
            let z_online = self.behavior_z(i, false);
            let z_target = self.behavior_z(i, true);
            let x = poly_row(self.z.normalize(eps_i), self.z.degree());
            let uniform = T::one() / T::from_usize_lossy(batch.steps.len());
            let total_w = batch
                .weights
                .map_or(T::one(), |w| w.iter().copied().sum::<T>());
            if !(total_w > T::zero()) {
                continue;
            }
            for (t, step) in batch.steps.iter().enumerate() {
                let w = batch.weights.map_or(uniform, |w| w[t] / total_w);
                if w == T::zero() {
                    continue;
                }
                policy.fill_probs_at(step.next_state, eps_i, &mut probs);
                let next: T = probs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p != T::zero())
                    .map(|(a2, p)| *p * self.target_psi.dot(step.next_state, a2, &z_target))
                    .sum();
                let f = match which {
                    Signal::Reward => step.reward,
                    Signal::Cost => step.cost,
                };
                let q = self.psi.dot(step.state, step.action, &z_online);
                let delta = q - (f + gamma * next);
                loss += w * delta * delta;
                let g = T::lit(2.0) * w * delta;
                match self.mode {
                    FitMode::TwoStage => {
                        self.psi
                            .axpy_into(step.state, step.action, g, &mut grad_raw[i]);
                        if precondition {
                            self.psi.sq_axpy_into(
                                step.state,
                                step.action,
                                T::lit(2.0) * w,
                                &mut curvature[i],
                            );
                        }
                    }
                    FitMode::EndToEnd => {
                        let mut dz = vec![T::zero(); m];
                        self.psi.axpy_into(step.state, step.action, g, &mut dz);
                        for (row, d) in grad_coef.chunks_mut(k).zip(&dz) {
                            for (c, xk) in row.iter_mut().zip(&x) {
                                *c += *d * *xk;
                            }
                        }
                    }
                }
                if self.psi.is_learnable() {
                    let row = self.psi.index(step.state, step.action) * m;
                    for (gp, zj) in grad_psi[row..row + m].iter_mut().zip(&z_online) {
                        *gp += g * *zj;
                    }
                }
            }
        }
        if precondition {
            for (g, h) in grad_raw.iter_mut().zip(&curvature) {
                for (gi, hi) in g.iter_mut().zip(h) {
                    if *hi > T::zero() {
                        *gi /= *hi;
                    }
                }
            }
        }
        if learning_rate != T::zero() {
            for (z, g) in self.raw_z.iter_mut().zip(&grad_raw) {
                for (zi, gi) in z.iter_mut().zip(g) {
                    *zi -= learning_rate * *gi;
                }
            }
            if self.mode == FitMode::EndToEnd {
                let mut c = self.z.coefficients().to_vec();
                for (ci, gi) in c.iter_mut().zip(&grad_coef) {
                    *ci -= learning_rate * *gi;
                }
                self.z.set_coefficients(c)?;
            }
            if self.psi.is_learnable() {
                for (w, g) in self.psi.params_mut().iter_mut().zip(&grad_psi) {
                    *w -= learning_rate * *g;
                }
                self.psi.clip();
            }
        }
        Ok(loss)
    }

    /// `target ← ρ·target + (1−ρ)·online` for `ψ`, the embedding and the raw vectors.
    pub fn polyak_update(&mut self, rho: T) -> Result<()> {
        if !(rho >= T::zero() && rho <= T::one()) {
            return Err(Error::arg("rho", format!("must lie in [0, 1], got {rho}")));
        }
        let mix = |t: &mut [T], o: &[T]| {
            for (ti, oi) in t.iter_mut().zip(o) {
                *ti = rho * *ti + (T::one() - rho) * *oi;
            }
        };
        mix(self.target_psi.params_mut(), self.psi.params());
        let mut tc = self.target_z.coefficients().to_vec();
        mix(&mut tc, self.z.coefficients());
        self.target_z.set_coefficients(tc)?;
        for (t, o) in self.target_raw_z.iter_mut().zip(&self.raw_z) {
            mix(t, o);
        }
        Ok(())
    }

    /// Two-stage mode: fits the polynomial embedding to the raw per-behavior
    /// vectors by OLS. End-to-end mode: no-op returning `None`.
    pub fn refit(&mut self) -> Result<Option<&PolyFit<T>>> {
        if self.mode == FitMode::EndToEnd {
            return Ok(None);
        }
        let pts: Vec<T> = self.behavior.iter().map(|e| self.z.normalize(*e)).collect();
        let design = PolyDesign::new(pts, self.z.degree())?;
        let fit = fit_z_poly(&design, &self.raw_z)?;
        self.z.set_coefficients(fit.coefficients.clone())?;
        self.fit = Some(fit);
        Ok(self.fit.as_ref())
    }

    /// Design over the normalized behavior thresholds.
    pub fn design(&self) -> Result<PolyDesign<T>> {
        let pts: Vec<T> = self.behavior.iter().map(|e| self.z.normalize(*e)).collect();
        PolyDesign::new(pts, self.z.degree())
    }
}

/// Reward and cost critics trained side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair<T> {
    pub reward: VersatileQ<T>,
    pub cost: VersatileQ<T>,
}

impl<T: Real> CriticPair<T> {
    /// `(L(φ_r), L(φ_c))` before the step.
    pub fn msbe_update<P>(
        &mut self,
        batches: &[Batch<'_, T>],
        policy: &P,
        gamma: T,
        learning_rate: T,
    ) -> Result<(T, T)>
    where
        P: ConditionedPolicy<T> + ?Sized,
    {
        let lr = self
            .reward
            .msbe_update(batches, policy, Signal::Reward, gamma, learning_rate)?;
        let lc = self
            .cost
            .msbe_update(batches, policy, Signal::Cost, gamma, learning_rate)?;
        Ok((lr, lc))
    }

    pub fn polyak_update(&mut self, rho: T) -> Result<()> {
        self.reward.polyak_update(rho)?;
        self.cost.polyak_update(rho)
    }

    pub fn refit(&mut self) -> Result<()> {
        self.reward.refit()?;
        self.cost.refit()?;
        Ok(())
    }
}

/// Per-threshold distance between critic and ground-truth Q samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QCompare<T> {
    pub epsilon: T,
    pub mae: T,
    pub wasserstein: T,
}

/// 1-D Wasserstein-1 distance between two equal-size samples.
pub fn wasserstein_1d<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "samples must have equal size");
    if a.is_empty() {
        return T::zero();
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    a.iter().zip(&b).map(|(x, y)| (*x - *y).abs()).sum::<T>() / T::from_usize_lossy(a.len())
}

/// Compares `Q(s,a|ε)` against flat ground-truth tables at every action of
/// the sampled states.
pub fn q_distribution_compare<T: Real>(
    critic: &VersatileQ<T>,
    truth: &[(T, Vec<T>)],
    states: &[usize],
) -> Vec<QCompare<T>> {
    let na = critic.psi().n_actions();
    truth
        .iter()
        .map(|(eps, table)| {
            let est = critic.q_table(*eps);
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for &s in states {
                for a in 0..na {
                    xs.push(est[s * na + a]);
                    ys.push(table[s * na + a]);
                }
            }
            let n = T::from_usize_lossy(xs.len().max(1));
            let mae = xs.iter().zip(&ys).map(|(x, y)| (*x - *y).abs()).sum::<T>() / n;
            QCompare {
                epsilon: *eps,
                mae,
                wasserstein: wasserstein_1d(&xs, &ys),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::TabularPolicy;

    fn one_state_critic(q: f64) -> VersatileQ<f64> {
        let psi = FeatureMap::one_hot(1, 1);
        let z = ThresholdEmbedding::new(1, 0, 0.0, 1.0).unwrap();
        let mut c = VersatileQ::new(psi, z, vec![0.5], FitMode::TwoStage).unwrap();
        c.set_raw_z(vec![vec![q]]).unwrap();
        c
    }

    fn loop_step(r: f64) -> TrajectoryStep<f64> {
        TrajectoryStep {
            state: 0,
            action: 0,
            next_state: 0,
            reward: r,
            cost: 0.0,
            behavior_threshold: 0.5,
            terminal: false,
        }
    }

    #[test]
    fn q_value_is_dot_product() {
        let psi = FeatureMap::from_table(1, 1, 2, 2.0, vec![1.0, 2.0], false).unwrap();
        let mut z = ThresholdEmbedding::new(2, 0, 0.0, 1.0).unwrap();
        z.set_coefficients(vec![0.5, 0.25]).unwrap();
        let c = VersatileQ::new(psi, z, vec![0.0], FitMode::TwoStage).unwrap();
        assert_eq!(c.q_value(0, 0, 0.3), 1.0);
    }

    #[test]
    fn bellman_consistent_critic_is_a_fixed_point() {
        let mut c = one_state_critic(10.0);
        let before = c.clone();
        let steps = [loop_step(1.0)];
        let pi = TabularPolicy::uniform(1, 1);
        let loss = c
            .msbe_update(&[Batch::uniform(0, &steps)], &pi, Signal::Reward, 0.9, 0.5)
            .unwrap();
        assert!(loss.abs() < 1e-24);
        assert_eq!(c, before);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut c = one_state_critic(3.0);
        let before = c.clone();
        let steps = [loop_step(1.0)];
        let pi = TabularPolicy::uniform(1, 1);
        let loss = c
            .msbe_update(&[Batch::uniform(0, &steps)], &pi, Signal::Reward, 0.9, 0.0)
            .unwrap();
        assert!(loss > 0.0);
        assert_eq!(c, before);
        assert!(c.msbe_update(&[], &pi, Signal::Reward, 0.9, 0.1).is_err());
    }

    #[test]
    fn polyak_examples() {
        let mut c = one_state_critic(2.0);
        c.target_raw_z = vec![vec![0.0]];
        let mut c1 = c.clone();
        c1.polyak_update(1.0).unwrap();
        assert_eq!(c1.target_raw_z[0][0], 0.0);
        let mut c0 = c.clone();
        c0.polyak_update(0.0).unwrap();
        assert_eq!(c0.target_raw_z[0][0], 2.0);
        c.polyak_update(0.5).unwrap();
        assert_eq!(c.target_raw_z[0][0], 1.0);
        assert!(c.polyak_update(1.5).is_err());
    }

    #[test]
    fn features_are_clipped_and_counted() {
        let psi = FeatureMap::from_table(1, 2, 2, 1.0, vec![0.5, 3.0, -2.0, 0.1], true).unwrap();
        assert_eq!(psi.clip_count(), 2);
        assert_eq!(psi.eval(0, 0), vec![0.5, 1.0]);
        assert_eq!(psi.eval(0, 1), vec![-1.0, 0.1]);
    }

    #[test]
    fn wasserstein_is_symmetric() {
        let a = [0.0, 1.0, 5.0];
        let b = [2.0, 0.5, 1.0];
        assert_eq!(wasserstein_1d(&a, &b), wasserstein_1d(&b, &a));
        assert_eq!(wasserstein_1d(&a, &a), 0.0);
    }
}
