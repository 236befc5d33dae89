use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finite constrained MDP `(S, A, P, r, c, μ0, γ)`.
///
/// Tensors are stored flat in `[s][a][s']` order. Rewards and costs depend on
/// the full transition; `expected_reward` / `expected_cost` give the
/// `(s, a)` marginals used by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpModel<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    cost: Vec<T>,
    mu0: Vec<T>,
    gamma: T,
    exp_reward: Vec<T>,
    exp_cost: Vec<T>,
}

impl<T: Real> CmdpModel<T> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        cost: Vec<T>,
        mu0: Vec<T>,
        gamma: T,
    ) -> Result<Self> {
        let sas = n_states * n_actions * n_states;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        for (name, len) in [
            ("transition", transition.len()),
            ("reward", reward.len()),
            ("cost", cost.len()),
        ] {
            if len != sas {
                return Err(Error::InvalidModel(format!(
                    "{name} has {len} entries, expected {sas}"
                )));
            }
        }
        if mu0.len() != n_states {
            return Err(Error::InvalidModel(format!(
                "mu0 has {} entries, expected {n_states}",
                mu0.len()
            )));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::InvalidModel(format!("gamma {gamma} outside (0, 1)")));
        }
        let tol = T::tight_eps();
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row.iter().any(|p| !(*p >= T::zero() && *p <= T::one())) {
                    return Err(Error::InvalidModel(format!(
                        "P(.|{s},{a}) has entries outside [0,1]"
                    )));
                }
                let total: T = row.iter().copied().sum();
                if (total - T::one()).abs() > tol {
                    return Err(Error::InvalidModel(format!("P(.|{s},{a}) sums to {total}")));
                }
            }
        }
        if mu0.iter().any(|p| *p < T::zero())
            || (mu0.iter().copied().sum::<T>() - T::one()).abs() > tol
        {
            return Err(Error::InvalidModel("mu0 is not a distribution".into()));
        }
        if cost.iter().any(|c| !(*c >= T::zero())) {
            return Err(Error::InvalidModel("negative cost entry".into()));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("non-finite reward entry".into()));
        }
        let marginal = |f: &[T]| -> Vec<T> {
            (0..n_states * n_actions)
                .map(|sa| {
                    let base = sa * n_states;
                    (0..n_states)
                        .map(|s2| transition[base + s2] * f[base + s2])
                        .sum()
                })
                .collect()
        };
        let exp_reward = marginal(&reward);
        let exp_cost = marginal(&cost);
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            cost,
            mu0,
            gamma,
            exp_reward,
            exp_cost,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn mu0(&self) -> &[T] {
        &self.mu0
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> T {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    /// `P(·|s, a)` as a slice.
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[T] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, s2: usize) -> T {
        self.reward[(s * self.n_actions + a) * self.n_states + s2]
    }

    #[inline]
    pub fn cost(&self, s: usize, a: usize, s2: usize) -> T {
        self.cost[(s * self.n_actions + a) * self.n_states + s2]
    }

    /// `E_{s'}[r(s, a, s')]`, indexed `s * n_actions + a`.
    pub fn expected_reward(&self) -> &[T] {
        &self.exp_reward
    }

    pub fn expected_cost(&self) -> &[T] {
        &self.exp_cost
    }

    /// Absorbing: every action self-loops with probability one and pays nothing.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.n_actions).all(|a| {
            self.p(s, a, s) == T::one()
                && self.reward(s, a, s) == T::zero()
                && self.cost(s, a, s) == T::zero()
        })
    }

    /// Same dynamics with a different initial distribution.
    pub fn with_mu0(&self, mu0: Vec<T>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.cost.clone(),
            mu0,
            self.gamma,
        )
    }
}

/// Ring-shaped chain whose movement is independent of the action; every state
/// offers a safe action (no cost) and a risky action (more reward, hazard cost).
///
/// Because the ring kernel is doubly stochastic, the uniform initial
/// distribution is stationary under every policy, so the discounted state
/// occupancy of any policy equals `μ0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec<T> {
    pub n_states: usize,
    pub p_forward: T,
    pub p_back: T,
    pub safe_reward: Vec<T>,
    pub risky_reward: Vec<T>,
    pub hazard: Vec<T>,
    pub gamma: T,
}

impl<T: Real> ChainSpec<T> {
    /// Default hazard layout: hazards spread over `[hazard_lo, hazard_hi]`
    /// with reward-per-hazard ratios that decrease along the ring, so the
    /// constrained optimum switches states to risky one at a time.
    pub fn graded(n_states: usize, hazard_lo: T, hazard_hi: T, gamma: T) -> Self {
        let n = n_states.max(1);
        let denom = T::from_usize_lossy((n - 1).max(1));
        let mut hazard = Vec::with_capacity(n);
        let mut risky = Vec::with_capacity(n);
        for s in 0..n {
            let t = T::from_usize_lossy(s) / denom;
            // interleave hazards so neighbouring states differ
            let h_pos = T::from_usize_lossy((s * 5 + 2) % n) / denom;
            let h = hazard_lo + (hazard_hi - hazard_lo) * h_pos;
            let ratio = T::lit(0.9) - T::lit(0.6) * t;
            hazard.push(h);
            risky.push(T::one() + ratio * h);
        }
        Self {
            n_states: n,
            p_forward: T::lit(0.5),
            p_back: T::lit(0.2),
            safe_reward: vec![T::one(); n],
            risky_reward: risky,
            hazard,
            gamma,
        }
    }

    pub fn build(&self) -> Result<CmdpModel<T>> {
        let n = self.n_states;
        for (name, v) in [
            ("safe_reward", &self.safe_reward),
            ("risky_reward", &self.risky_reward),
            ("hazard", &self.hazard),
        ] {
            if v.len() != n {
                return Err(Error::InvalidModel(format!(
                    "chain {name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        let stay = T::one() - self.p_forward - self.p_back;
        if self.p_forward < T::zero() || self.p_back < T::zero() || stay < -T::tight_eps() {
            return Err(Error::InvalidModel(
                "chain move probabilities invalid".into(),
            ));
        }
        let stay = stay.max(T::zero());
        let na = 2;
        let mut p = vec![T::zero(); n * na * n];
        let mut r = vec![T::zero(); n * na * n];
        let mut c = vec![T::zero(); n * na * n];
        for s in 0..n {
            for a in 0..na {
                let base = (s * na + a) * n;
                p[base + (s + 1) % n] += self.p_forward;
                p[base + (s + n - 1) % n] += self.p_back;
                p[base + s] += stay;
                for s2 in 0..n {
                    if a == 0 {
                        r[base + s2] = self.safe_reward[s];
                    } else {
                        r[base + s2] = self.risky_reward[s];
                        c[base + s2] = self.hazard[s];
                    }
                }
            }
        }
        let mu0 = vec![T::one() / T::from_usize_lossy(n); n];
        CmdpModel::new(n, na, p, r, c, mu0, self.gamma)
    }
}

/// Gridworld with slip noise, an absorbing goal and costly cells.
///
/// Actions: 0 up, 1 right, 2 down, 3 left. Reward `goal_reward` is paid on
/// entering the goal; entering a cost cell pays cost 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    pub width: usize,
    pub height: usize,
    pub slip: T,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub cost_cells: Vec<(usize, usize)>,
    pub goal_reward: T,
    pub step_reward: T,
    pub gamma: T,
}

impl<T: Real> GridSpec<T> {
    pub fn build(&self) -> Result<CmdpModel<T>> {
        let (w, h) = (self.width, self.height);
        let n = w * h;
        if n == 0 || n > 100 {
            return Err(Error::InvalidModel(format!(
                "grid size {n} outside 1..=100"
            )));
        }
        let idx = |(x, y): (usize, usize)| y * w + x;
        for cell in [self.start, self.goal].iter().chain(&self.cost_cells) {
            if cell.0 >= w || cell.1 >= h {
                return Err(Error::InvalidModel(format!("cell {cell:?} outside grid")));
            }
        }
        let goal = idx(self.goal);
        let is_cost: Vec<bool> = (0..n)
            .map(|s| self.cost_cells.iter().any(|c| idx(*c) == s))
            .collect();
        let na = 4;
        let mv = |s: usize, a: usize| -> usize {
            let (x, y) = (s % w, s / w);
            let (nx, ny) = match a {
                0 => (x, y.saturating_sub(1)),
                1 => ((x + 1).min(w - 1), y),
                2 => (x, (y + 1).min(h - 1)),
                _ => (x.saturating_sub(1), y),
            };
            ny * w + nx
        };
        let mut p = vec![T::zero(); n * na * n];
        let mut r = vec![T::zero(); n * na * n];
        let mut c = vec![T::zero(); n * na * n];
        let slip_each = self.slip / T::lit(4.0);
        for s in 0..n {
            for a in 0..na {
                let base = (s * na + a) * n;
                if s == goal {
                    p[base + s] = T::one();
                    continue;
                }
                p[base + mv(s, a)] += T::one() - self.slip;
                for b in 0..na {
                    p[base + mv(s, b)] += slip_each;
                }
                for s2 in 0..n {
                    r[base + s2] = if s2 == goal {
                        self.goal_reward
                    } else {
                        self.step_reward
                    };
                    if is_cost[s2] {
                        c[base + s2] = T::one();
                    }
                }
            }
        }
        let mut mu0 = vec![T::zero(); n];
        mu0[idx(self.start)] = T::one();
        CmdpModel::new(n, na, p, r, c, mu0, self.gamma)
    }
}

/// Random dense CMDP for property tests: transitions with a few random
/// successors, rewards in `[-1, 1]`, costs in `[0, 1]`, `μ0` random.
pub fn random_model<T: Real>(
    n_states: usize,
    n_actions: usize,
    gamma: T,
    seed: u64,
) -> Result<CmdpModel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_states;
    let mut p = vec![T::zero(); n * n_actions * n];
    let mut r = vec![T::zero(); n * n_actions * n];
    let mut c = vec![T::zero(); n * n_actions * n];
    for sa in 0..n * n_actions {
        let base = sa * n;
        let mut w: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.5 {
                    0.0
                } else {
                    -rng.random::<f64>().max(1e-12).ln()
                }
            })
            .collect();
        if w.iter().all(|x| *x == 0.0) {
            w[rng.random_range(0..n)] = 1.0;
        }
        let total: f64 = w.iter().sum();
        let mut acc = T::zero();
        for (s2, wi) in w.iter().enumerate() {
            let v = T::lit(wi / total);
            p[base + s2] = v;
            acc += v;
        }
        // fold rounding residue into the largest entry
        let (imax, _) =
            w.iter().enumerate().fold(
                (0, f64::MIN),
                |m, (i, x)| if *x > m.1 { (i, *x) } else { m },
            );
        p[base + imax] += T::one() - acc;
        for s2 in 0..n {
            r[base + s2] = T::lit(rng.random_range(-1.0..1.0));
            c[base + s2] = T::lit(rng.random_range(0.0..1.0));
        }
    }
    let mut mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    let mut mu0: Vec<T> = mu.iter().map(|x| T::lit(*x)).collect();
    let resid = T::one() - mu0.iter().copied().sum::<T>();
    mu0[0] += resid;
    CmdpModel::new(n, n_actions, p, r, c, mu0, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        let err = CmdpModel::new(1, 1, vec![0.9f64], vec![0.0], vec![0.0], vec![1.0], 0.9);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let err = CmdpModel::new(1, 1, vec![1.0f64], vec![0.0], vec![-1.0], vec![1.0], 0.9);
        assert!(err.is_err());
        let err = CmdpModel::new(1, 1, vec![1.0f64], vec![0.0], vec![0.0], vec![1.0], 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn chain_is_valid_and_stationary() {
        let m = ChainSpec::graded(8, 4.0, 12.0, 0.9f64).build().unwrap();
        let n = m.n_states();
        // μ0 P = μ0 for every action
        for a in 0..m.n_actions() {
            for s2 in 0..n {
                let flow: f64 = (0..n).map(|s| m.mu0()[s] * m.p(s, a, s2)).sum();
                assert!((flow - m.mu0()[s2]).abs() < 1e-14);
            }
        }
        assert!(m.expected_cost().iter().all(|c| *c >= 0.0));
    }

    #[test]
    fn grid_goal_is_absorbing() {
        let g = GridSpec {
            width: 3,
            height: 3,
            slip: 0.1,
            start: (0, 0),
            goal: (2, 2),
            cost_cells: vec![(1, 1)],
            goal_reward: 1.0f64,
            step_reward: 0.0,
            gamma: 0.95,
        }
        .build()
        .unwrap();
        assert!(g.is_absorbing(8));
        assert!(!g.is_absorbing(0));
    }

    #[test]
    fn random_models_validate() {
        for seed in 0..20 {
            random_model::<f64>(5, 3, 0.9, seed).unwrap();
            random_model::<f32>(4, 2, 0.9, seed).unwrap();
        }
    }
}
