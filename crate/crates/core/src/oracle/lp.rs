//! Dense two-phase simplex for small linear programs.
//!
//! `maximize cᵀx  s.t.  A_eq x = b_eq,  A_le x ≤ b_le,  x ≥ 0`.
//! Dantzig pricing; after a run of non-improving pivots it switches to
//! Bland's rule until the objective moves again.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    n: usize,
    objective: Vec<T>,
    eq: Vec<(Vec<T>, T)>,
    le: Vec<(Vec<T>, T)>,
}

const MAX_PIVOTS: usize = 100_000;
const STALL_LIMIT: usize = 50;

impl<T: Real> LinearProgram<T> {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n: n_vars,
            objective: vec![T::zero(); n_vars],
            eq: Vec::new(),
            le: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn set_objective(&mut self, c: Vec<T>) {
        assert_eq!(c.len(), self.n, "objective length");
        self.objective = c;
    }

    pub fn add_eq(&mut self, row: Vec<T>, rhs: T) {
        assert_eq!(row.len(), self.n, "constraint length");
        self.eq.push((row, rhs));
    }

    pub fn add_le(&mut self, row: Vec<T>, rhs: T) {
        assert_eq!(row.len(), self.n, "constraint length");
        self.le.push((row, rhs));
    }

    pub fn solve(&self) -> LpSolution<T> {
        let n = self.n;
        let n_slack = self.le.len();
        let rows: Vec<(&Vec<T>, T, Option<T>)> = self
            .eq
            .iter()
            .map(|(r, b)| (r, *b, None))
            .chain(self.le.iter().map(|(r, b)| (r, *b, Some(T::one()))))
            .collect();
        let m = rows.len();
        let needs_art: Vec<bool> = rows
            .iter()
            .map(|(_, b, slack)| slack.is_none() || *b < T::zero())
            .collect();
        let n_art = needs_art.iter().filter(|x| **x).count();
        let ncols = n + n_slack + n_art;
        let w = ncols + 1;

        let mut scale = T::one();
        for (r, b, _) in &rows {
            for v in r.iter() {
                scale = scale.max(v.abs());
            }
            scale = scale.max(b.abs());
        }
        let tol = T::epsilon().sqrt() * T::lit(1e-2) * scale;

        let mut tab = Tableau {
            m,
            w,
            a: vec![T::zero(); m * w],
            obj: vec![T::zero(); w],
            basis: vec![0; m],
            tol,
        };
        let mut slack_idx = n;
        let mut art_idx = n + n_slack;
        for (i, (row, b, slack)) in rows.iter().enumerate() {
            let sign = if *b < T::zero() { -T::one() } else { T::one() };
            for j in 0..n {
                tab.a[i * w + j] = sign * row[j];
            }
            tab.a[i * w + ncols] = sign * *b;
            if let Some(s) = slack {
                tab.a[i * w + slack_idx] = sign * *s;
                if !needs_art[i] {
                    tab.basis[i] = slack_idx;
                }
                slack_idx += 1;
            }
            if needs_art[i] {
                tab.a[i * w + art_idx] = T::one();
                tab.basis[i] = art_idx;
                art_idx += 1;
            }
        }

        let mut pivots = 0;
        let art_start = n + n_slack;
        if n_art > 0 {
            let mut c1 = vec![T::zero(); ncols];
            for c in c1.iter_mut().skip(art_start) {
                *c = -T::one();
            }
            tab.set_objective(&c1);
            let allowed = vec![true; ncols];
            if tab.run(&allowed, &mut pivots) == LpStatus::Unbounded {
                // cannot happen: phase 1 is bounded by zero
                return self.failed(LpStatus::Infeasible, pivots);
            }
            if tab.value() < -tol * T::lit(10.0) {
                return self.failed(LpStatus::Infeasible, pivots);
            }
            for i in 0..m {
                if tab.basis[i] >= art_start {
                    if let Some(j) = (0..art_start).find(|&j| tab.a[i * w + j].abs() > tab.tol) {
                        tab.pivot(i, j);
                        pivots += 1;
                    }
                }
            }
        }

        let mut c2 = vec![T::zero(); ncols];
        c2[..n].copy_from_slice(&self.objective);
        tab.set_objective(&c2);
        let allowed: Vec<bool> = (0..ncols).map(|j| j < art_start).collect();
        let status = tab.run(&allowed, &mut pivots);
        if status != LpStatus::Optimal {
            return self.failed(status, pivots);
        }
        let mut x = vec![T::zero(); n];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                x[b] = tab.a[i * w + ncols].max(T::zero());
            }
        }
        let objective = x.iter().zip(&self.objective).map(|(a, b)| *a * *b).sum();
        LpSolution {
            status,
            x,
            objective,
            pivots,
        }
    }

    fn failed(&self, status: LpStatus, pivots: usize) -> LpSolution<T> {
        LpSolution {
            status,
            x: vec![T::zero(); self.n],
            objective: T::nan(),
            pivots,
        }
    }
}

struct Tableau<T> {
    m: usize,
    w: usize,
    a: Vec<T>,
    obj: Vec<T>,
    basis: Vec<usize>,
    tol: T,
}

impl<T: Real> Tableau<T> {
    /// Installs cost vector `c` as reduced costs relative to the current basis.
    fn set_objective(&mut self, c: &[T]) {
        let w = self.w;
        self.obj[..c.len()].copy_from_slice(c);
        self.obj[w - 1] = T::zero();
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != T::zero() {
                for j in 0..w {
                    self.obj[j] -= cb * self.a[i * w + j];
                }
            }
        }
    }

    fn value(&self) -> T {
        -self.obj[self.w - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != T::zero() {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * *y;
                }
                row[c] = T::zero();
            }
        }
        let f = self.obj[c];
        if f != T::zero() {
            for (x, y) in self.obj.iter_mut().zip(prow.iter()) {
                *x -= f * *y;
            }
            self.obj[c] = T::zero();
        }
        for row in self.a.chunks_mut(w) {
            let rhs = &mut row[w - 1];
            if *rhs < T::zero() && *rhs > -self.tol {
                *rhs = T::zero();
            }
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allowed: &[bool], pivots: &mut usize) -> LpStatus {
        let w = self.w;
        let mut stall = 0;
        let mut best = self.value();
        loop {
            if *pivots >= MAX_PIVOTS {
                log::warn!("simplex pivot limit reached");
                return LpStatus::Optimal;
            }
            let bland = stall > STALL_LIMIT;
            let mut enter = None;
            let mut best_rc = self.tol;
            for j in 0..w - 1 {
                if !allowed[j] || self.obj[j] <= self.tol {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if self.obj[j] > best_rc {
                    best_rc = self.obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return LpStatus::Optimal;
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let aic = self.a[i * w + c];
                if aic > self.tol {
                    let ratio = self.a[i * w + w - 1] / aic;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - self.tol
                                || (ratio <= lr + self.tol && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return LpStatus::Unbounded;
            };
            self.pivot(r, c);
            *pivots += 1;
            let v = self.value();
            if v > best + self.tol {
                best = v;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![3.0, 5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_negative_rhs() {
        // max x + y, x + y = 1, -x ≤ -0.25 (x ≥ 0.25), y ≤ 0.5
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_le(vec![-1.0, 0.0], -0.25);
        lp.add_le(vec![0.0, 1.0], 0.5);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.set_objective(vec![1.0]);
        lp.add_eq(vec![1.0], 1.0);
        lp.add_le(vec![1.0], 0.5);
        assert_eq!(lp.solve().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(lp.solve().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![1.0, 3.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0], 2.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn f32_instantiation() {
        let mut lp = LinearProgram::<f32>::new(2);
        lp.set_objective(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, 2.0], 4.0);
        lp.add_le(vec![3.0, 1.0], 6.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.8).abs() < 1e-5);
    }
}
