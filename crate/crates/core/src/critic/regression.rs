//! Polynomial threshold regression and the estimation-error bound.
//!
//! Thresholds are normalized as `ε̂ = (ε − ε_L) / ε_H`. The divisor is `ε_H`,
//! not `ε_H − ε_L`, so `ε̂` only reaches 1 when `ε_L = 0`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub fn normalize_threshold<T: Real>(epsilon: T, eps_l: T, eps_h: T) -> Result<T> {
    if !(eps_h > T::zero()) {
        return Err(Error::arg("eps_h", format!("must be > 0, got {eps_h}")));
    }
    Ok((epsilon - eps_l) / eps_h)
}

/// Inverse of `normalize_threshold`.
pub fn denormalize_threshold<T: Real>(eps_hat: T, eps_l: T, eps_h: T) -> T {
    eps_hat * eps_h + eps_l
}

/// Monomial features `[1, x, …, x^p]`.
pub fn poly_row<T: Real>(x: T, degree: usize) -> Vec<T> {
    let mut row = Vec::with_capacity(degree + 1);
    let mut v = T::one();
    for _ in 0..=degree {
        row.push(v);
        v *= x;
    }
    row
}

/// Design matrix over (normalized) behavior thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyDesign<T> {
    thresholds: Vec<T>,
    degree: usize,
    x: Matrix<T>,
    xtx_inv: Matrix<T>,
    condition: T,
}

impl<T: Real> PolyDesign<T> {
    pub fn new(thresholds: Vec<T>, degree: usize) -> Result<Self> {
        let n = thresholds.len();
        if n < degree + 1 {
            return Err(Error::arg(
                "thresholds",
                format!("{n} points cannot identify a degree-{degree} polynomial"),
            ));
        }
        let rows: Vec<Vec<T>> = thresholds.iter().map(|t| poly_row(*t, degree)).collect();
        let x = Matrix::from_rows(&rows);
        let xtx = x.transpose().matmul(&x);
        let condition = xtx.condition_inf();
        let singular = || Error::SingularDesign {
            condition: condition.as_f64(),
        };
        if !condition.is_finite() || condition * T::epsilon() > T::lit(1e-2) {
            return Err(singular());
        }
        let xtx_inv = xtx.inverse().map_err(|_| singular())?;
        Ok(Self {
            thresholds,
            degree,
            x,
            xtx_inv,
            condition,
        })
    }

    /// `N` evenly spaced points `j/(N−1)` on `[0, 1]`; `{0.5}` when `N = 1`.
    pub fn evenly_spaced(n: usize, degree: usize) -> Result<Self> {
        let pts = match n {
            0 => Vec::new(),
            1 => vec![T::lit(0.5)],
            _ => (0..n)
                .map(|j| T::from_usize_lossy(j) / T::from_usize_lossy(n - 1))
                .collect(),
        };
        Self::new(pts, degree)
    }

    pub fn n(&self) -> usize {
        self.thresholds.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn xtx_inv(&self) -> &Matrix<T> {
        &self.xtx_inv
    }

    /// Infinity-norm condition number of `XᵀX`.
    pub fn condition(&self) -> T {
        self.condition
    }

    /// `xᵀ(XᵀX)⁻¹x` at normalized threshold `eps_hat`.
    pub fn leverage_sq(&self, eps_hat: T) -> T {
        self.xtx_inv.quad_form(&poly_row(eps_hat, self.degree))
    }
}

/// Per-dimension OLS fit of `z_i(ε̂) ≈ β_iᵀx(ε̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit<T> {
    /// `M × (p+1)`, row-major.
    pub coefficients: Vec<T>,
    pub dim: usize,
    pub degree: usize,
    /// Residual sums of squares per dimension.
    pub rss: Vec<T>,
    /// `RSS / (N − p − 1)` per dimension; `None` without residual degrees of freedom.
    pub sigma2_hat: Option<Vec<T>>,
    /// Residuals, `N × M` row-major.
    pub residuals: Vec<T>,
}

impl<T: Real> PolyFit<T> {
    pub fn coefficients_of(&self, i: usize) -> &[T] {
        &self.coefficients[i * (self.degree + 1)..(i + 1) * (self.degree + 1)]
    }

    /// Pooled residual standard deviation across dimensions.
    pub fn sigma_hat(&self) -> Option<T> {
        self.sigma2_hat
            .as_ref()
            .map(|s| (s.iter().copied().sum::<T>() / T::from_usize_lossy(s.len().max(1))).sqrt())
    }

    /// Largest absolute Pearson correlation between residual columns.
    /// Zero when fewer than three observations or a column is constant.
    pub fn max_residual_correlation(&self) -> T {
        let m = self.dim;
        let n = self.residuals.len() / m.max(1);
        if n < 3 || m < 2 {
            return T::zero();
        }
        let col = |i: usize| -> Vec<T> { (0..n).map(|j| self.residuals[j * m + i]).collect() };
        let cols: Vec<Vec<T>> = (0..m).map(col).collect();
        let centered: Vec<(Vec<T>, T)> = cols
            .iter()
            .map(|c| {
                let mean = c.iter().copied().sum::<T>() / T::from_usize_lossy(n);
                let v: Vec<T> = c.iter().map(|x| *x - mean).collect();
                let norm = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
                (v, norm)
            })
            .collect();
        let tiny = T::epsilon().sqrt();
        let mut best = T::zero();
        for i in 0..m {
            for j in i + 1..m {
                let (a, na) = &centered[i];
                let (b, nb) = &centered[j];
                if *na <= tiny || *nb <= tiny {
                    continue;
                }
                let r = a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>() / (*na * *nb);
                best = best.max(r.abs());
            }
        }
        best
    }
}

/// `β̂ = (XᵀX)⁻¹Xᵀz` independently for each of the `M` embedding dimensions.
pub fn fit_z_poly<T: Real>(design: &PolyDesign<T>, z_samples: &[Vec<T>]) -> Result<PolyFit<T>> {
    let n = design.n();
    if z_samples.len() != n {
        return Err(Error::arg(
            "z_samples",
            format!("{} samples for {n} design points", z_samples.len()),
        ));
    }
    let m = z_samples.first().map_or(0, Vec::len);
    if m == 0 || z_samples.iter().any(|z| z.len() != m) {
        return Err(Error::arg(
            "z_samples",
            "vectors must share a nonzero length",
        ));
    }
    let k = design.degree + 1;
    let hat = design.xtx_inv.matmul(&design.x.transpose()); // (p+1) × N
    let mut coefficients = vec![T::zero(); m * k];
    let mut residuals = vec![T::zero(); n * m];
    let mut rss = vec![T::zero(); m];
    for i in 0..m {
        let y: Vec<T> = z_samples.iter().map(|z| z[i]).collect();
        let beta = hat.matvec(&y);
        let fitted = design.x.matvec(&beta);
        for j in 0..n {
            let r = y[j] - fitted[j];
            residuals[j * m + i] = r;
            rss[i] += r * r;
        }
        coefficients[i * k..(i + 1) * k].copy_from_slice(&beta);
    }
    let dof = n as isize - k as isize;
    let sigma2_hat = (dof > 0).then(|| {
        let d = T::from_usize_lossy(dof as usize);
        rss.iter().map(|r| *r / d).collect()
    });
    Ok(PolyFit {
        coefficients,
        dim: m,
        degree: design.degree,
        rss,
        sigma2_hat,
        residuals,
    })
}

/// Acklam's rational approximation of the standard normal quantile
/// (relative error below 1.2e-9 on `(0, 1)`).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}

/// Upper `α/2` quantile `z_{α/2}` of the standard normal.
pub fn z_alpha_half(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    Ok(-inverse_normal_cdf(alpha / 2.0))
}

/// Prediction variance and half-width for one embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    /// `σ²·xᵀ(XᵀX)⁻¹x`.
    pub variance: T,
    /// `z_{α/2}·√variance`.
    pub half_width: T,
}

impl<T: Real> Interval<T> {
    /// Half-width for `Q = ψᵀz` with `‖ψ‖_∞ ≤ K` over `M` dimensions:
    /// `z_{α/2}·√(σ²·M·K²·xᵀ(XᵀX)⁻¹x)`.
    pub fn at_q_level(&self, k: T, m: usize) -> T {
        self.half_width * k * T::from_usize_lossy(m).sqrt()
    }
}

pub fn prediction_interval<T: Real>(
    design: &PolyDesign<T>,
    sigma: T,
    eps_hat: T,
    alpha: f64,
) -> Result<Interval<T>> {
    let z = T::lit(z_alpha_half(alpha)?);
    let variance = sigma * sigma * design.leverage_sq(eps_hat);
    Ok(Interval {
        variance,
        half_width: z * variance.max(T::zero()).sqrt(),
    })
}

/// `max_{ε̂ ∈ [0,1]} √(xᵀ(XᵀX)⁻¹x)` for the evenly spaced `N`-point design,
/// scanned on a grid of step at most `grid_resolution`.
pub fn leverage_max<T: Real>(p: usize, n: usize, grid_resolution: f64) -> Result<T> {
    if !(grid_resolution > 0.0 && grid_resolution <= 1e-4) {
        return Err(Error::arg("grid_resolution", "must lie in (0, 1e-4]"));
    }
    let design = PolyDesign::<T>::evenly_spaced(n, p)?;
    let steps = (1.0 / grid_resolution).ceil() as usize;
    let best = (0..=steps)
        .map(|i| design.leverage_sq(T::from_usize_lossy(i) / T::from_usize_lossy(steps)))
        .fold(T::zero(), T::max);
    Ok(best.sqrt())
}

pub const DEFAULT_GRID_RESOLUTION: f64 = 1e-4;

/// Power law `leverage_max(p, N) ≤ B / N^β` fitted over a range of `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFit<T> {
    pub degree: usize,
    /// Inflated constant: the bound dominates every fitted point.
    pub b: T,
    pub beta: T,
    /// `exp(intercept)` before inflation.
    pub b_raw: T,
    /// `max_N (leverage_max − B/N^β)`, ≤ 0 after inflation.
    pub max_violation: T,
    pub points: Vec<(usize, T)>,
}

impl<T: Real> BoundFit<T> {
    pub fn bound(&self, n: usize) -> T {
        self.b / T::from_usize_lossy(n).powf(self.beta)
    }
}

/// Least-squares fit of `log leverage_max` on `log N`, then `B` is scaled up
/// just enough to cover every point.
#[allow(non_snake_case)]
pub fn fit_B_beta<T: Real>(p: usize, n_range: &[usize]) -> Result<BoundFit<T>> {
    if n_range.len() < 3 {
        return Err(Error::arg("n_range", "need at least three values of N"));
    }
    if let Some(n) = n_range.iter().find(|n| **n < p + 1) {
        return Err(Error::arg(
            "n_range",
            format!("N = {n} < p + 1 = {}", p + 1),
        ));
    }
    let points: Vec<(usize, T)> = n_range
        .iter()
        .map(|&n| leverage_max::<T>(p, n, DEFAULT_GRID_RESOLUTION).map(|l| (n, l)))
        .collect::<Result<_>>()?;
    let xs: Vec<T> = points
        .iter()
        .map(|(n, _)| T::from_usize_lossy(*n).ln())
        .collect();
    let ys: Vec<T> = points.iter().map(|(_, l)| l.ln()).collect();
    let k = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / k;
    let my = ys.iter().copied().sum::<T>() / k;
    let sxx: T = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    if sxx <= T::zero() {
        return Err(Error::arg("n_range", "values of N must differ"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let beta = -slope;
    let b_raw = intercept.exp();
    let ratio = points
        .iter()
        .map(|(n, l)| *l * T::from_usize_lossy(*n).powf(beta) / b_raw)
        .fold(T::zero(), T::max);
    let b = b_raw * ratio.max(T::one());
    let max_violation = points
        .iter()
        .map(|(n, l)| *l - b / T::from_usize_lossy(*n).powf(beta))
        .fold(T::neg_infinity(), T::max);
    Ok(BoundFit {
        degree: p,
        b,
        beta,
        b_raw,
        max_violation,
        points,
    })
}

/// `z_{α/2} · B(p)/N^β(p) · √(σ²K²M)`.
pub fn estimation_error_bound<T: Real>(
    fit: &BoundFit<T>,
    n: usize,
    sigma: T,
    k: T,
    m: usize,
    alpha: f64,
) -> Result<T> {
    let z = T::lit(z_alpha_half(alpha)?);
    Ok(z * fit.bound(n) * (sigma * sigma * k * k * T::from_usize_lossy(m)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_threshold(10.0, 10.0, 70.0).unwrap(), 0.0);
        assert!((normalize_threshold(20.0f64, 10.0, 70.0).unwrap() - 0.142857).abs() < 1e-6);
        assert_eq!(normalize_threshold(80.0, 10.0, 70.0).unwrap(), 1.0);
        assert!(normalize_threshold(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn exact_line_fit() {
        let d = PolyDesign::new(vec![0.0, 0.5, 1.0], 1).unwrap();
        let z: Vec<Vec<f64>> = [0.0, 0.5, 1.0]
            .iter()
            .map(|e| vec![1.0 + 2.0 * e])
            .collect();
        let fit = fit_z_poly(&d, &z).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.rss[0] < 1e-24);
    }

    #[test]
    fn constant_fit_is_mean() {
        let d = PolyDesign::new(vec![0.1, 0.4, 0.9, 0.3], 0).unwrap();
        let z = vec![vec![1.0f64], vec![2.0], vec![4.0], vec![5.0]];
        let fit = fit_z_poly(&d, &z).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!(fit.sigma2_hat.is_some());
    }

    #[test]
    fn singular_design_names_condition() {
        let err = PolyDesign::new(vec![0.5, 0.5, 0.5], 1).unwrap_err();
        assert!(matches!(err, Error::SingularDesign { .. }));
        assert!(err.to_string().contains("condition"));
        assert!(PolyDesign::<f64>::new(vec![0.5], 1).is_err());
    }

    #[test]
    fn interval_examples() {
        let d = PolyDesign::<f64>::evenly_spaced(4, 0).unwrap();
        let iv = prediction_interval(&d, 2.0, 0.3, 0.05).unwrap();
        assert!((iv.variance - 1.0).abs() < 1e-12);
        assert!((iv.half_width - 1.96).abs() < 1e-3);
        assert_eq!(
            prediction_interval(&d, 0.0, 0.3, 0.05).unwrap().half_width,
            0.0
        );
        let d = PolyDesign::<f64>::new(vec![0.0, 1.0], 1).unwrap();
        assert!((d.leverage_sq(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        assert!((z_alpha_half(0.05).unwrap() - 1.959963984540054).abs() < 1e-7);
        assert!((z_alpha_half(0.01).unwrap() - 2.5758293035489).abs() < 1e-7);
        assert!((inverse_normal_cdf(0.5)).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.001) + 3.090232306167813).abs() < 1e-7);
        assert!(z_alpha_half(0.0).is_err());
    }

    #[test]
    fn leverage_examples() {
        assert!((leverage_max::<f64>(0, 4, 1e-4).unwrap() - 0.5).abs() < 1e-12);
        assert!((leverage_max::<f64>(1, 2, 1e-4).unwrap() - 1.0).abs() < 1e-12);
        assert!(leverage_max::<f64>(0, 4, 1e-3).is_err());
    }

    #[test]
    fn b_beta_for_constant_model() {
        let n: Vec<usize> = (1..=20).collect();
        let fit = fit_B_beta::<f64>(0, &n).unwrap();
        assert!((fit.beta - 0.5).abs() < 1e-6);
        assert!((fit.b - 1.0).abs() < 1e-6);
        assert!(fit.max_violation <= 0.0);
        assert!(fit_B_beta::<f64>(0, &[2, 3]).is_err());
        assert!(fit_B_beta::<f64>(2, &[2, 3, 4]).is_err());
    }

    #[test]
    fn bound_example_and_scaling() {
        let n: Vec<usize> = (1..=20).collect();
        let fit = fit_B_beta::<f64>(0, &n).unwrap();
        let b = estimation_error_bound(&fit, 4, 1.0, 1.0, 1, 0.05).unwrap();
        assert!((b - 0.98).abs() < 1e-3);
        assert_eq!(
            estimation_error_bound(&fit, 4, 0.0, 1.0, 1, 0.05).unwrap(),
            0.0
        );
        let b2 = estimation_error_bound(&fit, 4, 2.0, 3.0, 2, 0.05).unwrap();
        assert!((b2 - b * 6.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
