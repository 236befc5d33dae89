//! Leverage table and fitted `B/N^β` envelopes.

use std::io::Write;

use ccpo_core::critic::{fit_B_beta, leverage_max};
use ccpo_core::fmt::format_g;

use crate::CliError;

pub const BOUNDS_HEADER: [&str; 5] = ["p", "N", "leverage", "B", "beta"];

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub p: usize,
    pub n: usize,
    pub leverage: f64,
    pub b: f64,
    pub beta: f64,
}

/// One row per `(p, N)` with `N` in `p+1..=n_max`, sorted by `(p, N)`.
pub fn bounds_table(degrees: &[usize], n_max: usize) -> Result<Vec<BoundsRow>, CliError> {
    let mut ps = degrees.to_vec();
    ps.sort_unstable();
    ps.dedup();
    let mut rows = Vec::new();
    for p in ps {
        let range: Vec<usize> = (p + 1..=n_max).collect();
        let fit = fit_B_beta::<f64>(p, &range)
            .map_err(|e| CliError::Config(format!("key `n_max` too small for degree {p}: {e}")))?;
        for &(n, leverage) in &fit.points {
            rows.push(BoundsRow {
                p,
                n,
                leverage,
                b: fit.b,
                beta: fit.beta,
            });
        }
    }
    rows.sort_by_key(|r| (r.p, r.n));
    Ok(rows)
}

pub fn write_bounds_csv<W: Write>(rows: &[BoundsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUNDS_HEADER)?;
    for r in rows {
        w.write_record([
            r.p.to_string(),
            r.n.to_string(),
            format_g(r.leverage),
            format_g(r.b),
            format_g(r.beta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `leverage_max(p, N)` alone, without a fit.
pub fn leverage(p: usize, n: usize) -> Result<f64, CliError> {
    leverage_max::<f64>(p, n, 1e-4).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_fit_is_exact() {
        let rows = bounds_table(&[0], 20).unwrap();
        assert_eq!(rows.len(), 20);
        assert!((rows[0].beta - 0.5).abs() < 1e-9);
        assert!((rows[0].b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rows_sorted_and_dominated() {
        let rows = bounds_table(&[2, 0, 1], 15).unwrap();
        assert!(rows.windows(2).all(|w| (w[0].p, w[0].n) < (w[1].p, w[1].n)));
        for r in &rows {
            assert!(r.leverage <= r.b / (r.n as f64).powf(r.beta) + 1e-15);
        }
    }

    #[test]
    fn too_few_points_is_a_config_error() {
        assert!(matches!(bounds_table(&[3], 5), Err(CliError::Config(_))));
    }
}
