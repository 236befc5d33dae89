//! Derivative-free minimization of the dual `g(η, λ)`: a log-spaced grid,
//! then compass search in `(ln η, ln(1+λ))`.

use ccpo_core::cvi::{DualProblem, DualVars};

#[derive(Debug, Clone, Copy)]
pub struct GridMinimum {
    pub duals: DualVars<f64>,
    pub value: f64,
}

const LOG_ETA: (f64, f64) = (-13.8, 9.3);
const LOG_LAMBDA: (f64, f64) = (0.0, 9.3);

fn eval(p: &DualProblem<f64>, u: f64, v: f64) -> f64 {
    let u = u.clamp(LOG_ETA.0, LOG_ETA.1);
    let v = if p.epsilon.is_finite() {
        v.clamp(LOG_LAMBDA.0, LOG_LAMBDA.1)
    } else {
        0.0
    };
    let g = p.value(DualVars {
        eta: u.exp(),
        lambda: v.exp_m1(),
    });
    if g.is_nan() {
        f64::INFINITY
    } else {
        g
    }
}

pub fn grid_minimize(p: &DualProblem<f64>) -> GridMinimum {
    let (nu, nv) = (120, 100);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=nu {
        let u = LOG_ETA.0 + (LOG_ETA.1 - LOG_ETA.0) * i as f64 / nu as f64;
        for j in 0..=nv {
            let v = LOG_LAMBDA.0 + (LOG_LAMBDA.1 - LOG_LAMBDA.0) * j as f64 / nv as f64;
            let g = eval(p, u, v);
            if g < best.0 {
                best = (g, u, v);
            }
        }
    }
    let (mut g, mut u, mut v) = best;
    let mut step = (LOG_ETA.1 - LOG_ETA.0) / nu as f64;
    let dirs = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    while step > 1e-12 {
        let mut improved = false;
        for (du, dv) in dirs {
            let (cu, cv) = (u + step * du, v + step * dv);
            let cg = eval(p, cu, cv);
            if cg < g {
                (g, u, v) = (
                    cg,
                    cu.clamp(LOG_ETA.0, LOG_ETA.1),
                    cv.clamp(LOG_LAMBDA.0, LOG_LAMBDA.1),
                );
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    GridMinimum {
        duals: DualVars {
            eta: u.exp(),
            lambda: if p.epsilon.is_finite() {
                v.exp_m1()
            } else {
                0.0
            },
        },
        value: g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_single_state() {
        // λ irrelevant (zero cost), so g(η) = ηκ + η·ln E_π exp(Q_r/η)
        let p = DualProblem::new(
            2,
            vec![1.0],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            1.0,
            0.1,
        )
        .unwrap();
        let m = grid_minimize(&p);
        let brute = (1..200_000)
            .map(|k| {
                let eta = k as f64 * 1e-4;
                eta * 0.1 + eta * (0.5 + 0.5 * (1.0 / eta).exp()).ln()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((m.value - brute).abs() < 1e-6, "{} vs {brute}", m.value);
        assert!(m.duals.lambda < 1e-6);
    }
}
