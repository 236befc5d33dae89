use ccpo_core::cmdp::{random_model, ChainSpec, CmdpModel, Signal, TabularPolicy};
use ccpo_core::oracle::{
    exact_q, per_threshold_ground_truth, solve_cmdp_lp, value_iteration, SolveStatus,
};
use proptest::prelude::*;

const G: f64 = 0.9;

/// State 0: safe action (r 0.5, c 0) or risky action (r 2, c 1). State 1 is
/// inert. Both actions share the transition kernel.
fn two_state() -> CmdpModel<f64> {
    let row0 = [0.7, 0.3];
    let row1 = [0.4, 0.6];
    let mut p = Vec::new();
    for row in [row0, row0, row1, row1] {
        p.extend_from_slice(&row);
    }
    let r = vec![0.5, 0.5, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0];
    let c = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    CmdpModel::new(2, 2, p, r, c, vec![1.0, 0.0], G).unwrap()
}

/// Closed-form returns for π(risky|0) = θ by the explicit 2×2 inverse.
fn family_returns(theta: f64) -> (f64, f64) {
    let (p00, p01, p10, p11) = (0.7, 0.3, 0.4, 0.6);
    let a = [[1.0 - G * p00, -G * p01], [-G * p10, 1.0 - G * p11]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    // V(0) = (a11·f0 − a01·f1)/det with f1 = 0
    let v0 = |f0: f64| a[1][1] * f0 / det;
    (v0(0.5 + 1.5 * theta), v0(theta))
}

#[test]
fn lp_matches_mixing_enumeration() {
    let m = two_state();
    let steps = 10_000;
    let table: Vec<(f64, f64)> = (0..=steps)
        .map(|k| family_returns(k as f64 / steps as f64))
        .collect();
    let max_jump = table
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .fold(0.0, f64::max);
    let vc_max = table.last().unwrap().1;
    for frac in [0.0, 0.1, 0.33, 0.5, 0.77, 1.0, 2.0] {
        let eps = frac * vc_max;
        let best = table
            .iter()
            .filter(|(_, vc)| *vc <= eps)
            .map(|(vr, _)| *vr)
            .fold(f64::NEG_INFINITY, f64::max);
        let sol = solve_cmdp_lp(&m, eps).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(
            best <= sol.v_r + 1e-9,
            "eps {eps}: enum {best} > lp {}",
            sol.v_r
        );
        assert!(
            sol.v_r - best <= max_jump + 1e-9,
            "eps {eps}: gap {}",
            sol.v_r - best
        );
    }
}

fn hand_value_iteration(m: &CmdpModel<f64>) -> Vec<f64> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut v = vec![0.0; ns];
    for _ in 0..2000 {
        v = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        (0..ns)
                            .map(|s2| m.p(s, a, s2) * (m.reward(s, a, s2) + m.gamma() * v[s2]))
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v
}

#[test]
fn infinite_budget_matches_value_iteration() {
    for seed in 0..5 {
        let m = random_model::<f64>(6, 3, G, seed).unwrap();
        let v = hand_value_iteration(&m);
        let opt: f64 = v.iter().zip(m.mu0()).map(|(a, b)| a * b).sum();
        let sol = solve_cmdp_lp(&m, f64::INFINITY).unwrap();
        assert!(
            (sol.v_r - opt).abs() < 1e-6,
            "seed {seed}: {} vs {opt}",
            sol.v_r
        );
        let (v_lib, _) = value_iteration(&m, 1e-13, 10_000);
        for (a, b) in v_lib.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn exact_q_zero_reward() {
    let base = random_model::<f64>(4, 2, G, 3).unwrap();
    let n = 4 * 2 * 4;
    let p: Vec<f64> = (0..n).map(|i| base.p(i / 8, (i / 4) % 2, i % 4)).collect();
    let m = CmdpModel::new(4, 2, p, vec![0.0; n], vec![0.0; n], base.mu0().to_vec(), G).unwrap();
    let q = exact_q(&m, &TabularPolicy::uniform(4, 2), Signal::Reward).unwrap();
    assert!(q.iter().all(|x| *x == 0.0));
}

#[test]
fn ground_truth_grid() {
    let m = ChainSpec::graded(8, 4.0, 12.0, G).build().unwrap();
    let grid = [0.5, 1.0, 2.0, 2.0];
    let gt = per_threshold_ground_truth(&m, &grid).unwrap();
    assert_eq!(gt[2], gt[3]);
    for (g, eps) in gt.iter().zip(grid) {
        let direct = solve_cmdp_lp(&m, eps).unwrap();
        assert_eq!(g.solution, direct);
        let q = exact_q(&m, &direct.policy, Signal::Cost).unwrap();
        assert_eq!(g.q_c, q);
    }
    assert!(per_threshold_ground_truth(&m, &[]).is_err());
}

#[test]
fn frontier_is_monotone_and_concave() {
    let m = ChainSpec::graded(8, 4.0, 12.0, G).build().unwrap();
    let grid: Vec<f64> = (0..=40).map(|i| 2.0 * i as f64).collect();
    let v: Vec<f64> = per_threshold_ground_truth(&m, &grid)
        .unwrap()
        .iter()
        .map(|g| g.solution.v_r)
        .collect();
    for w in v.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
    for w in v.windows(3) {
        assert!(w[1] >= 0.5 * (w[0] + w[2]) - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flow_conservation_on_random_models(seed in 0u64..10_000, frac in 0.0f64..1.5) {
        let m = random_model::<f64>(5, 3, 0.85, seed).unwrap();
        let free = solve_cmdp_lp(&m, f64::INFINITY).unwrap();
        let eps = frac * free.v_c;
        let sol = solve_cmdp_lp(&m, eps).unwrap();
        if sol.is_feasible() {
            prop_assert!(sol.flow_residual(&m) < 1e-8);
            prop_assert!(sol.occupancy.iter().all(|d| *d >= 0.0));
            prop_assert!(sol.v_c <= eps + 1e-8);
            if free.v_c > eps + 1e-9 {
                prop_assert!((sol.v_c - eps).abs() < 1e-6);
            }
        }
    }
}
