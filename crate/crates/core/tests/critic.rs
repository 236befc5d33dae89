use ccpo_core::cmdp::{random_model, CmdpModel, Signal, TabularPolicy, TrajectoryStep};
use ccpo_core::critic::{
    fit_B_beta, fit_z_poly, leverage_max, q_distribution_compare, Batch, FeatureMap, FitMode,
    PolyDesign, ThresholdEmbedding, VersatileQ,
};
use ccpo_core::oracle::{exact_q, per_threshold_ground_truth};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Every `(s, a, s')` triple weighted by `P(s'|s,a)`: the MSBE over this batch
/// is the exact expected Bellman error under uniform state-action coverage.
fn exhaustive_batch(m: &CmdpModel<f64>) -> (Vec<TrajectoryStep<f64>>, Vec<f64>) {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut steps = Vec::new();
    let mut weights = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            for s2 in 0..ns {
                let p = m.p(s, a, s2);
                if p > 0.0 {
                    steps.push(TrajectoryStep {
                        state: s,
                        action: a,
                        next_state: s2,
                        reward: m.reward(s, a, s2),
                        cost: m.cost(s, a, s2),
                        behavior_threshold: 0.0,
                        terminal: false,
                    });
                    weights.push(p);
                }
            }
        }
    }
    (steps, weights)
}

fn one_hot_critic(ns: usize, na: usize) -> VersatileQ<f64> {
    let psi = FeatureMap::one_hot(ns, na);
    let z = ThresholdEmbedding::new(ns * na, 0, 0.0, 1.0).unwrap();
    VersatileQ::new(psi, z, vec![0.0], FitMode::TwoStage).unwrap()
}

fn two_state_chain() -> CmdpModel<f64> {
    let p = vec![0.8, 0.2, 0.1, 0.9, 0.5, 0.5, 0.3, 0.7];
    let r = vec![1.0, 1.0, 0.0, 2.0, 0.0, 0.5, 1.0, 1.0];
    let c = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.5];
    CmdpModel::new(2, 2, p, r, c, vec![0.5, 0.5], 0.9).unwrap()
}

#[test]
fn msbe_converges_to_exact_q() {
    let m = two_state_chain();
    let pi = TabularPolicy::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.4]]);
    let (steps, weights) = exhaustive_batch(&m);
    for which in [Signal::Reward, Signal::Cost] {
        let mut critic = one_hot_critic(2, 2);
        let batch = [Batch {
            behavior: 0,
            steps: &steps,
            weights: Some(&weights),
        }];
        for _ in 0..4000 {
            critic.msbe_update(&batch, &pi, which, 0.9, 1.0).unwrap();
            critic.polyak_update(0.5).unwrap();
        }
        critic.refit().unwrap();
        let truth = exact_q(&m, &pi, which).unwrap();
        let est = critic.q_table(0.0);
        for (e, t) in est.iter().zip(&truth) {
            assert!((e - t).abs() < 1e-4, "{which:?}: {e} vs {t}");
        }
    }
}

#[test]
fn exact_q_is_an_msbe_fixed_point() {
    for seed in 0..5 {
        let m = random_model::<f64>(5, 3, 0.9, seed).unwrap();
        let pi = TabularPolicy::uniform(5, 3);
        let truth = exact_q(&m, &pi, Signal::Cost).unwrap();
        let mut critic = one_hot_critic(5, 3);
        critic.set_raw_z(vec![truth.clone()]).unwrap();
        let (steps, weights) = exhaustive_batch(&m);
        let batch = [Batch {
            behavior: 0,
            steps: &steps,
            weights: Some(&weights),
        }];
        // per-transition errors cancel in expectation, so the gradient vanishes
        let before = critic.raw_z()[0].clone();
        critic
            .msbe_update(&batch, &pi, Signal::Cost, 0.9, 1.0)
            .unwrap();
        for (a, b) in critic.raw_z()[0].iter().zip(&before) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn noisy_quadratic_coefficients_within_three_standard_errors() {
    let design = PolyDesign::<f64>::evenly_spaced(10, 2).unwrap();
    let sigma = 0.1;
    let se: Vec<f64> = (0..3)
        .map(|k| sigma * design.xtx_inv()[(k, k)].sqrt())
        .collect();
    let truth = [0.0, 0.0, 3.0];
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 1000;
    let mut hits = [0usize; 3];
    for _ in 0..trials {
        let z: Vec<Vec<f64>> = design
            .thresholds()
            .iter()
            .map(|e| vec![3.0 * e * e + noise.sample(&mut rng)])
            .collect();
        let fit = fit_z_poly(&design, &z).unwrap();
        for k in 0..3 {
            if (fit.coefficients[k] - truth[k]).abs() <= 3.0 * se[k] {
                hits[k] += 1;
            }
        }
    }
    for h in hits {
        assert!(h as f64 / trials as f64 >= 0.99, "{hits:?}");
    }
}

#[test]
fn ols_is_unbiased() {
    let design = PolyDesign::<f64>::evenly_spaced(8, 2).unwrap();
    let beta = [0.5, -1.0, 2.0];
    let sigma = 0.3;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 10_000;
    let mut mean = [0.0; 3];
    for _ in 0..trials {
        let z: Vec<Vec<f64>> = design
            .thresholds()
            .iter()
            .map(|e| vec![beta[0] + beta[1] * e + beta[2] * e * e + noise.sample(&mut rng)])
            .collect();
        let fit = fit_z_poly(&design, &z).unwrap();
        for k in 0..3 {
            mean[k] += fit.coefficients[k] / trials as f64;
        }
    }
    for k in 0..3 {
        let se = sigma * design.xtx_inv()[(k, k)].sqrt() / (trials as f64).sqrt();
        assert!(
            (mean[k] - beta[k]).abs() <= 3.0 * se,
            "coef {k}: {}",
            mean[k]
        );
    }
}

#[test]
fn residual_variance_is_unbiased() {
    let design = PolyDesign::<f64>::evenly_spaced(6, 1).unwrap();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 20_000;
    let mut mean = 0.0;
    for _ in 0..trials {
        let z: Vec<Vec<f64>> = design
            .thresholds()
            .iter()
            .map(|e| vec![1.0 + e + noise.sample(&mut rng)])
            .collect();
        mean += fit_z_poly(&design, &z).unwrap().sigma2_hat.unwrap()[0] / trials as f64;
    }
    // Var(σ̂²) = 2σ⁴/(N−p−1) for Gaussian noise
    let se = (2.0 * 0.5f64.powi(4) / 4.0 / trials as f64).sqrt();
    assert!((mean - 0.25).abs() < 4.0 * se, "{mean}");
}

#[test]
fn leverage_law_and_endpoints() {
    for n in 1..=20 {
        let l = leverage_max::<f64>(0, n, 1e-4).unwrap();
        assert!((l - 1.0 / (n as f64).sqrt()).abs() < 1e-10);
    }
    // Near-interpolating designs overshoot between nodes; everywhere else the
    // maximum sits at an endpoint.
    let mut interior = Vec::new();
    for p in 0..=4 {
        for n in p + 1..=20 {
            let design = PolyDesign::<f64>::evenly_spaced(n, p).unwrap();
            let l = leverage_max::<f64>(p, n, 1e-4).unwrap();
            let ends = design.leverage_sq(0.0).max(design.leverage_sq(1.0)).sqrt();
            assert!(l >= ends - 1e-12);
            if l > ends + 1e-9 {
                interior.push((p, n));
            }
            assert!(l >= 1.0 / (n as f64).sqrt() - 1e-12);
        }
    }
    assert_eq!(interior, vec![(3, 4), (4, 5), (4, 6)]);
    for p in 0..=3 {
        let range: Vec<usize> = (p + 1..=20).collect();
        let fit = fit_B_beta::<f64>(p, &range).unwrap();
        for (n, l) in &fit.points {
            assert!(*l <= fit.bound(*n) + 1e-12);
        }
    }
}

#[test]
fn critic_from_oracle_tables_has_zero_distance() {
    let m = ccpo_core::cmdp::ChainSpec::graded(6, 4.0, 12.0, 0.9)
        .build()
        .unwrap();
    let grid = [10.0, 30.0, 50.0];
    let gt = per_threshold_ground_truth(&m, &grid).unwrap();
    let psi = FeatureMap::one_hot(6, 2);
    let z = ThresholdEmbedding::new(12, 2, 10.0, 40.0).unwrap();
    let mut critic = VersatileQ::new(psi, z, grid.to_vec(), FitMode::TwoStage).unwrap();
    critic
        .set_raw_z(gt.iter().map(|g| g.q_c.clone()).collect())
        .unwrap();
    critic.refit().unwrap();
    let truth: Vec<(f64, Vec<f64>)> = gt.iter().map(|g| (g.epsilon, g.q_c.clone())).collect();
    let report = q_distribution_compare(&critic, &truth, &[0, 1, 2, 3, 4, 5]);
    for r in report {
        assert!(r.mae < 1e-9 && r.wasserstein < 1e-9, "{r:?}");
    }
}

fn table_critic(m: usize, weights: Vec<f64>, coefs: Vec<f64>) -> VersatileQ<f64> {
    let psi = FeatureMap::from_table(2, 2, m, 10.0, weights, true).unwrap();
    let mut z = ThresholdEmbedding::new(m, 1, 0.0, 1.0).unwrap();
    z.set_coefficients(coefs).unwrap();
    VersatileQ::new(psi, z, vec![0.0, 1.0], FitMode::EndToEnd).unwrap()
}

proptest! {
    #[test]
    fn q_is_bilinear(
        w in proptest::collection::vec(-1.0f64..1.0, 12),
        b in proptest::collection::vec(-5.0f64..5.0, 6),
        c in 0.1f64..3.0,
        eps in 0.0f64..1.0,
    ) {
        let base = table_critic(3, w.clone(), b.clone());
        let scaled_z = table_critic(3, w.clone(), b.iter().map(|x| x * c).collect());
        let scaled_psi = table_critic(3, w.iter().map(|x| x * c).collect(), b.clone());
        for s in 0..2 {
            for a in 0..2 {
                let q = base.q_value(s, a, eps);
                prop_assert!((scaled_z.q_value(s, a, eps) - c * q).abs() < 1e-10);
                prop_assert!((scaled_psi.q_value(s, a, eps) - c * q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn polyak_contracts_toward_online(
        rho in 0.0f64..=1.0,
        online in proptest::collection::vec(-5.0f64..5.0, 4),
        target in proptest::collection::vec(-5.0f64..5.0, 4),
    ) {
        let psi = FeatureMap::one_hot(2, 2);
        let z = ThresholdEmbedding::new(4, 0, 0.0, 1.0).unwrap();
        let mut critic = VersatileQ::new(psi, z, vec![0.0], FitMode::TwoStage).unwrap();
        critic.set_raw_z(vec![online.clone()]).unwrap();
        critic.set_target_raw_z(vec![target.clone()]).unwrap();
        let dist = |t: &[f64]| t.iter().zip(&online).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let before = dist(&target);
        critic.polyak_update(rho).unwrap();
        let after = dist(&critic.target_raw_z()[0]);
        prop_assert!((after - rho * before).abs() < 1e-12);
        prop_assert_eq!(&critic.raw_z()[0], &online);
    }

    #[test]
    fn leverage_dominates_constant_design(p in 1usize..4, n in 5usize..15) {
        let l = leverage_max::<f64>(p, n, 1e-4).unwrap();
        prop_assert!(l >= 1.0 / (n as f64).sqrt());
    }
}
