use ccpo_core::baselines::{
    combined_policy, combo_weights, lagrangian_update, LagrangianAgent, LagrangianBatch,
    SingleThresholdPolicyBank,
};
use ccpo_core::cmdp::{ChainSpec, CmdpModel, TabularPolicy};
use ccpo_core::cvi::{ParametricPolicy, QSource};
use ccpo_core::oracle::solve_cmdp_lp;
use proptest::prelude::*;

struct Flat(usize);

impl QSource<f64> for Flat {
    fn n_actions(&self) -> usize {
        self.0
    }

    fn fill_rows(&self, s: usize, _eps: f64, q_r: &mut [f64], q_c: &mut [f64]) {
        for (a, (r, c)) in q_r.iter_mut().zip(q_c.iter_mut()).enumerate() {
            *r = (s + a) as f64;
            *c = a as f64;
        }
    }
}

fn row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let z: f64 = v.iter().sum();
        v.into_iter().map(|x| x / z).collect()
    })
}

fn table(n_obs: usize, na: usize) -> impl Strategy<Value = TabularPolicy<f64>> {
    prop::collection::vec(row(na), n_obs).prop_map(|rows| TabularPolicy::from_rows(&rows))
}

#[test]
fn lp_bank_recovers_behavior_policies() {
    let m: CmdpModel<f64> = ChainSpec::graded(8, 4.0, 12.0, 0.9).build().unwrap();
    let bank = SingleThresholdPolicyBank::from_lp(&m, &[20.0, 40.0, 60.0]).unwrap();
    let direct = solve_cmdp_lp(&m, 40.0).unwrap().policy;
    let c = combined_policy(&bank, 40.0).unwrap();
    assert_eq!(c.weights.0 + c.weights.1, 1.0);
    for s in 0..m.n_states() {
        for (a, b) in c.policy.row(s).iter().zip(direct.row(s)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weights_sum_to_one(eps in -100.0f64..200.0, e1 in 0.0f64..50.0, gap in 0.5f64..50.0) {
        let e2 = e1 + gap;
        let (w1, w2) = combo_weights(eps, e1, e2).unwrap();
        prop_assert_eq!(w1 + w2, 1.0);
        let exact = (eps - e1) / (e2 - e1);
        prop_assert!((w2 - exact).abs() <= 2.0 * w1.abs().max(1.0) * f64::EPSILON);
    }

    #[test]
    fn combinations_are_distributions(
        p1 in table(4, 3),
        p2 in table(4, 3),
        p3 in table(4, 3),
        eps in -50.0f64..150.0,
    ) {
        let bank = SingleThresholdPolicyBank::new(vec![(20.0, p1), (40.0, p2), (60.0, p3)]).unwrap();
        let c = combined_policy(&bank, eps).unwrap();
        for s in 0..4 {
            let r = c.policy.row(s);
            prop_assert!(r.iter().all(|p| *p >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn identical_bank_entries_combine_to_themselves(p in table(3, 4), eps in 0.0f64..100.0) {
        let bank = SingleThresholdPolicyBank::new(vec![(20.0, p.clone()), (40.0, p.clone())]).unwrap();
        let c = combined_policy(&bank, eps).unwrap();
        for s in 0..3 {
            for (a, b) in c.policy.row(s).iter().zip(p.row(s)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn multipliers_stay_nonnegative(
        init in 0.0f64..5.0,
        costs in prop::collection::vec(0.0f64..80.0, 1..30),
        lr in 0.0f64..2.0,
    ) {
        let pi = ParametricPolicy::uniform(3, 2, 1, 10.0, 70.0).unwrap();
        let mut agent = LagrangianAgent::new(pi, &[20.0, 40.0], init).unwrap();
        let states = [(0, 1.0), (2, 0.5)];
        for (k, c) in costs.iter().enumerate() {
            let batch = LagrangianBatch { behavior_index: k % 2, states: &states, cost_estimate: *c };
            lagrangian_update(&mut agent, &batch, &Flat(2), 0.1, lr).unwrap();
            prop_assert!(agent.lambdas().iter().all(|l| *l >= 0.0));
        }
    }
}
