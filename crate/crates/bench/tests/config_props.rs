use std::path::PathBuf;

use ccpo_bench::config::{Algorithm, ExperimentConfig, CHAIN_PRESET, CIRCLE_PRESET};
use proptest::prelude::*;

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![
        Just(Algorithm::Ccpo),
        Just(Algorithm::Combo),
        Just(Algorithm::Lagrangian),
        Just(Algorithm::Oracle),
    ]
}

proptest! {
    #[test]
    fn overrides_round_trip(
        seeds in prop::collection::vec(0u64..1_000_000, 1..6),
        alg in algorithm(),
        out in "[a-z]{1,8}(/[a-z0-9_]{1,8}){0,2}",
    ) {
        let mut c = ExperimentConfig::parse(CHAIN_PRESET).unwrap();
        c.set_seeds(seeds.clone());
        c.set_algorithm(alg);
        c.set_output(PathBuf::from(&out));
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        prop_assert_eq!(&back.seeds, &seeds);
        prop_assert_eq!(back.algorithm, alg);
        prop_assert_eq!(&back.output, &PathBuf::from(out));
        prop_assert_eq!(back, c);
    }

    #[test]
    fn scalar_overrides_round_trip(lr in 1e-4f64..10.0, penalty in 0.0f64..50.0, kappa in 1e-3f64..1.0) {
        let text = format!(
            "{CIRCLE_PRESET}\n[lagrangian]\nlr_policy = {lr:?}\n",
        )
        .replace("penalty = 4.0", &format!("penalty = {penalty:?}\nkappa = {kappa:?}"));
        let c = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(c.lagrangian.lr_policy, lr);
        prop_assert_eq!(c.train.trust.kappa, kappa);
        prop_assert_eq!(c.train.penalty, Some(penalty));
        prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn train_config_carries_the_seed(seed in any::<u64>()) {
        let c = ExperimentConfig::parse(CHAIN_PRESET).unwrap();
        prop_assert_eq!(c.train_config(seed).seed, seed);
        prop_assert_eq!(c.lagrangian_config(seed).base.seed, seed);
    }
}
