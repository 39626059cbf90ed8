use gpomdp_core::analysis::{ExactOracle, average_reward_at};
use gpomdp_core::benchmark::{three_state_model, three_state_policy};
use gpomdp_core::optimizer::{
    ConjSettings, ConjStatus, FnOracle, OptRunLog, SearchSettings, conjpomdp, gsearch,
};
use gpomdp_core::rng;
use rand::RngExt;

#[test]
fn exact_oracle_training_improves_every_line_search() {
    let model = three_state_model();
    let policy = three_state_policy();
    let mut r = rng::from_seed(8);
    for _ in 0..10 {
        let theta0: Vec<f64> = (0..4).map(|_| r.random_range(-0.1..=0.1)).collect();
        let mut oracle = ExactOracle {
            model: &model,
            policy: &policy,
        };
        let out = conjpomdp(&mut oracle, &theta0, ConjSettings::default()).unwrap();
        let mut eta = average_reward_at(&model, &policy, &theta0).unwrap();
        for ls in &out.log.line_searches {
            let next =
                average_reward_at(&model, &policy, ls.theta_after.as_ref().unwrap()).unwrap();
            assert!(next >= eta - 1e-12, "{next} < {eta}");
            eta = next;
        }
        assert!(average_reward_at(&model, &policy, &out.theta).unwrap() >= 0.799);
    }
}

#[test]
fn noisy_line_search_lands_near_the_maximum() {
    // f(θ) = −θ²/2 in one dimension, gradient −θ plus bounded zero-mean noise.
    let mut hits = 0;
    for seed in 0..100 {
        let mut r = rng::from_seed(seed);
        let mut oracle = FnOracle(move |t: &[f64]| vec![-t[0] + r.random_range(-0.01..=0.01)]);
        let mut log = OptRunLog::default();
        let settings = SearchSettings {
            epsilon: 0.0,
            max_bracket_steps: 60,
        };
        let theta = gsearch(&mut oracle, &[1.0], &[-1.0], 0.25, settings, &mut log).unwrap();
        if theta[0].abs() < 0.05 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits} of 100");
}

#[test]
fn zero_gradient_at_start_returns_immediately() {
    let mut calls = 0;
    let mut oracle = FnOracle(|_: &[f64]| {
        calls += 1;
        vec![0.0; 3]
    });
    let out = conjpomdp(&mut oracle, &[0.3, -0.2, 1.0], ConjSettings::default()).unwrap();
    assert_eq!(out.status, ConjStatus::Converged);
    assert_eq!(out.theta, vec![0.3, -0.2, 1.0]);
    assert!(out.log.line_searches.is_empty());
    assert_eq!(calls, 1);
}
