//! The three-state, two-action benchmark MDP and its softmax-linear controller.
//!
//! | origin | action | → A | → B | → C |
//! |--------|--------|-----|-----|-----|
//! | A      | a1     | 0.0 | 0.8 | 0.2 |
//! | A      | a2     | 0.0 | 0.2 | 0.8 |
//! | B      | a1     | 0.8 | 0.0 | 0.2 |
//! | B      | a2     | 0.2 | 0.0 | 0.8 |
//! | C      | a1     | 0.0 | 0.8 | 0.2 |
//! | C      | a2     | 0.0 | 0.2 | 0.8 |
//!
//! Reward is 1 in C and 0 elsewhere. The state is observed directly. Always
//! choosing `a2` is optimal with average reward 0.8.

use nalgebra::{DMatrix, DVector};

use crate::model::PomdpModel;
use crate::policy::{FeatureTable, SoftmaxLinearPolicy, TabularPolicy};

/// Average reward of the optimal (always-`a2`) policy.
pub const OPTIMAL_AVERAGE_REWARD: f64 = 0.8;

/// The parameter vector used for the gradient-estimation experiments.
pub const REFERENCE_THETA: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

pub const STATE_LABELS: [&str; 3] = ["A", "B", "C"];
pub const CONTROL_LABELS: [&str; 2] = ["a1", "a2"];

/// Feature vectors `φ(A), φ(B), φ(C)` in units of 1/18.
pub const FEATURES_X18: [[f64; 2]; 3] = [[12.0, 6.0], [6.0, 12.0], [5.0, 5.0]];

pub fn three_state_model() -> PomdpModel {
    #[rustfmt::skip]
    let a1 = DMatrix::from_row_slice(3, 3, &[
        0.0, 0.8, 0.2,
        0.8, 0.0, 0.2,
        0.0, 0.8, 0.2,
    ]);
    #[rustfmt::skip]
    let a2 = DMatrix::from_row_slice(3, 3, &[
        0.0, 0.2, 0.8,
        0.2, 0.0, 0.8,
        0.0, 0.2, 0.8,
    ]);
    PomdpModel::fully_observed(vec![a1, a2], DVector::from_vec(vec![0.0, 0.0, 1.0]))
        .and_then(|m| {
            m.with_labels(
                Some(STATE_LABELS.map(String::from).to_vec()),
                Some(CONTROL_LABELS.map(String::from).to_vec()),
            )
        })
        .expect("benchmark model is well formed")
}

pub fn three_state_features() -> FeatureTable {
    FeatureTable::new(
        FEATURES_X18
            .iter()
            .map(|row| row.iter().map(|v| v / 18.0).collect())
            .collect(),
    )
    .expect("benchmark features are well formed")
}

/// The four-parameter controller over the benchmark features.
pub fn three_state_policy() -> SoftmaxLinearPolicy {
    SoftmaxLinearPolicy::new(three_state_features(), 2).expect("two controls")
}

/// A tabular policy on the benchmark together with parameters that pick
/// `control` deterministically in every state (the other logit underflows to
/// an exact zero probability).
pub fn deterministic_policy(control: usize) -> (TabularPolicy, Vec<f64>) {
    let policy = TabularPolicy::new(3, 2).expect("non-empty table");
    let theta = (0..6)
        .map(|k| if k % 2 == control { 0.0 } else { -1000.0 })
        .collect();
    (policy, theta)
}
