//! Parameterized randomized policies `μ(θ, y)`.
//!
//! A policy maps parameters and the current observation to a distribution
//! over controls, and reports the score `∇μ_u / μ_u` (the gradient of
//! `log μ_u`) that drives the eligibility trace.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};

pub trait Policy: Send + Sync {
    /// Parameter dimension `K`.
    fn n_params(&self) -> usize;
    /// Number of controls `N`.
    fn n_controls(&self) -> usize;
    /// Number of observations `M` the policy accepts.
    fn n_observations(&self) -> usize;

    /// Writes `μ(θ, y)` into `out` (length `N`).
    fn probs_into(&self, theta: &[f64], observation: usize, out: &mut [f64]) -> Result<()>;

    /// Writes `∇μ_u(θ, y) / μ_u(θ, y)` into `out` (length `K`).
    fn score_into(
        &self,
        theta: &[f64],
        observation: usize,
        control: usize,
        out: &mut [f64],
    ) -> Result<()>;

    fn probs(&self, theta: &[f64], observation: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_controls()];
        self.probs_into(theta, observation, &mut out)?;
        Ok(out)
    }

    fn score(&self, theta: &[f64], observation: usize, control: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_params()];
        self.score_into(theta, observation, control, &mut out)?;
        Ok(out)
    }
}

/// Per-observation feature vectors `φ(y)` of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl FeatureTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || dim == 0 {
            return Err(Error::Precondition(
                "feature table must be non-empty".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Precondition(
                "feature vectors differ in dimension".into(),
            ));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("feature values must be finite".into()));
        }
        Ok(Self { rows, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, observation: usize) -> &[f64] {
        &self.rows[observation]
    }

    /// `max |φ_j(y)|` over the whole table.
    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_theta(theta: &[f64], k: usize) -> Result<()> {
    if theta.len() != k {
        return Err(Error::Precondition(format!(
            "θ has {} entries, policy has {k} parameters",
            theta.len()
        )));
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("θ[{i}] is not finite")));
    }
    Ok(())
}

fn check_observation(observation: usize, m: usize) -> Result<()> {
    if observation >= m {
        return Err(Error::Precondition(format!(
            "observation {observation} out of range for {m} observations"
        )));
    }
    Ok(())
}

/// Max-shifted softmax of `scores`, written in place.
fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// Softmax over controls with one weight vector per control on shared features:
/// `μ_u(θ, y) ∝ exp(w_u · φ(y))`, where `θ = (w_0, w_1, …, w_{N-1})`.
///
/// With two controls and two features this is the four-parameter controller
/// `θ = (θ_1, θ_2, θ_3, θ_4)`, `s_1 = θ_1 φ_1 + θ_2 φ_2`, `s_2 = θ_3 φ_1 + θ_4 φ_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinearPolicy {
    features: FeatureTable,
    n_controls: usize,
}

impl SoftmaxLinearPolicy {
    pub fn new(features: FeatureTable, n_controls: usize) -> Result<Self> {
        if n_controls == 0 {
            return Err(Error::Precondition(
                "policy needs at least one control".into(),
            ));
        }
        Ok(Self {
            features,
            n_controls,
        })
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    /// A bound on `|∂μ_u/∂θ_k| / μ_u` valid for every `θ`: each score entry is
    /// `(δ_{uv} − μ_v) φ_j(y)` and `|δ − μ| ≤ 1`.
    pub fn uniform_score_bound(&self) -> f64 {
        self.features.max_abs()
    }

    fn scores_into(&self, theta: &[f64], observation: usize, out: &mut [f64]) {
        let phi = self.features.get(observation);
        let d = self.features.dim();
        for (u, s) in out.iter_mut().enumerate() {
            *s = theta[u * d..(u + 1) * d]
                .iter()
                .zip(phi)
                .map(|(w, f)| w * f)
                .sum();
        }
    }
}

impl Policy for SoftmaxLinearPolicy {
    fn n_params(&self) -> usize {
        self.n_controls * self.features.dim()
    }

    fn n_controls(&self) -> usize {
        self.n_controls
    }

    fn n_observations(&self) -> usize {
        self.features.len()
    }

    fn probs_into(&self, theta: &[f64], observation: usize, out: &mut [f64]) -> Result<()> {
        check_theta(theta, self.n_params())?;
        check_observation(observation, self.n_observations())?;
        self.scores_into(theta, observation, out);
        softmax_in_place(out);
        Ok(())
    }

    fn score_into(
        &self,
        theta: &[f64],
        observation: usize,
        control: usize,
        out: &mut [f64],
    ) -> Result<()> {
        let mut probs = vec![0.0; self.n_controls];
        self.probs_into(theta, observation, &mut probs)?;
        if control >= self.n_controls {
            return Err(Error::Precondition(format!(
                "control {control} out of range"
            )));
        }
        if probs[control] <= 0.0 {
            return Err(Error::SingularScore {
                observation,
                control,
                prob: probs[control],
            });
        }
        let phi = self.features.get(observation);
        let d = self.features.dim();
        for (v, p) in probs.iter().enumerate() {
            let weight = if v == control { 1.0 - p } else { -p };
            for (o, f) in out[v * d..(v + 1) * d].iter_mut().zip(phi) {
                *o = weight * f;
            }
        }
        Ok(())
    }
}

/// One independent softmax per observation; `θ` is laid out observation-major
/// (`θ[y * N + u]` is the logit of control `u` under observation `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_observations: usize,
    n_controls: usize,
}

impl TabularPolicy {
    pub fn new(n_observations: usize, n_controls: usize) -> Result<Self> {
        if n_observations == 0 || n_controls == 0 {
            return Err(Error::Precondition(
                "tabular policy needs a non-empty table".into(),
            ));
        }
        Ok(Self {
            n_observations,
            n_controls,
        })
    }
}

impl Policy for TabularPolicy {
    fn n_params(&self) -> usize {
        self.n_observations * self.n_controls
    }

    fn n_controls(&self) -> usize {
        self.n_controls
    }

    fn n_observations(&self) -> usize {
        self.n_observations
    }

    fn probs_into(&self, theta: &[f64], observation: usize, out: &mut [f64]) -> Result<()> {
        check_theta(theta, self.n_params())?;
        check_observation(observation, self.n_observations)?;
        let n = self.n_controls;
        out.copy_from_slice(&theta[observation * n..(observation + 1) * n]);
        softmax_in_place(out);
        Ok(())
    }

    fn score_into(
        &self,
        theta: &[f64],
        observation: usize,
        control: usize,
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.n_controls;
        let mut probs = vec![0.0; n];
        self.probs_into(theta, observation, &mut probs)?;
        if control >= n {
            return Err(Error::Precondition(format!(
                "control {control} out of range"
            )));
        }
        if probs[control] <= 0.0 {
            return Err(Error::SingularScore {
                observation,
                control,
                prob: probs[control],
            });
        }
        out.fill(0.0);
        for (v, p) in probs.iter().enumerate() {
            out[observation * n + v] = if v == control { 1.0 - p } else { -p };
        }
        Ok(())
    }
}

/// Estimates the score bound `B = max |∂μ_u/∂θ_k| / μ_u` over the box
/// `[lo, hi]^K` by evaluating every corner (when `K ≤ 12`) and `samples`
/// uniform interior points.
pub fn estimate_score_bound<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    lo: f64,
    hi: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(lo <= hi) {
        return Err(Error::Precondition(format!("empty θ box [{lo}, {hi}]")));
    }
    let k = policy.n_params();
    let mut theta = vec![0.0; k];
    let mut score = vec![0.0; k];
    let mut best: f64 = 0.0;
    let mut visit = |theta: &[f64], best: &mut f64| -> Result<()> {
        for y in 0..policy.n_observations() {
            for u in 0..policy.n_controls() {
                policy.score_into(theta, y, u, &mut score)?;
                *best = score.iter().fold(*best, |m, s| m.max(s.abs()));
            }
        }
        Ok(())
    };
    if k <= 12 {
        for mask in 0u32..(1 << k) {
            for (j, t) in theta.iter_mut().enumerate() {
                *t = if mask & (1 << j) == 0 { lo } else { hi };
            }
            visit(&theta, &mut best)?;
        }
    }
    for _ in 0..samples {
        for t in theta.iter_mut() {
            *t = lo + (hi - lo) * rng.random::<f64>();
        }
        visit(&theta, &mut best)?;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::rng;
    use proptest::prelude::*;

    fn e() -> f64 {
        std::f64::consts::E
    }

    #[test]
    fn zero_theta_is_uniform() {
        let p = benchmark::three_state_policy();
        for y in 0..3 {
            assert_eq!(p.probs(&[0.0; 4], y).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn reference_theta_in_state_a() {
        // s_1 = 12/18 + 6/18 = 1, s_2 = -1
        let p = benchmark::three_state_policy();
        let probs = p.probs(&benchmark::REFERENCE_THETA, 0).unwrap();
        let expected = e() / (e() + 1.0 / e());
        assert!((probs[0] - expected).abs() < 1e-15);
        assert!((probs[0] - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_score_in_state_a() {
        let p = benchmark::three_state_policy();
        let s = p.score(&[0.0; 4], 0, 0).unwrap();
        let expected = [1.0 / 3.0, 1.0 / 6.0, -1.0 / 3.0, -1.0 / 6.0];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_score_in_state_a() {
        let p = benchmark::three_state_policy();
        let s = p.score(&benchmark::REFERENCE_THETA, 0, 0).unwrap();
        let w = (1.0 / e()) / (e() + 1.0 / e());
        let expected = [12.0 / 18.0, 6.0 / 18.0, -12.0 / 18.0, -6.0 / 18.0].map(|v| w * v);
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_theta_and_bad_observation() {
        let p = benchmark::three_state_policy();
        assert!(p.probs(&[f64::NAN, 0.0, 0.0, 0.0], 0).is_err());
        assert!(p.probs(&[0.0; 3], 0).is_err());
        assert!(p.probs(&[0.0; 4], 3).is_err());
    }

    #[test]
    fn vanishing_probability_is_singular() {
        let p = TabularPolicy::new(1, 2).unwrap();
        let err = p.score(&[0.0, 2000.0], 0, 0).unwrap_err();
        assert!(matches!(err, Error::SingularScore { control: 0, .. }));
    }

    #[test]
    fn score_bound_helper_respects_uniform_bound() {
        let p = benchmark::three_state_policy();
        let mut r = rng::from_seed(3);
        let b = estimate_score_bound(&p, -5.0, 5.0, 200, &mut r).unwrap();
        assert!(b > 0.0 && b <= p.uniform_score_bound() + 1e-15);
    }

    fn log_prob<P: Policy>(p: &P, theta: &[f64], y: usize, u: usize) -> f64 {
        p.probs(theta, y).unwrap()[u].ln()
    }

    fn check_fd<P: Policy>(p: &P, theta: &[f64], y: usize, u: usize) {
        let h = 1e-5;
        let s = p.score(theta, y, u).unwrap();
        let mut t = theta.to_vec();
        let fd: Vec<f64> = (0..theta.len())
            .map(|k| {
                t[k] = theta[k] + h;
                let up = log_prob(p, &t, y, u);
                t[k] = theta[k] - h;
                let down = log_prob(p, &t, y, u);
                t[k] = theta[k];
                (up - down) / (2.0 * h)
            })
            .collect();
        let num: f64 = s
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        assert!(
            num / den < 1e-6,
            "rel err {} at θ={theta:?}, y={y}, u={u}",
            num / den
        );
    }

    #[test]
    fn score_matches_finite_differences_at_random_points() {
        let p = benchmark::three_state_policy();
        let tab = TabularPolicy::new(3, 3).unwrap();
        let mut r = rng::from_seed(99);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
            check_fd(&p, &theta, r.random_range(0..3), r.random_range(0..2));
            let theta: Vec<f64> = (0..9).map(|_| r.random_range(-3.0..3.0)).collect();
            check_fd(&tab, &theta, r.random_range(0..3), r.random_range(0..3));
        }
    }

    proptest! {
        #[test]
        fn probs_normalized_and_score_identity(
            theta in proptest::collection::vec(-20.0f64..20.0, 6),
            y in 0usize..3,
        ) {
            let feats = FeatureTable::new(vec![
                vec![0.3, -1.0],
                vec![2.0, 0.5],
                vec![-0.7, 0.1],
            ]).unwrap();
            let p = SoftmaxLinearPolicy::new(feats, 3).unwrap();
            let probs = p.probs(&theta, y).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut weighted = [0.0; 6];
            for u in 0..3 {
                if probs[u] == 0.0 { continue; }
                let s = p.score(&theta, y, u).unwrap();
                for k in 0..6 { weighted[k] += probs[u] * s[k]; }
            }
            for w in weighted { prop_assert!(w.abs() < 1e-10); }
        }

        #[test]
        fn softmax_shift_invariance(
            theta in proptest::collection::vec(-5.0f64..5.0, 4),
            c in -10.0f64..10.0,
            y in 0usize..3,
        ) {
            // adding c to every logit: w_u -> w_u + c·φ/|φ|² shifts both s_u by c
            let p = benchmark::three_state_policy();
            let phi = p.features().get(y).to_vec();
            let n2: f64 = phi.iter().map(|v| v * v).sum();
            let shifted: Vec<f64> = theta.iter().enumerate()
                .map(|(k, t)| t + c * phi[k % 2] / n2).collect();
            let a = p.probs(&theta, y).unwrap();
            let b = p.probs(&shifted, y).unwrap();
            prop_assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }
}
