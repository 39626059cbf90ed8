//! Exact quantities of the chain induced by a policy.
//!
//! Everything here is a dense, deterministic computation intended for models
//! with at most a few hundred states: the induced transition matrix and its
//! parameter derivatives, the stationary distribution, average and discounted
//! rewards, the true gradient `∇η`, its discounted approximation `∇_β η`, and
//! mixing diagnostics. These serve as the reference values that simulation
//! based estimates are checked against.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{PomdpModel, check_policy_shape};
use crate::policy::Policy;

/// Condition number beyond which a linear system counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// The transition matrix `P(θ)` and its partial derivatives `∂P/∂θ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    pub transition: DMatrix<f64>,
    pub gradients: Vec<DMatrix<f64>>,
}

impl InducedChain {
    pub fn n_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.gradients.len()
    }
}

/// `p_ij(θ) = Σ_y ν_y(i) Σ_u μ_u(θ,y) p_ij(u)` and its derivatives, using
/// `∂μ_u/∂θ_k = μ_u · score_k`.
pub fn induced_chain<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
) -> Result<InducedChain> {
    check_policy_shape(model, policy)?;
    let n = model.n_states();
    let k = policy.n_params();
    let nu = model.observation_dist();

    let mut transition = DMatrix::zeros(n, n);
    let mut gradients = vec![DMatrix::zeros(n, n); k];
    let mut probs = vec![0.0; model.n_controls()];
    let mut score = vec![0.0; k];

    for y in 0..model.n_observations() {
        policy.probs_into(theta, y, &mut probs)?;
        for (u, &mu) in probs.iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            policy.score_into(theta, y, u, &mut score)?;
            let pu = model.transition(u);
            for i in 0..n {
                let w = nu[(i, y)];
                if w == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let base = w * mu * pu[(i, j)];
                    transition[(i, j)] += base;
                    for (g, s) in gradients.iter_mut().zip(&score) {
                        g[(i, j)] += base * s;
                    }
                }
            }
        }
    }
    Ok(InducedChain {
        transition,
        gradients,
    })
}

/// Solves `a x = b` by LU with partial pivoting, rejecting systems whose
/// 1-norm condition number exceeds [`MAX_CONDITION`].
fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::AssumptionViolation(format!("{what}: matrix is singular")))?;
    let cond = norm1(a) * norm1(&inverse);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::AssumptionViolation(format!(
            "{what}: condition number {cond:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    lu.solve(b)
        .ok_or_else(|| Error::AssumptionViolation(format!("{what}: matrix is singular")))
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Numerical dimension of the null space of `m`.
fn nullity(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let scale = sv.max().max(1.0);
    sv.iter().filter(|s| **s <= scale * 1e-10).count()
}

/// A probability vector `π` with `π'P = π'`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: DVector<f64>,
}

impl Deref for StationaryDistribution {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.pi
    }
}

impl StationaryDistribution {
    /// `‖π'P − π'‖_1`.
    pub fn balance_residual(&self, p: &DMatrix<f64>) -> f64 {
        (p.tr_mul(&self.pi) - &self.pi).lp_norm(1)
    }
}

/// Solves the balance equations `(P' − I)π = 0` together with `Σπ = 1`.
///
/// The last balance equation is redundant (columns of `P' − I` sum to zero)
/// and is replaced by the normalization row. The resulting system is regular
/// exactly when the stationary distribution is unique.
pub fn stationary(p: &DMatrix<f64>) -> Result<StationaryDistribution> {
    let n = p.nrows();
    if p.ncols() != n || n == 0 {
        return Err(Error::Precondition(
            "transition matrix must be square".into(),
        ));
    }
    let balance = p.transpose() - DMatrix::identity(n, n);
    let mut a = balance.clone();
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = solve_checked(&a, &b, "balance equations").map_err(|_| {
        Error::AssumptionViolation(format!(
            "stationary distribution is not unique: balance equations have a {}-dimensional null space",
            nullity(&balance)
        ))
    })?;
    Ok(StationaryDistribution { pi })
}

/// Stationary distribution by power iteration on the lazy chain `(P + I)/2`,
/// which has the same stationary distribution but no periodicity.
pub fn stationary_power_iteration(
    p: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryDistribution> {
    let n = p.nrows();
    let lazy = (p + DMatrix::identity(n, n)) * 0.5;
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        let next = lazy.tr_mul(&pi);
        let change = (&next - &pi).lp_norm(1);
        pi = next;
        if change < tol {
            let total = pi.sum();
            return Ok(StationaryDistribution { pi: pi / total });
        }
    }
    Err(Error::AssumptionViolation(format!(
        "power iteration did not converge in {max_iter} iterations"
    )))
}

/// `η = π'r`.
pub fn average_reward(pi: &StationaryDistribution, rewards: &DVector<f64>) -> f64 {
    pi.dot(rewards)
}

/// `J_β = (I − βP)^{-1} r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedValues {
    pub beta: f64,
    pub values: DVector<f64>,
}

pub(crate) fn check_discount(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Precondition(format!(
            "discount {beta} is outside [0, 1)"
        )));
    }
    Ok(())
}

pub fn discounted_values(
    p: &DMatrix<f64>,
    rewards: &DVector<f64>,
    beta: f64,
) -> Result<DiscountedValues> {
    check_discount(beta)?;
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - p * beta;
    let values = solve_checked(&a, rewards, "discounted values")?;
    Ok(DiscountedValues { beta, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    /// `∇η`.
    Exact,
    /// `∇_β η = π' ∇P J_β`.
    Approximate,
    /// A simulation estimate `Δ_T`.
    Estimate,
}

impl fmt::Display for GradientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientKind::Exact => "exact",
            GradientKind::Approximate => "approximate",
            GradientKind::Estimate => "estimate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub kind: GradientKind,
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn new(kind: GradientKind, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { kind, values }
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    /// `‖self − reference‖ / ‖reference‖`.
    pub fn relative_error(&self, reference: &[f64]) -> f64 {
        relative_error(&self.values, reference)
    }
}

impl Deref for GradientVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖estimate − reference‖ / ‖reference‖` in the Euclidean norm.
pub fn relative_error(estimate: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / norm2(reference)
}

/// `(∇η)_k = π' (∂P/∂θ_k) [I − P + eπ']^{-1} r`.
pub fn exact_gradient(
    chain: &InducedChain,
    pi: &StationaryDistribution,
    rewards: &DVector<f64>,
) -> Result<GradientVector> {
    let n = chain.n_states();
    let fundamental = DMatrix::identity(n, n) - &chain.transition
        + DVector::from_element(n, 1.0) * pi.transpose();
    let x = solve_checked(&fundamental, rewards, "fundamental matrix")?;
    let values = chain.gradients.iter().map(|g| pi.dot(&(g * &x))).collect();
    Ok(GradientVector::new(GradientKind::Exact, values))
}

/// `(∇_β η)_k = π' (∂P/∂θ_k) J_β`.
pub fn approx_gradient(
    chain: &InducedChain,
    pi: &StationaryDistribution,
    values: &DiscountedValues,
) -> GradientVector {
    let grad = chain
        .gradients
        .iter()
        .map(|g| pi.dot(&(g * &values.values)))
        .collect();
    GradientVector::new(GradientKind::Approximate, grad)
}

/// `∂π/∂θ_k` for every `k`, by differentiating the balance equations:
/// `(P' − I) ∂π = −(∂P)'π` with `Σ ∂π = 0`.
pub fn stationary_gradient(
    chain: &InducedChain,
    pi: &StationaryDistribution,
) -> Result<Vec<DVector<f64>>> {
    let n = chain.n_states();
    let mut a = chain.transition.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let lu = a.clone().lu();
    let inverse = lu.try_inverse().ok_or_else(|| {
        Error::AssumptionViolation("differentiated balance equations are singular".into())
    })?;
    let cond = norm1(&a) * norm1(&inverse);
    if cond > MAX_CONDITION {
        return Err(Error::AssumptionViolation(format!(
            "differentiated balance equations: condition number {cond:e}"
        )));
    }
    Ok(chain
        .gradients
        .iter()
        .map(|g| {
            let mut b = -(g.tr_mul(&pi.pi));
            b[n - 1] = 0.0;
            &inverse * b
        })
        .collect())
}

/// Residual of the split `∇η = (1−β) ∇π' J_β + β π' ∇P J_β`, with `∇η` from
/// the fundamental matrix and `∇π` from the differentiated balance equations.
pub fn gradient_decomposition_check(
    chain: &InducedChain,
    pi: &StationaryDistribution,
    rewards: &DVector<f64>,
    values: &DiscountedValues,
) -> Result<f64> {
    let exact = exact_gradient(chain, pi, rewards)?;
    let dpi = stationary_gradient(chain, pi)?;
    let beta = values.beta;
    let approx = approx_gradient(chain, pi, values);
    let residual: f64 = exact
        .iter()
        .zip(&dpi)
        .zip(approx.iter())
        .map(|((e, dp), a)| {
            let split = (1.0 - beta) * dp.dot(&values.values) + beta * a;
            (e - split).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(residual)
}

/// Distance to stationarity `d(t) = max_{i,j} ‖p^t(i) − p^t(j)‖_1` and the
/// mixing time `τ* = min{t : d(t) ≤ e^{-1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    /// `distances[t - 1] = d(t)` for `t = 1..=t_max`.
    pub distances: Vec<f64>,
    /// `None` when `d(t) > e^{-1}` throughout `1..=t_max`.
    pub tau_star: Option<usize>,
}

impl MixingReport {
    pub fn d(&self, t: usize) -> Option<f64> {
        t.checked_sub(1)
            .and_then(|i| self.distances.get(i).copied())
    }
}

pub fn mixing_time(p: &DMatrix<f64>, t_max: usize) -> Result<MixingReport> {
    if t_max == 0 {
        return Err(Error::Precondition("t_max must be at least 1".into()));
    }
    let n = p.nrows();
    let threshold = (-1.0f64).exp();
    let mut power = p.clone();
    let mut distances = Vec::with_capacity(t_max);
    let mut tau_star = None;
    for t in 1..=t_max {
        if t > 1 {
            power = &power * p;
        }
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = (power.row(i) - power.row(j)).lp_norm(1);
                d = d.max(dist);
            }
        }
        if tau_star.is_none() && d <= threshold {
            tau_star = Some(t);
        }
        distances.push(d);
    }
    Ok(MixingReport {
        distances,
        tau_star,
    })
}

/// `|(1−α) Σ_i π_i J_α(i) − η|`: optimizing expected discounted reward from
/// the stationary distribution is optimizing `η`.
pub fn discounted_equivalence_check<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_discount(alpha)?;
    let chain = induced_chain(model, policy, theta)?;
    let pi = stationary(&chain.transition)?;
    let eta = average_reward(&pi, model.rewards());
    let j = discounted_values(&chain.transition, model.rewards(), alpha)?;
    let eta_alpha = pi.dot(&j.values);
    Ok((eta_alpha * (1.0 - alpha) - eta).abs())
}

/// Exact summary of a policy at one parameter vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub chain: InducedChain,
    pub stationary: StationaryDistribution,
    pub average_reward: f64,
    pub gradient: GradientVector,
}

impl Evaluation {
    pub fn at<P: Policy + ?Sized>(model: &PomdpModel, policy: &P, theta: &[f64]) -> Result<Self> {
        let chain = induced_chain(model, policy, theta)?;
        let stationary = stationary(&chain.transition)?;
        let average_reward = average_reward(&stationary, model.rewards());
        let gradient = exact_gradient(&chain, &stationary, model.rewards())?;
        Ok(Self {
            chain,
            stationary,
            average_reward,
            gradient,
        })
    }

    /// `∇_β η` at the same point.
    pub fn approx_gradient(&self, rewards: &DVector<f64>, beta: f64) -> Result<GradientVector> {
        let values = discounted_values(&self.chain.transition, rewards, beta)?;
        Ok(approx_gradient(&self.chain, &self.stationary, &values))
    }

    /// `‖∇η − ∇_β η‖ / ‖∇η‖`.
    pub fn relative_bias(&self, rewards: &DVector<f64>, beta: f64) -> Result<f64> {
        Ok(self
            .approx_gradient(rewards, beta)?
            .relative_error(&self.gradient))
    }
}

/// `η(θ)` alone.
pub fn average_reward_at<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
) -> Result<f64> {
    let chain = induced_chain(model, policy, theta)?;
    let pi = stationary(&chain.transition)?;
    Ok(average_reward(&pi, model.rewards()))
}

/// Gradient oracle returning the exact `∇η`.
pub struct ExactOracle<'a, P: ?Sized> {
    pub model: &'a PomdpModel,
    pub policy: &'a P,
}

impl<P: Policy + ?Sized> crate::optimizer::GradOracle for ExactOracle<'_, P> {
    fn gradient(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(Evaluation::at(self.model, self.policy, theta)?
            .gradient
            .values)
    }
}

/// `‖∇η − ∇_β η‖ / (τ* (1 − β))`, the quantity bounded by a model-dependent
/// constant when the bias scales with the mixing time.
pub fn bias_scaling_ratio(exact: &[f64], approx: &[f64], beta: f64, tau_star: usize) -> f64 {
    let diff: Vec<f64> = exact.iter().zip(approx).map(|(a, b)| a - b).collect();
    norm2(&diff) / (tau_star as f64 * (1.0 - beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{self, REFERENCE_THETA};
    use crate::policy::TabularPolicy;
    use crate::rng;
    use rand::RngExt;

    fn always_a2_chain() -> DMatrix<f64> {
        let (policy, theta) = benchmark::deterministic_policy(1);
        induced_chain(&benchmark::three_state_model(), &policy, &theta)
            .unwrap()
            .transition
    }

    #[test]
    fn deterministic_policy_reproduces_control_rows() {
        let model = benchmark::three_state_model();
        assert_eq!(always_a2_chain(), *model.transition(1));
    }

    #[test]
    fn uniform_policy_mixes_controls() {
        let model = benchmark::three_state_model();
        let chain = induced_chain(&model, &benchmark::three_state_policy(), &[0.0; 4]).unwrap();
        let mix = (model.transition(0) + model.transition(1)) * 0.5;
        assert!((chain.transition - mix).amax() < 1e-15);
    }

    #[test]
    fn chain_rows_and_gradient_rows() {
        let model = benchmark::three_state_model();
        let policy = benchmark::three_state_policy();
        let mut r = rng::from_seed(1);
        for _ in 0..10 {
            let theta: Vec<f64> = (0..4).map(|_| r.random_range(-4.0..4.0)).collect();
            let chain = induced_chain(&model, &policy, &theta).unwrap();
            for i in 0..3 {
                assert!((chain.transition.row(i).sum() - 1.0).abs() < 1e-12);
                for g in &chain.gradients {
                    assert!(g.row(i).sum().abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn chain_gradient_matches_finite_differences() {
        let model = benchmark::three_state_model();
        let policy = benchmark::three_state_policy();
        let theta = REFERENCE_THETA;
        let chain = induced_chain(&model, &policy, &theta).unwrap();
        let h = 1e-5;
        for k in 0..4 {
            let mut up = theta;
            let mut down = theta;
            up[k] += h;
            down[k] -= h;
            let fd = (induced_chain(&model, &policy, &up).unwrap().transition
                - induced_chain(&model, &policy, &down).unwrap().transition)
                / (2.0 * h);
            assert!((fd - &chain.gradients[k]).amax() < 1e-6);
        }
    }

    #[test]
    fn stationary_always_a2() {
        let pi = stationary(&always_a2_chain()).unwrap();
        let expected = [1.0 / 30.0, 1.0 / 6.0, 4.0 / 5.0];
        for (a, b) in pi.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let eta = average_reward(&pi, benchmark::three_state_model().rewards());
        assert!((eta - benchmark::OPTIMAL_AVERAGE_REWARD).abs() < 1e-12);
    }

    #[test]
    fn stationary_two_state_symmetric() {
        let p = DMatrix::from_element(2, 2, 0.5);
        let pi = stationary(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_chain_is_rejected() {
        let err = stationary(&DMatrix::identity(3, 3)).unwrap_err();
        match err {
            Error::AssumptionViolation(msg) => assert!(msg.contains("3-dimensional"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reducible_chain_reports_null_space() {
        #[rustfmt::skip]
        let p = DMatrix::from_row_slice(4, 4, &[
            0.5, 0.5, 0.0, 0.0,
            0.5, 0.5, 0.0, 0.0,
            0.0, 0.0, 0.1, 0.9,
            0.0, 0.0, 0.9, 0.1,
        ]);
        let msg = stationary(&p).unwrap_err().to_string();
        assert!(msg.contains("2-dimensional"), "{msg}");
    }

    #[test]
    fn periodic_swap_still_has_unique_stationary() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let a = stationary(&p).unwrap();
        let b = stationary_power_iteration(&p, 1e-14, 10_000).unwrap();
        assert!((&a.pi - &b.pi).lp_norm(1) < 1e-9);
    }

    #[test]
    fn always_a1_reward_is_mass_on_c() {
        let (policy, theta) = benchmark::deterministic_policy(0);
        let model = benchmark::three_state_model();
        let chain = induced_chain(&model, &policy, &theta).unwrap();
        let pi = stationary_power_iteration(&chain.transition, 1e-15, 100_000).unwrap();
        let eta = average_reward(&stationary(&chain.transition).unwrap(), model.rewards());
        assert!((eta - pi[2]).abs() < 1e-10);
        // under a1 every row sends 0.2 to C
        assert!((eta - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards() {
        let model = benchmark::three_state_model();
        let policy = benchmark::three_state_policy();
        let chain = induced_chain(&model, &policy, &REFERENCE_THETA).unwrap();
        let pi = stationary(&chain.transition).unwrap();
        let zero = DVector::zeros(3);
        assert_eq!(average_reward(&pi, &zero), 0.0);
        assert!(
            exact_gradient(&chain, &pi, &zero)
                .unwrap()
                .iter()
                .all(|g| *g == 0.0)
        );
        for beta in [0.0, 0.5, 0.9] {
            let j = discounted_values(&chain.transition, &zero, beta).unwrap();
            assert!(approx_gradient(&chain, &pi, &j).iter().all(|g| *g == 0.0));
            assert_eq!(
                gradient_decomposition_check(&chain, &pi, &zero, &j).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn discounted_values_edges() {
        let p = always_a2_chain();
        let r = benchmark::three_state_model().rewards().clone();
        assert_eq!(discounted_values(&p, &r, 0.0).unwrap().values, r);
        let ones = DVector::from_element(3, 1.0);
        let j = discounted_values(&p, &ones, 0.75).unwrap();
        assert!(j.values.iter().all(|v| (v - 4.0).abs() < 1e-12));
        assert!(matches!(
            discounted_values(&p, &r, 1.0),
            Err(Error::Precondition(_))
        ));
        assert!(discounted_values(&p, &r, -0.1).is_err());
    }

    #[test]
    fn discounted_values_satisfy_bellman() {
        let p = always_a2_chain();
        let r = benchmark::three_state_model().rewards().clone();
        let j = discounted_values(&p, &r, 0.9).unwrap();
        let residual = (&j.values - (&r + &p * &j.values * 0.9)).amax();
        assert!(residual < 1e-10);
        assert!(j.values.amax() <= 1.0 / (1.0 - 0.9) + 1e-12);
    }

    #[test]
    fn one_state_chain_has_zero_gradients() {
        let model = PomdpModel::fully_observed(
            vec![DMatrix::from_element(1, 1, 1.0); 2],
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let policy = TabularPolicy::new(1, 2).unwrap();
        let eval = Evaluation::at(&model, &policy, &[0.3, -0.2]).unwrap();
        assert_eq!(eval.average_reward, 1.0);
        assert!(eval.gradient.iter().all(|g| g.abs() < 1e-15));
        let approx = eval.approx_gradient(model.rewards(), 0.5).unwrap();
        assert!(approx.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn stationary_gradient_matches_fundamental_matrix_route() {
        // ∇π_k' = π' ∂P_k [I − P + eπ']^{-1}
        let model = benchmark::three_state_model();
        let policy = benchmark::three_state_policy();
        let chain = induced_chain(&model, &policy, &[0.2, -0.7, 1.3, 0.4]).unwrap();
        let pi = stationary(&chain.transition).unwrap();
        let fundamental = DMatrix::identity(3, 3) - &chain.transition
            + DVector::from_element(3, 1.0) * pi.transpose();
        let z = fundamental.try_inverse().unwrap();
        let balance = stationary_gradient(&chain, &pi).unwrap();
        for (g, dpi) in chain.gradients.iter().zip(&balance) {
            let other = (pi.transpose() * g * &z).transpose();
            assert!((other - dpi).amax() < 1e-12);
        }
    }

    #[test]
    fn mixing_edges() {
        let p = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let rep = mixing_time(&p, 5).unwrap();
        assert_eq!(rep.d(1), Some(0.0));
        assert_eq!(rep.tau_star, Some(1));

        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let rep = mixing_time(&swap, 50).unwrap();
        assert!(rep.distances.iter().all(|d| *d == 2.0));
        assert_eq!(rep.tau_star, None);

        assert!(mixing_time(&p, 0).is_err());
    }

    #[test]
    fn mixing_always_a2() {
        // rows of P(a2) differ only in how A and B mass is split:
        // d(1) = |0-0.2| + |0.2-0| = 0.4 ≥ e^{-1}, d(2) = 0.08.
        let rep = mixing_time(&always_a2_chain(), 10).unwrap();
        assert!((rep.d(1).unwrap() - 0.4).abs() < 1e-12);
        assert!((rep.d(2).unwrap() - 0.08).abs() < 1e-12);
        assert_eq!(rep.tau_star, Some(2));
        assert!(rep.distances.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn discounted_equivalence_edges() {
        let model = benchmark::three_state_model();
        let policy = benchmark::three_state_policy();
        assert!(
            discounted_equivalence_check(&model, &policy, &REFERENCE_THETA, 0.0).unwrap() < 1e-15
        );
        let mut r = rng::from_seed(4);
        for _ in 0..5 {
            let theta: Vec<f64> = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
            assert!(discounted_equivalence_check(&model, &policy, &theta, 0.9).unwrap() < 1e-10);
        }
        assert!(discounted_equivalence_check(&model, &policy, &REFERENCE_THETA, 1.0).is_err());
    }
}
