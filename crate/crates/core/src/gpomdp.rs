//! Streaming estimation of `∇_β η` from one sample path.
//!
//! The estimator keeps an eligibility trace `z` and a running mean `Δ`, 2K
//! numbers in all. At each step it sees the observation, the control chosen
//! and the reward of the state entered:
//!
//! ```text
//! z_{t+1} = β z_t + ∇μ_{u_t}(θ, y_t) / μ_{u_t}(θ, y_t)
//! Δ_{t+1} = Δ_t + (r(i_{t+1}) z_{t+1} − Δ_t) / (t + 1)
//! ```
//!
//! The hidden state never reaches the estimator.

use crate::analysis::{GradientKind, GradientVector, check_discount};
use crate::error::{Error, Result};
use crate::model::{PomdpModel, Simulator, Trajectory};
use crate::optimizer::GradOracle;
use crate::policy::Policy;
use crate::rng::{self, ChaCha8Rng};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GpomdpState {
    beta: f64,
    t: u64,
    trace: Vec<f64>,
    delta: Vec<f64>,
}

impl GpomdpState {
    /// Zeroed trace and average for `k` parameters.
    pub fn new(beta: f64, k: usize) -> Result<Self> {
        check_discount(beta)?;
        if k == 0 {
            return Err(Error::Precondition(
                "parameter dimension must be positive".into(),
            ));
        }
        Ok(Self {
            beta,
            t: 0,
            trace: vec![0.0; k],
            delta: vec![0.0; k],
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// `z_t`.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// `Δ_t`.
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Folds in one step: the score of the control taken and the reward of
    /// the state entered after it.
    pub fn update(&mut self, score: &[f64], reward: f64) -> Result<()> {
        if score.len() != self.trace.len() {
            return Err(Error::Precondition(format!(
                "score has {} entries, estimator has {}",
                score.len(),
                self.trace.len()
            )));
        }
        if let Some(index) = score.iter().position(|s| !s.is_finite()) {
            return Err(Error::EstimatorPoisoned {
                step: self.t,
                index,
            });
        }
        let step = 1.0 / (self.t + 1) as f64;
        for ((z, d), s) in self.trace.iter_mut().zip(&mut self.delta).zip(score) {
            *z = self.beta * *z + s;
            *d += step * (reward * *z - *d);
        }
        self.t += 1;
        Ok(())
    }

    pub fn to_gradient(&self) -> GradientVector {
        GradientVector::new(GradientKind::Estimate, self.delta.clone())
    }
}

/// Scores `∇μ_u(θ, y)/μ_u(θ, y)` for every observation and control at fixed `θ`.
/// Entries for zero-probability controls are NaN; such controls are never sampled.
struct ScoreTable {
    k: usize,
    n_controls: usize,
    scores: Vec<f64>,
}

impl ScoreTable {
    fn new<P: Policy + ?Sized>(policy: &P, theta: &[f64]) -> Result<Self> {
        let k = policy.n_params();
        let n_controls = policy.n_controls();
        let mut scores = vec![f64::NAN; policy.n_observations() * n_controls * k];
        let mut probs = vec![0.0; n_controls];
        for y in 0..policy.n_observations() {
            policy.probs_into(theta, y, &mut probs)?;
            for (u, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    let at = (y * n_controls + u) * k;
                    policy.score_into(theta, y, u, &mut scores[at..at + k])?;
                }
            }
        }
        Ok(Self {
            k,
            n_controls,
            scores,
        })
    }

    fn get(&self, observation: usize, control: usize) -> &[f64] {
        let at = (observation * self.n_controls + control) * self.k;
        &self.scores[at..at + self.k]
    }
}

/// Runs the estimator along one sample path, reporting `Δ_t` at each
/// requested checkpoint (which must be strictly increasing and start at 1 or
/// later). The last checkpoint is the total horizon.
pub fn estimate_with_checkpoints<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
    beta: f64,
    checkpoints: &[u64],
    start_state: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GradientVector>> {
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Precondition(
            "checkpoints must be non-empty, positive and strictly increasing".into(),
        ));
    }
    let mut state = GpomdpState::new(beta, policy.n_params())?;
    let mut sim = Simulator::new(model, policy, theta, start_state)?;
    let table = ScoreTable::new(policy, theta)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &target in checkpoints {
        while state.steps() < target {
            let step = sim.advance(rng);
            state.update(table.get(step.observation, step.control), step.reward)?;
        }
        out.push(state.to_gradient());
    }
    Ok(out)
}

/// `Δ_T` after exactly `horizon` steps from `start_state`, drawing from `rng`.
pub fn estimate_from<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
    beta: f64,
    horizon: u64,
    start_state: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradientVector> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    let mut out =
        estimate_with_checkpoints(model, policy, theta, beta, &[horizon], start_state, rng)?;
    Ok(out.pop().expect("one checkpoint"))
}

/// `Δ_T` for a seed, starting in state 0.
pub fn estimate<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
    beta: f64,
    horizon: u64,
    seed: u64,
) -> Result<GradientVector> {
    estimate_from(
        model,
        policy,
        theta,
        beta,
        horizon,
        0,
        &mut rng::from_seed(seed),
    )
}

/// Replays a recorded trajectory through the estimator.
pub fn estimate_from_trajectory<P: Policy + ?Sized>(
    policy: &P,
    theta: &[f64],
    beta: f64,
    trajectory: &Trajectory,
) -> Result<GpomdpState> {
    let mut state = GpomdpState::new(beta, policy.n_params())?;
    let mut score = vec![0.0; policy.n_params()];
    for step in &trajectory.steps {
        policy.score_into(theta, step.observation, step.control, &mut score)?;
        state.update(&score, step.reward)?;
    }
    Ok(state)
}

/// Gradient oracle answering each query with a fresh `Δ_T`.
///
/// Every call runs a new sample path of `horizon` steps from `start_state`,
/// seeded from the next draw of the oracle's own stream.
pub struct GpomdpOracle<'a, P: ?Sized> {
    model: &'a PomdpModel,
    policy: &'a P,
    beta: f64,
    horizon: u64,
    start_state: usize,
    rng: ChaCha8Rng,
    steps: u64,
}

impl<'a, P: Policy + ?Sized> GpomdpOracle<'a, P> {
    pub fn new(
        model: &'a PomdpModel,
        policy: &'a P,
        beta: f64,
        horizon: u64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        check_discount(beta)?;
        if horizon == 0 {
            return Err(Error::Precondition("horizon must be at least 1".into()));
        }
        Ok(Self {
            model,
            policy,
            beta,
            horizon,
            start_state: 0,
            rng,
            steps: 0,
        })
    }

    pub fn with_start_state(mut self, state: usize) -> Self {
        self.start_state = state;
        self
    }
}

impl<P: Policy + ?Sized> GradOracle for GpomdpOracle<'_, P> {
    fn gradient(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut path = rng::from_seed(self.rng.next_u64());
        let g = estimate_from(
            self.model,
            self.policy,
            theta,
            self.beta,
            self.horizon,
            self.start_state,
            &mut path,
        )?;
        self.steps += self.horizon;
        Ok(g.values)
    }

    fn steps_consumed(&self) -> u64 {
        self.steps
    }
}
