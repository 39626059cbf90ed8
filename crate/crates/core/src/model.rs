//! Finite POMDPs: representation, validation and simulation.
//!
//! A model has `n` hidden states, `N` controls and `M` observations. Control
//! `u` moves the chain with the row-stochastic matrix `P(u)`; state `i` emits
//! an observation drawn from `ν(i)`; entering state `j` pays `r(j)`.
//!
//! # File format
//!
//! Models are TOML documents:
//!
//! ```toml
//! schema_version = 1
//! n_states = 2
//! n_controls = 1
//! n_observations = 1
//! state_labels = ["left", "right"]      # optional
//! control_labels = ["stay"]             # optional
//! rewards = [0.0, 1.0]
//! observation_dist = [[1.0], [1.0]]     # one row per state, M entries
//! # one n x n matrix per control, rows indexed by origin state
//! transitions = [
//!     [[0.5, 0.5], [0.5, 0.5]],
//! ]
//! ```

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;

/// Tolerance on row sums of stochastic inputs.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Current model file schema version.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    transitions: Vec<DMatrix<f64>>,
    observation_dist: DMatrix<f64>,
    rewards: DVector<f64>,
    state_labels: Option<Vec<String>>,
    control_labels: Option<Vec<String>>,
    // Row-major cumulative tables used by the samplers.
    transition_cdf: Vec<Vec<Vec<f64>>>,
    observation_cdf: Vec<Vec<f64>>,
}

impl PomdpModel {
    /// Builds a model from per-control transition matrices, an `n x M`
    /// observation matrix and a reward vector.
    ///
    /// Only shapes and finiteness are checked here; stochasticity is the job
    /// of [`validate`](Self::validate), which reports instead of repairing.
    pub fn new(
        transitions: Vec<DMatrix<f64>>,
        observation_dist: DMatrix<f64>,
        rewards: DVector<f64>,
    ) -> Result<Self> {
        let n = rewards.len();
        if n == 0 {
            return Err(Error::Format("model needs at least one state".into()));
        }
        if transitions.is_empty() {
            return Err(Error::Format("model needs at least one control".into()));
        }
        for (u, p) in transitions.iter().enumerate() {
            if p.shape() != (n, n) {
                return Err(Error::Format(format!(
                    "transition matrix for control {u} is {}x{}, expected {n}x{n}",
                    p.nrows(),
                    p.ncols()
                )));
            }
        }
        if observation_dist.nrows() != n || observation_dist.ncols() == 0 {
            return Err(Error::Format(format!(
                "observation matrix is {}x{}, expected {n} rows and at least one column",
                observation_dist.nrows(),
                observation_dist.ncols()
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Format("rewards must be finite".into()));
        }

        let transition_cdf = transitions
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| cumulative(p.row(i).iter().copied()))
                    .collect()
            })
            .collect();
        let observation_cdf = (0..n)
            .map(|i| cumulative(observation_dist.row(i).iter().copied()))
            .collect();

        Ok(Self {
            transitions,
            observation_dist,
            rewards,
            state_labels: None,
            control_labels: None,
            transition_cdf,
            observation_cdf,
        })
    }

    /// A fully observed model: `M = n` and state `i` always emits observation `i`.
    pub fn fully_observed(transitions: Vec<DMatrix<f64>>, rewards: DVector<f64>) -> Result<Self> {
        let n = rewards.len();
        Self::new(transitions, DMatrix::identity(n, n), rewards)
    }

    pub fn with_labels(
        mut self,
        states: Option<Vec<String>>,
        controls: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(s) = &states
            && s.len() != self.n_states() {
                return Err(Error::Format(format!(
                    "{} state labels for {} states",
                    s.len(),
                    self.n_states()
                )));
            }
        if let Some(c) = &controls
            && c.len() != self.n_controls() {
                return Err(Error::Format(format!(
                    "{} control labels for {} controls",
                    c.len(),
                    self.n_controls()
                )));
            }
        self.state_labels = states;
        self.control_labels = controls;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_controls(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observation_dist.ncols()
    }

    /// `P(u)`.
    pub fn transition(&self, control: usize) -> &DMatrix<f64> {
        &self.transitions[control]
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    /// Row `i` holds `ν(i)`.
    pub fn observation_dist(&self) -> &DMatrix<f64> {
        &self.observation_dist
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn control_labels(&self) -> Option<&[String]> {
        self.control_labels.as_deref()
    }

    /// The reward bound `R = max_i |r(i)|`.
    pub fn reward_bound(&self) -> f64 {
        self.rewards.amax()
    }

    /// Checks every stochasticity invariant and lists each violation.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (u, p) in self.transitions.iter().enumerate() {
            for i in 0..self.n_states() {
                check_distribution(
                    p.row(i).iter().copied(),
                    || format!("transitions[{u}] row {i}"),
                    &mut violations,
                );
            }
        }
        for i in 0..self.n_states() {
            check_distribution(
                self.observation_dist.row(i).iter().copied(),
                || format!("observation_dist row {i}"),
                &mut violations,
            );
        }
        ValidationReport { violations }
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.n_states() {
            return Err(Error::Precondition(format!(
                "state index {state} out of range for {} states",
                self.n_states()
            )));
        }
        Ok(())
    }

    fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Precondition(format!("model is invalid: {report}")))
        }
    }

    /// Draws `y ~ ν(i)`.
    pub fn sample_observation<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_cdf(&self.observation_cdf[state], rng.random())
    }

    /// Draws `j ~ P(u)` row `i`.
    pub fn sample_next_state<R: Rng + ?Sized>(
        &self,
        state: usize,
        control: usize,
        rng: &mut R,
    ) -> usize {
        sample_cdf(&self.transition_cdf[control][state], rng.random())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        file.try_into()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ModelFile::from(self)).expect("model serializes")
    }
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    probs
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Inverse-CDF draw: the first index whose cumulative mass exceeds `u`.
///
/// Zero-mass entries own an empty interval and are never returned. If
/// rounding leaves the total below `u`, the last entry with positive mass is
/// returned.
fn sample_cdf(cdf: &[f64], u: f64) -> usize {
    let idx = cdf.partition_point(|&c| c <= u);
    if idx < cdf.len() {
        return idx;
    }
    let mut last = cdf.len() - 1;
    while last > 0 && cdf[last] <= cdf[last - 1] {
        last -= 1;
    }
    last
}

fn check_distribution(
    row: impl Iterator<Item = f64> + Clone,
    location: impl Fn() -> String,
    out: &mut Vec<Violation>,
) {
    if let Some(v) = row.clone().find(|p| !p.is_finite() || *p < 0.0) {
        out.push(Violation {
            location: location(),
            kind: ViolationKind::NegativeEntry,
            residual: v,
        });
        return;
    }
    let sum: f64 = row.sum();
    let residual = (1.0 - sum).abs();
    if residual > STOCHASTIC_TOL {
        out.push(Violation {
            location: location(),
            kind: ViolationKind::RowSum,
            residual,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Row does not sum to one; residual is `|1 - sum|`.
    RowSum,
    /// Row holds a negative or non-finite entry; residual is that entry.
    NegativeEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub kind: ViolationKind,
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::RowSum => {
                write!(f, "{}: row sum off by {:e}", self.location, self.residual)
            }
            ViolationKind::NegativeEntry => {
                write!(f, "{}: invalid entry {}", self.location, self.residual)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: usize,
    pub control: usize,
    pub next_state: usize,
    /// `r(next_state)`, the reward of the state just entered.
    pub reward: f64,
}

/// One step of the chain under a fixed control distribution: `y ~ ν(i)`,
/// `u ~ control_probs`, `j ~ P(u)` row `i`.
pub fn step<R: Rng + ?Sized>(
    model: &PomdpModel,
    control_probs: &[f64],
    state: usize,
    rng: &mut R,
) -> Result<StepOutcome> {
    model.check_state(state)?;
    if control_probs.len() != model.n_controls() {
        return Err(Error::Precondition(format!(
            "control distribution has {} entries, model has {} controls",
            control_probs.len(),
            model.n_controls()
        )));
    }
    let total: f64 = control_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || control_probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Precondition(format!(
            "control distribution is not a probability vector (sum {total})"
        )));
    }
    let observation = model.sample_observation(state, rng);
    let control = sample_cdf(&cumulative(control_probs.iter().copied()), rng.random());
    let next_state = model.sample_next_state(state, control, rng);
    Ok(StepOutcome {
        observation,
        control,
        next_state,
        reward: model.rewards[next_state],
    })
}

/// One recorded transition `(i_t, y_t, u_t, r(i_{t+1}))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub state: usize,
    pub observation: usize,
    pub control: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// State after the last recorded transition.
    pub final_state: usize,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The state entered by step `t`.
    pub fn next_state(&self, t: usize) -> usize {
        self.steps
            .get(t + 1)
            .map(|s| s.state)
            .unwrap_or(self.final_state)
    }
}

/// Policy-driven sampler over a model.
///
/// Control probabilities for every observation are computed once up front:
/// the policy is memoryless and `θ` is fixed for the lifetime of the sampler.
pub struct Simulator<'a> {
    model: &'a PomdpModel,
    control_cdf: Vec<Vec<f64>>,
    state: usize,
}

impl<'a> Simulator<'a> {
    pub fn new<P: Policy + ?Sized>(
        model: &'a PomdpModel,
        policy: &P,
        theta: &[f64],
        start_state: usize,
    ) -> Result<Self> {
        model.require_valid()?;
        model.check_state(start_state)?;
        check_policy_shape(model, policy)?;
        let mut buf = vec![0.0; model.n_controls()];
        let mut control_cdf = Vec::with_capacity(model.n_observations());
        for y in 0..model.n_observations() {
            policy.probs_into(theta, y, &mut buf)?;
            control_cdf.push(cumulative(buf.iter().copied()));
        }
        Ok(Self {
            model,
            control_cdf,
            state: start_state,
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Advances one transition and returns what was observed, chosen and paid.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let observation = self.model.sample_observation(self.state, rng);
        let control = sample_cdf(&self.control_cdf[observation], rng.random());
        let next_state = self.model.sample_next_state(self.state, control, rng);
        self.state = next_state;
        StepOutcome {
            observation,
            control,
            next_state,
            reward: self.model.rewards[next_state],
        }
    }
}

pub(crate) fn check_policy_shape<P: Policy + ?Sized>(model: &PomdpModel, policy: &P) -> Result<()> {
    if policy.n_controls() != model.n_controls()
        || policy.n_observations() != model.n_observations()
    {
        return Err(Error::Precondition(format!(
            "policy covers {} observations x {} controls, model has {} x {}",
            policy.n_observations(),
            policy.n_controls(),
            model.n_observations(),
            model.n_controls()
        )));
    }
    Ok(())
}

/// Samples a trajectory of exactly `horizon` transitions from `start_state`.
pub fn simulate<P: Policy + ?Sized>(
    model: &PomdpModel,
    policy: &P,
    theta: &[f64],
    horizon: usize,
    start_state: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    let mut sim = Simulator::new(model, policy, theta, start_state)?;
    let mut rng = rng::from_seed(seed);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let state = sim.state();
        let out = sim.advance(&mut rng);
        steps.push(TrajectoryStep {
            state,
            observation: out.observation,
            control: out.control,
            reward: out.reward,
        });
    }
    Ok(Trajectory {
        steps,
        final_state: sim.state(),
        seed,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    n_states: usize,
    n_controls: usize,
    n_observations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    control_labels: Option<Vec<String>>,
    rewards: Vec<f64>,
    observation_dist: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    what: &str,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<ModelFile> for PomdpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {} (expected {MODEL_SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        if f.rewards.len() != f.n_states {
            return Err(Error::Format(format!(
                "rewards has {} entries, n_states is {}",
                f.rewards.len(),
                f.n_states
            )));
        }
        if f.transitions.len() != f.n_controls {
            return Err(Error::Format(format!(
                "transitions has {} matrices, n_controls is {}",
                f.transitions.len(),
                f.n_controls
            )));
        }
        let transitions = f
            .transitions
            .iter()
            .enumerate()
            .map(|(u, m)| matrix_from_rows(m, f.n_states, f.n_states, &format!("transitions[{u}]")))
            .collect::<Result<Vec<_>>>()?;
        let obs = matrix_from_rows(
            &f.observation_dist,
            f.n_states,
            f.n_observations,
            "observation_dist",
        )?;
        PomdpModel::new(transitions, obs, DVector::from_vec(f.rewards))?
            .with_labels(f.state_labels, f.control_labels)
    }
}

impl From<&PomdpModel> for ModelFile {
    fn from(m: &PomdpModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            n_states: m.n_states(),
            n_controls: m.n_controls(),
            n_observations: m.n_observations(),
            state_labels: m.state_labels.clone(),
            control_labels: m.control_labels.clone(),
            rewards: m.rewards.iter().copied().collect(),
            observation_dist: rows_of(&m.observation_dist),
            transitions: m.transitions.iter().map(rows_of).collect(),
        }
    }
}
