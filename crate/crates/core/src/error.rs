use thiserror::Error;

/// Errors raised by the model, policy, analysis, estimator and optimizer layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The policy assigns zero probability to the control whose score was requested.
    #[error(
        "singular score: control {control} has probability {prob} under observation {observation}"
    )]
    SingularScore {
        observation: usize,
        control: usize,
        prob: f64,
    },

    /// The induced chain does not have a unique stationary distribution, or a
    /// linear system derived from it is numerically singular.
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    /// A non-finite score reached the eligibility trace.
    #[error("estimator poisoned at step {step}: non-finite score component {index}")]
    EstimatorPoisoned { step: u64, index: usize },

    /// The line search could not bracket a maximum within its step cap.
    #[error("bracket failure after {steps} {phase} steps (last step size {last_step})")]
    BracketFailure {
        phase: &'static str,
        steps: usize,
        last_step: f64,
    },

    /// The search direction is not an ascent direction even after a reset.
    #[error("search direction is not an ascent direction (directional derivative {0})")]
    NotAscent(f64),

    /// Model file could not be parsed or had the wrong shape.
    #[error("model format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
