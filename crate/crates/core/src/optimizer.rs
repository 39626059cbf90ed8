//! Gradient-only ascent: a Polak-Ribière conjugate-gradient loop driven by
//! (possibly noisy, biased) gradient estimates, and a line search that
//! brackets the maximum along a ray from the signs of directional derivatives
//! alone.
//!
//! Function values are never requested. A sign test `Δ·θ* > 0` is exactly as
//! reliable at every separation between probe points, which is what makes the
//! bracket usable with simulation estimates.

use crate::error::{Error, Result};

/// A source of gradient estimates to be ascended.
pub trait GradOracle {
    fn gradient(&mut self, theta: &[f64]) -> Result<Vec<f64>>;

    /// Simulation steps consumed by all calls so far.
    fn steps_consumed(&self) -> u64 {
        0
    }
}

/// Adapts a closure `θ ↦ gradient` into an oracle.
pub struct FnOracle<F>(pub F);

impl<F: FnMut(&[f64]) -> Vec<f64>> GradOracle for FnOracle<F> {
    fn gradient(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(theta))
    }
}

/// Counts calls and forwards to an inner oracle.
struct Counted<'a, O: ?Sized> {
    inner: &'a mut O,
    log: &'a mut OptRunLog,
}

impl<O: GradOracle + ?Sized> Counted<'_, O> {
    fn call(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        let g = self.inner.gradient(theta)?;
        self.log.oracle_calls += 1;
        self.log.simulation_steps = self.inner.steps_consumed();
        if g.len() != theta.len() {
            return Err(Error::Precondition(format!(
                "oracle returned {} components for {} parameters",
                g.len(),
                theta.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(
                "oracle returned a non-finite gradient".into(),
            ));
        }
        Ok(g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(base: &[f64], s: f64, dir: &[f64]) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + s * d).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    /// Inner-product resolution `ε ≥ 0`.
    pub epsilon: f64,
    /// Maximum number of doublings or halvings.
    pub max_bracket_steps: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            max_bracket_steps: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjSettings {
    /// Initial step handed to each line search.
    pub s0: f64,
    /// Gradient resolution: stop once `‖g‖² < ε`.
    pub epsilon: f64,
    /// Inner-product resolution for the line search; `None` reuses `epsilon`.
    pub line_search_epsilon: Option<f64>,
    pub max_bracket_steps: usize,
    pub max_iterations: usize,
    /// Confirm `GRAD(θ)·h > 0` with a fresh oracle call before each search.
    pub check_ascent: bool,
}

impl Default for ConjSettings {
    fn default() -> Self {
        Self {
            s0: 100.0,
            epsilon: 1e-4,
            line_search_epsilon: None,
            max_bracket_steps: 60,
            max_iterations: 200,
            check_ascent: true,
        }
    }
}

impl ConjSettings {
    fn search(&self) -> SearchSettings {
        SearchSettings {
            epsilon: self.line_search_epsilon.unwrap_or(self.epsilon),
            max_bracket_steps: self.max_bracket_steps,
        }
    }
}

/// One oracle probe along the search ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub step: f64,
    /// `Δ·θ*` at `θ_0 + step θ*`.
    pub slope: f64,
}

/// Bracket endpoints: `slope_minus > 0 > slope_plus` on success.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketState {
    pub s_minus: f64,
    pub s_plus: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl BracketState {
    pub fn is_sign_change(&self) -> bool {
        self.p_minus > 0.0 && self.p_plus < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchRecord {
    pub theta_before: Vec<f64>,
    pub direction: Vec<f64>,
    pub probes: Vec<Probe>,
    pub bracket: Option<BracketState>,
    /// Step finally taken; `None` if the search failed.
    pub step: Option<f64>,
    pub interpolated: bool,
    pub theta_after: Option<Vec<f64>>,
    /// Oracle calls made by this search.
    pub oracle_calls: u64,
    /// Oracle calls made by the whole run when this search finished.
    pub calls_at_end: u64,
    /// Simulation steps consumed by the whole run when this search finished.
    pub simulation_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// `‖g‖²` at the top of the loop.
    pub grad_norm_sq: f64,
    pub gamma: Option<f64>,
    /// Whether `h` was reset to the latest gradient.
    pub reset: bool,
    pub direction: Vec<f64>,
}

/// Everything an optimizer run did, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptRunLog {
    pub line_searches: Vec<LineSearchRecord>,
    pub iterations: Vec<IterationRecord>,
    pub ascent_resets: usize,
    pub oracle_calls: u64,
    pub simulation_steps: u64,
}

/// Finds a step along `direction` from `theta0` that approximately maximizes
/// the objective, using gradient signs only.
///
/// Probes at `θ_0 + sθ*`. If the slope there is negative, `s` is halved until
/// it exceeds `−ε`; otherwise `s` is doubled until it drops below `ε`. With a
/// sign change the secant root of the slope is returned, otherwise the
/// midpoint of the bracket.
pub fn gsearch<O: GradOracle + ?Sized>(
    oracle: &mut O,
    theta0: &[f64],
    direction: &[f64],
    step: f64,
    settings: SearchSettings,
    log: &mut OptRunLog,
) -> Result<Vec<f64>> {
    if direction.len() != theta0.len() {
        return Err(Error::Precondition(
            "direction and θ differ in length".into(),
        ));
    }
    if direction.iter().all(|d| *d == 0.0) {
        return Err(Error::Precondition("search direction is zero".into()));
    }
    if !(step > 0.0) || !(settings.epsilon >= 0.0) {
        return Err(Error::Precondition(format!(
            "need s > 0 and ε ≥ 0, got s = {step}, ε = {}",
            settings.epsilon
        )));
    }
    let eps = settings.epsilon;
    let calls_before = log.oracle_calls;
    let mut record = LineSearchRecord {
        theta_before: theta0.to_vec(),
        direction: direction.to_vec(),
        probes: Vec::new(),
        bracket: None,
        step: None,
        interpolated: false,
        theta_after: None,
        oracle_calls: 0,
        calls_at_end: 0,
        simulation_steps: 0,
    };

    let outcome = (|| {
        let mut oracle = Counted {
            inner: &mut *oracle,
            log: &mut *log,
        };
        let mut s = step;
        let mut slope = dot(&oracle.call(&axpy(theta0, s, direction))?, direction);
        record.probes.push(Probe { step: s, slope });

        let (s_minus, p_minus, s_plus, p_plus);
        let mut count = 0;
        if slope < 0.0 {
            // step back
            let (mut sp, mut pp);
            loop {
                if count == settings.max_bracket_steps {
                    return Err(Error::BracketFailure {
                        phase: "halving",
                        steps: count,
                        last_step: s,
                    });
                }
                count += 1;
                sp = s;
                pp = slope;
                s /= 2.0;
                slope = dot(&oracle.call(&axpy(theta0, s, direction))?, direction);
                record.probes.push(Probe { step: s, slope });
                if slope > -eps {
                    break;
                }
            }
            s_plus = sp;
            p_plus = pp;
            s_minus = s;
            p_minus = slope;
        } else {
            // step forward; (s_-, p_-) are first assigned inside the loop body
            let (mut sm, mut pm);
            loop {
                if count == settings.max_bracket_steps {
                    return Err(Error::BracketFailure {
                        phase: "doubling",
                        steps: count,
                        last_step: s,
                    });
                }
                count += 1;
                sm = s;
                pm = slope;
                s *= 2.0;
                slope = dot(&oracle.call(&axpy(theta0, s, direction))?, direction);
                record.probes.push(Probe { step: s, slope });
                if slope < eps {
                    break;
                }
            }
            s_minus = sm;
            p_minus = pm;
            s_plus = s;
            p_plus = slope;
        }

        let bracket = BracketState {
            s_minus,
            s_plus,
            p_minus,
            p_plus,
        };
        record.bracket = Some(bracket);
        let chosen = if bracket.is_sign_change() {
            record.interpolated = true;
            (s_minus * p_plus - s_plus * p_minus) / (p_plus - p_minus)
        } else {
            (s_minus + s_plus) / 2.0
        };
        Ok(chosen)
    })();

    record.oracle_calls = log.oracle_calls - calls_before;
    record.calls_at_end = log.oracle_calls;
    record.simulation_steps = log.simulation_steps;
    let result = outcome.map(|s| {
        let theta = axpy(theta0, s, direction);
        record.step = Some(s);
        record.theta_after = Some(theta.clone());
        theta
    });
    log.line_searches.push(record);
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjStatus {
    /// `‖g‖² < ε`.
    Converged,
    /// The iteration cap was reached first.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjOutcome {
    pub theta: Vec<f64>,
    pub status: ConjStatus,
    pub log: OptRunLog,
}

/// A failed optimizer run: the error plus everything done before it.
#[derive(Debug)]
pub struct OptimizeFailure {
    pub error: Error,
    pub theta: Vec<f64>,
    pub log: OptRunLog,
}

impl std::fmt::Display for OptimizeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} line searches",
            self.error,
            self.log.line_searches.len()
        )
    }
}

impl std::error::Error for OptimizeFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Polak-Ribière conjugate-gradient ascent driven only by `oracle`.
///
/// On hitting `max_iterations` the run returns the current `θ` with status
/// [`ConjStatus::BudgetExhausted`]; no function values exist to rank earlier
/// iterates by.
pub fn conjpomdp<O: GradOracle + ?Sized>(
    oracle: &mut O,
    theta_init: &[f64],
    settings: ConjSettings,
) -> Result<ConjOutcome, Box<OptimizeFailure>> {
    let mut log = OptRunLog::default();
    let mut theta = theta_init.to_vec();
    match conj_loop(oracle, &mut theta, settings, &mut log) {
        Ok(status) => Ok(ConjOutcome { theta, status, log }),
        Err(error) => Err(Box::new(OptimizeFailure { error, theta, log })),
    }
}

fn conj_loop<O: GradOracle + ?Sized>(
    oracle: &mut O,
    theta: &mut Vec<f64>,
    settings: ConjSettings,
    log: &mut OptRunLog,
) -> Result<ConjStatus> {
    if !(settings.s0 > 0.0) || !(settings.epsilon > 0.0) {
        return Err(Error::Precondition(format!(
            "need s0 > 0 and ε > 0, got s0 = {}, ε = {}",
            settings.s0, settings.epsilon
        )));
    }
    let search = settings.search();
    let mut g = Counted {
        inner: &mut *oracle,
        log: &mut *log,
    }
    .call(theta)?;
    let mut h = g.clone();
    let mut iterations = 0;

    loop {
        let g_norm_sq = dot(&g, &g);
        if g_norm_sq < settings.epsilon {
            return Ok(ConjStatus::Converged);
        }
        if iterations == settings.max_iterations {
            return Ok(ConjStatus::BudgetExhausted);
        }
        iterations += 1;

        if settings.check_ascent {
            let mut counted = Counted {
                inner: &mut *oracle,
                log: &mut *log,
            };
            let fresh = counted.call(theta)?;
            if dot(&fresh, &h) <= 0.0 {
                counted.log.ascent_resets += 1;
                h = fresh;
                let again = counted.call(theta)?;
                let slope = dot(&again, &h);
                if slope <= 0.0 {
                    return Err(Error::NotAscent(slope));
                }
            }
        }

        *theta = gsearch(&mut *oracle, theta, &h, settings.s0, search, log)?;
        let delta = Counted {
            inner: &mut *oracle,
            log: &mut *log,
        }
        .call(theta)?;
        let diff: Vec<f64> = delta.iter().zip(&g).map(|(d, gi)| d - gi).collect();
        let gamma = dot(&diff, &delta) / g_norm_sq;
        h = delta.iter().zip(&h).map(|(d, hi)| d + gamma * hi).collect();
        let reset = dot(&h, &delta) < 0.0;
        if reset {
            h = delta.clone();
        }
        log.iterations.push(IterationRecord {
            grad_norm_sq: g_norm_sq,
            gamma: Some(gamma),
            reset,
            direction: h.clone(),
        });
        g = delta;
    }
}
