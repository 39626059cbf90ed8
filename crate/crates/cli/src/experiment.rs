//! Experiment drivers.
//!
//! Each run index gets its own random stream derived from the master seed,
//! runs fan out over a thread pool, and records are sorted before they are
//! returned, so output does not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpomdp_core::analysis::{Evaluation, ExactOracle, average_reward_at, norm2, relative_error};
use gpomdp_core::gpomdp::{GpomdpOracle, estimate_with_checkpoints};
use gpomdp_core::optimizer::{ConjStatus, GradOracle, OptRunLog, conjpomdp};
use gpomdp_core::rng;
use gpomdp_core::{GradientVector, Policy};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, OracleKind};
use crate::error::{CliError, Result};
use crate::records::{RunRecord, emit_csv, format_f64, sort_records};

pub mod label {
    /// Per seed: `‖Δ_T − ∇η‖/‖∇η‖`.
    pub const GRAD_ERROR: &str = "grad-error";
    /// Per seed: `‖Δ_T − ∇_β η‖/‖∇_β η‖`.
    pub const GRAD_ERROR_BETA: &str = "grad-error-beta";
    /// Per seed: `‖Δ_T − ∇η‖/‖∇η‖` at each horizon of the sweep.
    pub const BIAS_SWEEP: &str = "bias-sweep";
    /// `‖∇η − ∇_β η‖/‖∇η‖`.
    pub const BIAS_SWEEP_EXACT: &str = "bias-sweep-exact";
    /// `‖mean_seeds Δ_T − ∇η‖/‖∇η‖`.
    pub const BIAS_SWEEP_MEAN: &str = "bias-sweep-mean";
    /// `‖standard error of mean_seeds Δ_T‖/‖∇η‖`.
    pub const BIAS_SWEEP_MEAN_SE: &str = "bias-sweep-mean-se";
    /// Per seed: exact `η` of the final controller against steps consumed.
    pub const TRAIN_FINAL: &str = "train-final";
    /// Per seed: exact `η` of the controller reached by a failed run.
    pub const TRAIN_FAILED: &str = "train-failed";
    /// Per seed: exact `η` of the current controller on the step grid.
    pub const TRAIN_CURVE: &str = "train-curve";
    /// Mean of `train-curve` over seeds.
    pub const TRAIN_CURVE_MEAN: &str = "train-curve-mean";
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Fill `wall_ms`. Timings make output non-reproducible, so this is off
    /// by default.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub records: Vec<RunRecord>,
    /// Ordered `key = value` lines for the run summary.
    pub summary: Vec<(String, String)>,
    pub runs: u64,
    pub failures: u64,
}

impl ExperimentOutput {
    pub fn summary_text(&self) -> String {
        self.summary
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Whether run failures exceed the allowed fraction.
    pub fn failures_exceed(&self, max_fraction: f64) -> bool {
        self.failures as f64 > max_fraction * self.runs as f64
    }

    /// Writes `<kind>.csv` and `<kind>_summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let csv = dir.join(format!("{}.csv", self.kind));
        emit_csv(&self.records, &csv)?;
        let summary = dir.join(format!("{}_summary.txt", self.kind));
        fs::write(&summary, self.summary_text()).map_err(|e| CliError::Io {
            path: summary.clone(),
            source: e,
        })?;
        Ok((csv, summary))
    }
}

pub fn run(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    match config.kind() {
        ExperimentKind::GradError => run_grad_error(config, options),
        ExperimentKind::BiasSweep => run_bias_sweep(config, options),
        ExperimentKind::Train => run_train(config, options),
    }
}

fn elapsed_ms(start: Instant, options: RunOptions) -> f64 {
    if options.record_wall_time {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn common_summary(config: &ExperimentConfig) -> Vec<(String, String)> {
    let f = &config.file;
    vec![
        ("experiment".into(), f.experiment.to_string()),
        ("master_seed".into(), f.master_seed.to_string()),
        ("seeds".into(), f.seeds.to_string()),
        ("start_state".into(), f.start_state.to_string()),
        ("n_params".into(), config.policy.n_params().to_string()),
    ]
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Componentwise mean and standard error of the mean.
pub fn mean_and_standard_error(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let k = samples[0].len();
    let mean: Vec<f64> = (0..k)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n)
        .collect();
    let se = (0..k)
        .map(|j| {
            let var = samples
                .iter()
                .map(|s| (s[j] - mean[j]).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, se)
}

fn theta_for(config: &ExperimentConfig, stream: &mut rng::ChaCha8Rng) -> Vec<f64> {
    config.file.theta.draw(config.policy.n_params(), stream)
}

/// `(β, Δ_T at each horizon, wall ms)`.
type BetaEstimates = (f64, Vec<GradientVector>, f64);

/// Δ_T at every configured horizon for every β, one sample path per seed.
/// All β share the seed's path: the trajectory does not depend on β.
fn estimates_per_seed(
    config: &ExperimentConfig,
    options: RunOptions,
) -> Result<Vec<(u64, Vec<BetaEstimates>)>> {
    let est = config.estimator();
    let f = &config.file;
    (0..f.seeds)
        .into_par_iter()
        .map(|seed| {
            let mut stream = rng::substream(f.master_seed, seed);
            let theta = theta_for(config, &mut stream);
            let per_beta = est
                .betas
                .iter()
                .map(|&beta| {
                    let start = Instant::now();
                    let mut path = stream.clone();
                    let grads = estimate_with_checkpoints(
                        &config.model,
                        &config.policy,
                        &theta,
                        beta,
                        &est.horizons,
                        f.start_state,
                        &mut path,
                    )?;
                    Ok((beta, grads, elapsed_ms(start, options)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((seed, per_beta))
        })
        .collect()
}

fn fixed_theta(config: &ExperimentConfig) -> Result<Vec<f64>> {
    match &config.file.theta {
        crate::config::ThetaRule::Fixed { values } => Ok(values.clone()),
        _ => Err(CliError::Config(format!(
            "{} needs a fixed theta so the exact gradient is well defined",
            config.kind()
        ))),
    }
}

/// Relative error of GPOMDP estimates against `∇η` (and against `∇_β η`)
/// along the configured horizons, for each β and seed.
pub fn run_grad_error(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    if config.kind() != ExperimentKind::GradError {
        return Err(CliError::Config("not a grad-error config".into()));
    }
    let theta = fixed_theta(config)?;
    let est = config.estimator();
    let rewards = config.model.rewards();
    let eval = Evaluation::at(&config.model, &config.policy, &theta)?;
    let targets = est
        .betas
        .iter()
        .map(|&b| eval.approx_gradient(rewards, b))
        .collect::<Result<Vec<_>, _>>()?;

    let per_seed = estimates_per_seed(config, options)?;
    let mut records = Vec::new();
    for (seed, per_beta) in &per_seed {
        for ((beta, grads, wall), target) in per_beta.iter().zip(&targets) {
            for (g, &t) in grads.iter().zip(&est.horizons) {
                let mut a = RunRecord::new(
                    label::GRAD_ERROR,
                    Some(*seed),
                    *beta,
                    t,
                    g.relative_error(&eval.gradient),
                );
                let mut b = RunRecord::new(
                    label::GRAD_ERROR_BETA,
                    Some(*seed),
                    *beta,
                    t,
                    g.relative_error(target),
                );
                a.wall_ms = *wall;
                b.wall_ms = *wall;
                records.push(a);
                records.push(b);
            }
        }
    }
    sort_records(&mut records);

    let mut summary = common_summary(config);
    summary.push(("eta".into(), format_f64(eval.average_reward)));
    let t_last = *est.horizons.last().expect("non-empty");
    for (i, beta) in est.betas.iter().enumerate() {
        let finals = |lab: &str| {
            let mut v: Vec<f64> = records
                .iter()
                .filter(|r| r.experiment == lab && r.beta == *beta && r.t_or_steps == t_last)
                .map(|r| r.value)
                .collect();
            median(&mut v)
        };
        summary.push((
            format!("beta[{beta}].exact_relative_bias"),
            format_f64(targets[i].relative_error(&eval.gradient)),
        ));
        summary.push((
            format!("beta[{beta}].median_error_vs_true_at_T{t_last}"),
            format_f64(finals(label::GRAD_ERROR)),
        ));
        summary.push((
            format!("beta[{beta}].median_error_vs_discounted_at_T{t_last}"),
            format_f64(finals(label::GRAD_ERROR_BETA)),
        ));
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::GradError,
        records,
        summary,
        runs: config.file.seeds,
        failures: 0,
    })
}

/// Long-run estimation error per β next to the exact bias of `∇_β η`.
pub fn run_bias_sweep(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    if config.kind() != ExperimentKind::BiasSweep {
        return Err(CliError::Config("not a bias-sweep config".into()));
    }
    let theta = fixed_theta(config)?;
    let est = config.estimator();
    let rewards = config.model.rewards();
    let eval = Evaluation::at(&config.model, &config.policy, &theta)?;
    let grad_norm = eval.gradient.norm();
    let t_last = *est.horizons.last().expect("non-empty");

    let per_seed = estimates_per_seed(config, options)?;
    let mut records = Vec::new();
    let mut summary = common_summary(config);
    summary.push(("eta".into(), format_f64(eval.average_reward)));
    summary.push(("horizon".into(), t_last.to_string()));

    for (i, &beta) in est.betas.iter().enumerate() {
        let exact_bias = eval.relative_bias(rewards, beta)?;
        records.push(RunRecord::new(
            label::BIAS_SWEEP_EXACT,
            None,
            beta,
            t_last,
            exact_bias,
        ));
        let mut finals = Vec::with_capacity(per_seed.len());
        for (seed, per_beta) in &per_seed {
            let (_, grads, wall) = &per_beta[i];
            for (g, &t) in grads.iter().zip(&est.horizons) {
                let mut r = RunRecord::new(
                    label::BIAS_SWEEP,
                    Some(*seed),
                    beta,
                    t,
                    g.relative_error(&eval.gradient),
                );
                r.wall_ms = *wall;
                records.push(r);
            }
            finals.push(grads.last().expect("non-empty").values.clone());
        }
        let (mean, se) = mean_and_standard_error(&finals);
        let mean_bias = relative_error(&mean, &eval.gradient);
        records.push(RunRecord::new(
            label::BIAS_SWEEP_MEAN,
            None,
            beta,
            t_last,
            mean_bias,
        ));
        summary.push((
            format!("beta[{beta}].exact_relative_bias"),
            format_f64(exact_bias),
        ));
        summary.push((
            format!("beta[{beta}].mean_estimate_relative_error"),
            format_f64(mean_bias),
        ));
        if finals.len() > 1 {
            let se_rel = norm2(&se) / grad_norm;
            records.push(RunRecord::new(
                label::BIAS_SWEEP_MEAN_SE,
                None,
                beta,
                t_last,
                se_rel,
            ));
            summary.push((
                format!("beta[{beta}].mean_estimate_standard_error"),
                format_f64(se_rel),
            ));
        }
    }
    sort_records(&mut records);
    Ok(ExperimentOutput {
        kind: ExperimentKind::BiasSweep,
        records,
        summary,
        runs: config.file.seeds,
        failures: 0,
    })
}

/// One conjugate-gradient training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub seed: u64,
    pub theta_init: Vec<f64>,
    pub theta_final: Vec<f64>,
    pub eta_final: f64,
    pub status: Option<ConjStatus>,
    pub error: Option<String>,
    pub steps: u64,
    /// `(cumulative steps, exact η)` after each completed line search,
    /// starting with `(0, η(θ_init))`.
    pub events: Vec<(u64, f64)>,
    pub wall_ms: f64,
}

fn train_one(config: &ExperimentConfig, seed: u64, options: RunOptions) -> Result<TrainRun> {
    let f = &config.file;
    let opt = config.optimizer();
    let model = &config.model;
    let policy = &config.policy;
    let start = Instant::now();
    let mut stream = rng::substream(f.master_seed, seed);
    let theta_init = theta_for(config, &mut stream);

    let result = match opt.oracle {
        OracleKind::Gpomdp => {
            let mut oracle =
                GpomdpOracle::new(model, policy, opt.beta, opt.steps_per_call, stream)?
                    .with_start_state(f.start_state);
            conjpomdp(
                &mut oracle as &mut dyn GradOracle,
                &theta_init,
                opt.settings(),
            )
        }
        OracleKind::Exact => {
            let mut oracle = ExactOracle { model, policy };
            conjpomdp(
                &mut oracle as &mut dyn GradOracle,
                &theta_init,
                opt.settings(),
            )
        }
    };
    let (theta_final, status, error, log): (Vec<f64>, _, _, OptRunLog) = match result {
        Ok(out) => (out.theta, Some(out.status), None, out.log),
        Err(fail) => (fail.theta, None, Some(fail.error.to_string()), fail.log),
    };

    let eta = |theta: &[f64]| average_reward_at(model, policy, theta).unwrap_or(f64::NAN);
    let mut events = vec![(0, eta(&theta_init))];
    for ls in &log.line_searches {
        if let Some(theta) = &ls.theta_after {
            events.push((ls.calls_at_end * opt.steps_per_call, eta(theta)));
        }
    }
    Ok(TrainRun {
        seed,
        eta_final: eta(&theta_final),
        theta_init,
        theta_final,
        status,
        error,
        steps: log.oracle_calls * opt.steps_per_call,
        events,
        wall_ms: elapsed_ms(start, options),
    })
}

/// Exact `η` of the latest controller with at most `steps` steps consumed.
fn curve_value(events: &[(u64, f64)], steps: u64) -> f64 {
    events
        .iter()
        .take_while(|(s, _)| *s <= steps)
        .last()
        .map(|(_, e)| *e)
        .unwrap_or(events[0].1)
}

pub fn train_runs(config: &ExperimentConfig, options: RunOptions) -> Result<Vec<TrainRun>> {
    (0..config.file.seeds)
        .into_par_iter()
        .map(|seed| train_one(config, seed, options))
        .collect()
}

/// Conjugate-gradient training from random initial parameters, scored by
/// the exact average reward of each final controller.
pub fn run_train(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    if config.kind() != ExperimentKind::Train {
        return Err(CliError::Config("not a train config".into()));
    }
    let opt = config.optimizer();
    let runs = train_runs(config, options)?;
    let grid = opt.curve_grid();
    let beta = opt.beta;

    let mut records = Vec::new();
    let mut curve_sums = vec![0.0; grid.len()];
    for run in &runs {
        let lab = if run.error.is_some() {
            label::TRAIN_FAILED
        } else {
            label::TRAIN_FINAL
        };
        let mut r = RunRecord::new(lab, Some(run.seed), beta, run.steps, run.eta_final);
        r.wall_ms = run.wall_ms;
        records.push(r);
        for (sum, &g) in curve_sums.iter_mut().zip(&grid) {
            let v = curve_value(&run.events, g);
            *sum += v;
            records.push(RunRecord::new(
                label::TRAIN_CURVE,
                Some(run.seed),
                beta,
                g,
                v,
            ));
        }
    }
    for (sum, &g) in curve_sums.iter().zip(&grid) {
        records.push(RunRecord::new(
            label::TRAIN_CURVE_MEAN,
            None,
            beta,
            g,
            sum / runs.len() as f64,
        ));
    }
    sort_records(&mut records);

    let ok: Vec<f64> = runs
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.eta_final)
        .collect();
    let failures = (runs.len() - ok.len()) as u64;
    let exhausted = runs
        .iter()
        .filter(|r| r.status == Some(ConjStatus::BudgetExhausted))
        .count();
    let mut summary = common_summary(config);
    summary.push((
        "oracle".into(),
        match opt.oracle {
            OracleKind::Gpomdp => "gpomdp".into(),
            OracleKind::Exact => "exact".into(),
        },
    ));
    summary.push(("beta".into(), format_f64(beta)));
    summary.push(("steps_per_call".into(), opt.steps_per_call.to_string()));
    summary.push(("failures".into(), failures.to_string()));
    summary.push(("budget_exhausted".into(), exhausted.to_string()));
    if !ok.is_empty() {
        summary.push((
            "mean_final_eta".into(),
            format_f64(ok.iter().sum::<f64>() / ok.len() as f64),
        ));
        summary.push(("min_final_eta".into(), format_f64(quantile(&ok, 0.0))));
        summary.push(("q10_final_eta".into(), format_f64(quantile(&ok, 0.1))));
        summary.push(("q90_final_eta".into(), format_f64(quantile(&ok, 0.9))));
    }
    let mean_steps = runs.iter().map(|r| r.steps as f64).sum::<f64>() / runs.len() as f64;
    summary.push(("mean_steps".into(), format_f64(mean_steps)));
    for run in runs.iter().filter(|r| r.error.is_some()) {
        summary.push((
            format!("failure[{}]", run.seed),
            run.error.clone().unwrap_or_default(),
        ));
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::Train,
        records,
        summary,
        runs: runs.len() as u64,
        failures,
    })
}
