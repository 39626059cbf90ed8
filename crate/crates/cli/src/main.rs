use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpomdp_cli::config::ThetaRule;
use gpomdp_cli::{CliError, ExperimentConfig, ExperimentKind, RunOptions, run};
use gpomdp_core::PomdpModel;
use gpomdp_core::analysis::{
    Evaluation, discounted_equivalence_check, discounted_values, gradient_decomposition_check,
    mixing_time,
};

/// Exit status when more runs fail than the config allows.
const EXIT_TOO_MANY_FAILURES: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gpomdp",
    version,
    about = "GPOMDP gradient estimation and conjugate-gradient training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a model file is well formed and its matrices are stochastic.
    Validate { model: PathBuf },
    /// Estimation error of Δ_T against T for each β.
    GradError(RunArgs),
    /// Long-run estimation error and exact bias against β.
    BiasSweep(RunArgs),
    /// Conjugate-gradient training from random starting parameters.
    Train(RunArgs),
    /// Exact quantities of the controller fixed by a config's theta.
    Analyze {
        /// A config with a fixed theta; the built-in grad-error config if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override theta, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        /// Discount factors for ∇_β η, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,0.4,0.8,0.9,0.95,0.99")]
        beta: Vec<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config; the built-in default if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of runs.
    #[arg(long)]
    runs: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record wall-clock time per run (output is then not reproducible).
    #[arg(long)]
    wall_time: bool,
}

fn load(config: Option<&Path>, kind: ExperimentKind) -> Result<ExperimentConfig, CliError> {
    let c = match config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::builtin(kind),
    };
    if c.kind() != kind {
        return Err(CliError::Config(format!(
            "config is for experiment {}, not {kind}",
            c.kind()
        )));
    }
    Ok(c)
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> Result<ExitCode, CliError> {
    let config = load(args.config.as_deref(), kind)?.with_overrides(args.seed, args.runs)?;
    let output = run(
        &config,
        RunOptions {
            record_wall_time: args.wall_time,
        },
    )?;
    let (csv, summary) = output.write(&args.out)?;
    print!("{}", output.summary_text());
    println!("wrote {} and {}", csv.display(), summary.display());
    if output.failures_exceed(config.file.max_failure_fraction) {
        eprintln!(
            "error: {} of {} runs failed (allowed fraction {})",
            output.failures, output.runs, config.file.max_failure_fraction
        );
        return Ok(ExitCode::from(EXIT_TOO_MANY_FAILURES));
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(path: &Path) -> Result<ExitCode, CliError> {
    let model = PomdpModel::from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
    let report = model.validate();
    if report.is_valid() {
        println!(
            "{}: ok ({} states, {} controls, {} observations)",
            path.display(),
            model.n_states(),
            model.n_controls(),
            model.n_observations()
        );
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::Config(format!("{}: {report}", path.display())))
    }
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

fn analyze(
    config: Option<&Path>,
    theta: Option<Vec<f64>>,
    betas: &[f64],
) -> Result<ExitCode, CliError> {
    let c = match config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::builtin(ExperimentKind::GradError),
    };
    let theta = match (theta, &c.file.theta) {
        (Some(t), _) => t,
        (None, ThetaRule::Fixed { values }) => values.clone(),
        (None, _) => {
            return Err(CliError::Config(
                "config theta is not fixed; pass --theta".into(),
            ));
        }
    };
    let rewards = c.model.rewards();
    let eval = Evaluation::at(&c.model, &c.policy, &theta)?;
    let mixing = mixing_time(&eval.chain.transition, 1000)?;
    println!("theta = {}", fmt_vec(theta.iter().copied()));
    println!("pi = {}", fmt_vec(eval.stationary.iter().copied()));
    println!("eta = {:.10}", eval.average_reward);
    println!("grad_eta = {}", fmt_vec(eval.gradient.iter().copied()));
    match mixing.tau_star {
        Some(t) => println!("tau_star = {t}"),
        None => println!("tau_star = > 1000"),
    }
    for &beta in betas {
        let approx = eval.approx_gradient(rewards, beta)?;
        let values = discounted_values(&eval.chain.transition, rewards, beta)?;
        let split = gradient_decomposition_check(&eval.chain, &eval.stationary, rewards, &values)?;
        println!(
            "beta = {beta}: grad_beta = {}, relative_bias = {:.6e}, split_residual = {split:.3e}",
            fmt_vec(approx.iter().copied()),
            approx.relative_error(&eval.gradient)
        );
    }
    let equiv = discounted_equivalence_check(&c.model, &c.policy, &theta, 0.9)?;
    println!("discounted_equivalence_residual(alpha=0.9) = {equiv:.3e}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Validate { model } => validate(model),
        Command::GradError(a) => run_experiment(ExperimentKind::GradError, a),
        Command::BiasSweep(a) => run_experiment(ExperimentKind::BiasSweep, a),
        Command::Train(a) => run_experiment(ExperimentKind::Train, a),
        Command::Analyze {
            config,
            theta,
            beta,
        } => analyze(config.as_deref(), theta.clone(), beta),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
