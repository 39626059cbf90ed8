//! Experiment configuration files.
//!
//! Configs are TOML documents in the same style as model files. The model
//! path is resolved relative to the config file. See `configs/` at the
//! repository root for one complete example per experiment kind.

use std::fmt;
use std::path::{Path, PathBuf};

use gpomdp_core::policy::{FeatureTable, Policy, SoftmaxLinearPolicy, TabularPolicy};
use gpomdp_core::{ConjSettings, PomdpModel};
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GradError,
    BiasSweep,
    Train,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GradError => "grad-error",
            ExperimentKind::BiasSweep => "bias-sweep",
            ExperimentKind::Train => "train",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    /// One weight vector per control over shared per-observation features.
    SoftmaxLinear {
        features: Vec<Vec<f64>>,
        /// Features are divided by this value.
        #[serde(default = "one")]
        feature_scale: f64,
    },
    /// One softmax per observation.
    Tabular,
}

fn one() -> f64 {
    1.0
}

/// A policy built from a [`PolicySpec`].
#[derive(Debug, Clone)]
pub enum PolicyImpl {
    SoftmaxLinear(SoftmaxLinearPolicy),
    Tabular(TabularPolicy),
}

impl Policy for PolicyImpl {
    fn n_params(&self) -> usize {
        match self {
            PolicyImpl::SoftmaxLinear(p) => p.n_params(),
            PolicyImpl::Tabular(p) => p.n_params(),
        }
    }

    fn n_controls(&self) -> usize {
        match self {
            PolicyImpl::SoftmaxLinear(p) => p.n_controls(),
            PolicyImpl::Tabular(p) => p.n_controls(),
        }
    }

    fn n_observations(&self) -> usize {
        match self {
            PolicyImpl::SoftmaxLinear(p) => p.n_observations(),
            PolicyImpl::Tabular(p) => p.n_observations(),
        }
    }

    fn probs_into(&self, theta: &[f64], y: usize, out: &mut [f64]) -> gpomdp_core::Result<()> {
        match self {
            PolicyImpl::SoftmaxLinear(p) => p.probs_into(theta, y, out),
            PolicyImpl::Tabular(p) => p.probs_into(theta, y, out),
        }
    }

    fn score_into(
        &self,
        theta: &[f64],
        y: usize,
        u: usize,
        out: &mut [f64],
    ) -> gpomdp_core::Result<()> {
        match self {
            PolicyImpl::SoftmaxLinear(p) => p.score_into(theta, y, u, out),
            PolicyImpl::Tabular(p) => p.score_into(theta, y, u, out),
        }
    }
}

impl PolicySpec {
    pub fn build(&self, model: &PomdpModel) -> Result<PolicyImpl> {
        let policy = match self {
            PolicySpec::SoftmaxLinear {
                features,
                feature_scale,
            } => {
                if !(*feature_scale != 0.0 && feature_scale.is_finite()) {
                    return Err(CliError::Config(
                        "feature_scale must be finite and non-zero".into(),
                    ));
                }
                let rows = features
                    .iter()
                    .map(|r| r.iter().map(|v| v / feature_scale).collect())
                    .collect();
                let table = FeatureTable::new(rows).map_err(|e| CliError::Config(e.to_string()))?;
                PolicyImpl::SoftmaxLinear(
                    SoftmaxLinearPolicy::new(table, model.n_controls())
                        .map_err(|e| CliError::Config(e.to_string()))?,
                )
            }
            PolicySpec::Tabular => PolicyImpl::Tabular(
                TabularPolicy::new(model.n_observations(), model.n_controls())
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ),
        };
        if policy.n_observations() != model.n_observations() {
            return Err(CliError::Config(format!(
                "policy covers {} observations, model has {}",
                policy.n_observations(),
                model.n_observations()
            )));
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThetaRule {
    Fixed {
        values: Vec<f64>,
    },
    /// Each component uniform on `[-half_width, half_width]`.
    Uniform {
        half_width: f64,
    },
}

impl ThetaRule {
    pub fn draw<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        match self {
            ThetaRule::Fixed { values } => values.clone(),
            ThetaRule::Uniform { half_width } => (0..k)
                .map(|_| rng.random_range(-*half_width..=*half_width))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub betas: Vec<f64>,
    /// Sample-path lengths at which estimates are recorded, increasing.
    pub horizons: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Gpomdp,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub oracle: OracleKind,
    #[serde(default)]
    pub beta: f64,
    pub steps_per_call: u64,
    pub s0: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub line_search_epsilon: Option<f64>,
    #[serde(default = "default_bracket_steps")]
    pub max_bracket_steps: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "yes")]
    pub check_ascent: bool,
    /// The learning curve is sampled on `curve_points` evenly spaced step
    /// counts from 0 to `curve_max_steps`.
    pub curve_max_steps: u64,
    pub curve_points: usize,
}

fn default_bracket_steps() -> usize {
    60
}

fn default_iterations() -> usize {
    200
}

fn yes() -> bool {
    true
}

impl OptimizerSection {
    pub fn settings(&self) -> ConjSettings {
        ConjSettings {
            s0: self.s0,
            epsilon: self.epsilon,
            line_search_epsilon: self.line_search_epsilon,
            max_bracket_steps: self.max_bracket_steps,
            max_iterations: self.max_iterations,
            check_ascent: self.check_ascent,
        }
    }

    pub fn curve_grid(&self) -> Vec<u64> {
        if self.curve_points < 2 {
            return vec![self.curve_max_steps];
        }
        let last = (self.curve_points - 1) as u64;
        (0..=last)
            .map(|k| self.curve_max_steps * k / last)
            .collect()
    }
}

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub model: PathBuf,
    pub master_seed: u64,
    pub seeds: u64,
    #[serde(default)]
    pub start_state: usize,
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    pub policy: PolicySpec,
    pub theta: ThetaRule,
    #[serde(default)]
    pub estimator: Option<EstimatorSection>,
    #[serde(default)]
    pub optimizer: Option<OptimizerSection>,
}

fn default_failure_fraction() -> f64 {
    0.1
}

/// A loaded, checked experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub model_source: ModelSource,
    pub model: PomdpModel,
    pub policy: PolicyImpl,
}

const BUILTIN_MODEL: &str = include_str!("../../../models/three_state.toml");
const BUILTIN_GRAD_ERROR: &str = include_str!("../../../configs/grad_error.toml");
const BUILTIN_BIAS_SWEEP: &str = include_str!("../../../configs/bias_sweep.toml");
const BUILTIN_TRAIN: &str = include_str!("../../../configs/train.toml");

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let file: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let model_path = base.join(&file.model);
        if !model_path.is_file() {
            return Err(CliError::Config(format!(
                "model file {} does not exist",
                model_path.display()
            )));
        }
        let model =
            PomdpModel::from_path(&model_path).map_err(|e| CliError::Config(e.to_string()))?;
        Self::assemble(file, ModelSource::Path(model_path), model)
    }

    /// The shipped default config for `kind`, with the benchmark model embedded.
    pub fn builtin(kind: ExperimentKind) -> Self {
        let text = match kind {
            ExperimentKind::GradError => BUILTIN_GRAD_ERROR,
            ExperimentKind::BiasSweep => BUILTIN_BIAS_SWEEP,
            ExperimentKind::Train => BUILTIN_TRAIN,
        };
        Self::from_str_with_model(text, BUILTIN_MODEL).expect("built-in config is valid")
    }

    /// Parses a config whose model is given inline rather than by path.
    pub fn from_str_with_model(config: &str, model: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(config).map_err(|e| CliError::Config(e.to_string()))?;
        let parsed =
            PomdpModel::from_toml_str(model).map_err(|e| CliError::Config(e.to_string()))?;
        Self::assemble(file, ModelSource::Inline(model.to_string()), parsed)
    }

    fn assemble(file: ConfigFile, model_source: ModelSource, model: PomdpModel) -> Result<Self> {
        let report = model.validate();
        if !report.is_valid() {
            return Err(CliError::Config(format!("invalid model: {report}")));
        }
        let policy = file.policy.build(&model)?;
        let config = Self {
            file,
            model_source,
            model,
            policy,
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        let f = &self.file;
        let bad = |m: String| Err(CliError::Config(m));
        if f.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                f.schema_version
            ));
        }
        if f.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if f.start_state >= self.model.n_states() {
            return bad(format!("start_state {} out of range", f.start_state));
        }
        if !(0.0..=1.0).contains(&f.max_failure_fraction) {
            return bad("max_failure_fraction must lie in [0, 1]".into());
        }
        let k = self.policy.n_params();
        match &f.theta {
            ThetaRule::Fixed { values } => {
                if values.len() != k || values.iter().any(|v| !v.is_finite()) {
                    return bad(format!("theta.values must hold {k} finite numbers"));
                }
            }
            ThetaRule::Uniform { half_width } => {
                if !(*half_width >= 0.0 && half_width.is_finite()) {
                    return bad("theta.half_width must be finite and non-negative".into());
                }
            }
        }
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        match f.experiment {
            ExperimentKind::GradError | ExperimentKind::BiasSweep => {
                let Some(est) = &f.estimator else {
                    return bad(format!("{} needs an [estimator] section", f.experiment));
                };
                if est.betas.is_empty() || est.horizons.is_empty() {
                    return bad("estimator.betas and estimator.horizons must be non-empty".into());
                }
                if let Some(b) = est.betas.iter().find(|b| !beta_ok(**b)) {
                    return bad(format!("beta {b} is outside [0, 1)"));
                }
                if est.horizons[0] == 0 || est.horizons.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("estimator.horizons must be positive and increasing".into());
                }
            }
            ExperimentKind::Train => {
                let Some(opt) = &f.optimizer else {
                    return bad("train needs an [optimizer] section".into());
                };
                if !beta_ok(opt.beta) {
                    return bad(format!("optimizer.beta {} is outside [0, 1)", opt.beta));
                }
                if opt.steps_per_call == 0 {
                    return bad("optimizer.steps_per_call must be positive".into());
                }
                if !(opt.s0 > 0.0) || !(opt.epsilon > 0.0) {
                    return bad("optimizer.s0 and optimizer.epsilon must be positive".into());
                }
                if opt.curve_points == 0 {
                    return bad("optimizer.curve_points must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ExperimentKind {
        self.file.experiment
    }

    pub fn estimator(&self) -> &EstimatorSection {
        self.file
            .estimator
            .as_ref()
            .expect("checked: estimator section present")
    }

    pub fn optimizer(&self) -> &OptimizerSection {
        self.file
            .optimizer
            .as_ref()
            .expect("checked: optimizer section present")
    }

    /// Applies command-line overrides and rechecks.
    pub fn with_overrides(mut self, seed: Option<u64>, runs: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.file.master_seed = s;
        }
        if let Some(r) = runs {
            self.file.seeds = r;
        }
        self.check()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for kind in [
            ExperimentKind::GradError,
            ExperimentKind::BiasSweep,
            ExperimentKind::Train,
        ] {
            let c = ExperimentConfig::builtin(kind);
            assert_eq!(c.kind(), kind);
            assert_eq!(c.policy.n_params(), 4);
        }
    }

    #[test]
    fn train_curve_grid() {
        let c = ExperimentConfig::builtin(ExperimentKind::Train);
        let g = c.optimizer().curve_grid();
        assert_eq!(g.len(), 21);
        assert_eq!((g[0], g[1], g[20]), (0, 10_000, 200_000));
    }

    #[test]
    fn rejects_bad_values() {
        let base = BUILTIN_GRAD_ERROR;
        let cases = [
            base.replace("seeds = 100", "seeds = 0"),
            base.replace("betas = [0.4, 0.95]", "betas = [0.4, 1.0]"),
            base.replace("betas = [0.4, 0.95]", "betas = []"),
            base.replace("horizons = [100, 316,", "horizons = [316, 100,"),
            base.replace("values = [1.0, 1.0, -1.0, -1.0]", "values = [1.0, 1.0]"),
            base.replace("start_state = 0", "start_state = 3"),
            base.replace("schema_version = 1", "schema_version = 2"),
            base.replace("[estimator]", "[estimators]"),
            base.replace("experiment = \"grad-error\"", "experiment = \"train\""),
        ];
        for case in cases {
            let err = ExperimentConfig::from_str_with_model(&case, BUILTIN_MODEL).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{err}");
        }
    }

    #[test]
    fn missing_model_file_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, BUILTIN_TRAIN).unwrap();
        let err = ExperimentConfig::from_path(&path).unwrap_err();
        assert!(matches!(err, CliError::Config(m) if m.contains("does not exist")));
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::builtin(ExperimentKind::Train)
            .with_overrides(Some(5), Some(3))
            .unwrap();
        assert_eq!((c.file.master_seed, c.file.seeds), (5, 3));
        assert!(
            ExperimentConfig::builtin(ExperimentKind::Train)
                .with_overrides(None, Some(0))
                .is_err()
        );
    }
}
