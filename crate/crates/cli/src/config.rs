//! Experiment configuration files (TOML, or JSON with the same schema).

use std::path::{Path, PathBuf};

use gimcmc::poisson_cv::{BetaMode, DEFAULT_TRUNCATION};
use gimcmc::samplers::ProposalKind;
use gimcmc::scaling::{Kappa, Polynomial, DEFAULT_DIMS, DEFAULT_EPSILONS};
use gimcmc::targets::BUNDLED_DATASETS;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samplers: Vec<SamplerConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingConfig>,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    /// `𝒩(mean, diag(variances))`, or a random well-conditioned Gaussian when `random_seed` is set.
    Gaussian {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variances: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random_seed: Option<u64>,
    },
    StudentT {
        nu: f64,
    },
    /// Two correlated bivariate Gaussians at `±offset`.
    Mixture {
        offset: f64,
    },
    Logistic {
        dataset: DatasetRef,
    },
    GpClassification {
        dataset: DatasetRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lengthscale: Option<f64>,
    },
    /// Log-Gaussian Cox process; simulated from `data_seed` unless `data` names a file written
    /// by `simulate-cox`.
    Cox {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_size: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
    },
}

/// A bundled dataset name or a CSV path (covariates then label, with a header row by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Name(String),
    File {
        path: PathBuf,
        #[serde(default = "yes")]
        header: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerChoice {
    /// Target covariance for Gaussians, inverse Fisher information for Student-t, MLE
    /// covariance for logistic regression, prior covariance for latent Gaussian models.
    #[default]
    Auto,
    Identity,
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: ProposalKind,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "yes")]
    pub adapt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
    #[serde(default)]
    pub preconditioner: PreconditionerChoice,
    /// Multiplies the constant preconditioner.
    #[serde(default = "one")]
    pub scale: f64,
}

fn default_step() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_burnin")]
    pub n_burnin: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Explicit chain seeds; one per repeat for variance reduction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Initial state; a target-specific default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

fn default_burnin() -> usize {
    1000
}

fn default_samples() -> usize {
    5000
}

fn one_u64() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_burnin: default_burnin(),
            n_samples: default_samples(),
            seed: 1,
            seeds: None,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionConfig {
    Identity,
    /// `xxᵀ` entries in row-major order.
    Quadratic,
    Indicator {
        a: Vec<f64>,
        b: f64,
    },
    Exp {
        a: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub function: FunctionConfig,
    /// Series terms `N` of truncated solutions.
    #[serde(default = "default_terms")]
    pub terms: usize,
    /// Independent repeats `T`.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Coefficient mode; exact `(1, −1)` when `G` solves the Poisson equation of the chain
    /// exactly (Gaussian target, moment-matched sampler, exact solution), plug-in otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaMode>,
    /// Gaussian mean inside `G`; the target's Gaussian approximation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Gaussian covariance inside `G`, as rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
}

fn default_terms() -> usize {
    DEFAULT_TRUNCATION
}

fn default_repeats() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub kappa: Kappa,
    /// Perturbation `h` as ascending coefficients.
    #[serde(default = "default_h")]
    pub h: Polynomial,
    /// Roughness constant; computed from `h` under the standard normal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default = "default_slack")]
    pub m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalConfig {
    pub epsilon: f64,
    pub d: usize,
    pub gammas: Vec<f64>,
    #[serde(default = "default_samples")]
    pub n_steps: usize,
}

fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}

fn default_dims() -> Vec<usize> {
    DEFAULT_DIMS.to_vec()
}

fn default_h() -> Polynomial {
    Polynomial::monomial(-1.0, 4)
}

fn default_slack() -> f64 {
    0.001
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            dims: default_dims(),
            kappa: Kappa::default(),
            h: default_h(),
            k: None,
            m: default_slack(),
            empirical: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl ExperimentConfig {
    pub fn parse(text: &str, format: Format) -> Result<Self, CliError> {
        match format {
            Format::Toml => toml::from_str(text).map_err(|e| CliError::Config(e.to_string())),
            Format::Json => serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn to_text(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Toml => toml::to_string(self).map_err(|e| CliError::Config(e.to_string())),
            Format::Json => {
                serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    /// Reads a config, choosing JSON for `.json` files and TOML otherwise. Relative dataset
    /// paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let format = if path.extension().is_some_and(|e| e == "json") {
            Format::Json
        } else {
            Format::Toml
        };
        let mut cfg = Self::parse(&text, format)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.target {
            Some(TargetConfig::Logistic {
                dataset: DatasetRef::File { path, .. },
            })
            | Some(TargetConfig::GpClassification {
                dataset: DatasetRef::File { path, .. },
                ..
            }) => fix(path),
            Some(TargetConfig::Cox {
                data: Some(path), ..
            }) => fix(path),
            _ => {}
        }
    }

    pub fn target(&self) -> Result<&TargetConfig, CliError> {
        self.target
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [target] section".into()))
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if let Some(t) = &self.target {
            t.validate()?;
        }
        for (i, s) in self.samplers.iter().enumerate() {
            if !(s.step_size > 0.0) {
                return bad(format!("samplers[{i}].step_size must be positive"));
            }
            if s.kind.is_gaussian_invariant() && s.step_size >= 2.0 {
                return bad(format!(
                    "samplers[{i}].step_size must be below 2 for {}",
                    s.kind
                ));
            }
            if let Some(r) = s.target_rate {
                if !(r > 0.0 && r < 1.0) {
                    return bad(format!("samplers[{i}].target_rate must lie in (0, 1)"));
                }
            }
            if !(s.scale > 0.0) {
                return bad(format!("samplers[{i}].scale must be positive"));
            }
        }
        if self.run.n_samples == 0 {
            return bad("run.n_samples must be at least 1".into());
        }
        if self.run.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return bad("run.seeds must not be empty".into());
        }
        if let Some(e) = &self.estimator {
            if e.terms == 0 {
                return bad("estimator.terms must be at least 1".into());
            }
            if e.repeats < 2 {
                return bad("estimator.repeats must be at least 2".into());
            }
            if let Some(seeds) = &self.run.seeds {
                if seeds.len() < e.repeats {
                    return bad(format!(
                        "run.seeds has {} entries but estimator.repeats is {}",
                        seeds.len(),
                        e.repeats
                    ));
                }
            }
            if e.mu.is_some() != e.sigma.is_some() {
                return bad("estimator.mu and estimator.sigma must be given together".into());
            }
        }
        if let Some(s) = &self.scaling {
            if s.epsilons.is_empty() || s.dims.is_empty() {
                return bad("scaling.epsilons and scaling.dims must not be empty".into());
            }
            if let Some(e) = &s.empirical {
                if e.gammas.is_empty() {
                    return bad("scaling.empirical.gammas must not be empty".into());
                }
            }
        }
        Ok(())
    }
}

impl TargetConfig {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        match self {
            Self::Gaussian {
                dim,
                mean,
                variances,
                ..
            } => {
                if *dim == 0 {
                    return bad("target.dim must be at least 1".into());
                }
                if mean.as_ref().is_some_and(|m| m.len() != *dim) {
                    return bad(format!("target.mean must have {dim} entries"));
                }
                if let Some(v) = variances {
                    if v.len() != *dim || v.iter().any(|x| !(*x > 0.0)) {
                        return bad(format!("target.variances must have {dim} positive entries"));
                    }
                }
            }
            Self::StudentT { nu } if !(*nu > 0.0) => {
                return bad("target.nu must be positive".into())
            }
            Self::Logistic { dataset } | Self::GpClassification { dataset, .. } => {
                dataset.validate()?
            }
            Self::Cox {
                grid_size, data, ..
            } => {
                if let Some(g) = grid_size {
                    if !(8..=64).contains(g) {
                        return bad(format!("target.grid_size {g} must lie in 8..=64"));
                    }
                }
                if let Some(p) = data {
                    if !p.exists() {
                        return bad(format!("target.data: file {} does not exist", p.display()));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl DatasetRef {
    fn validate(&self) -> Result<(), CliError> {
        match self {
            Self::Name(n) if BUNDLED_DATASETS.contains(&n.as_str()) => Ok(()),
            Self::Name(n) => {
                if Path::new(n).exists() {
                    Ok(())
                } else {
                    Err(CliError::Config(format!(
                        "target.dataset '{n}' is neither a bundled dataset ({}) nor an existing file",
                        BUNDLED_DATASETS.join(", ")
                    )))
                }
            }
            Self::File { path, .. } if path.exists() => Ok(()),
            Self::File { path, .. } => Err(CliError::Config(format!(
                "target.dataset.path: file {} does not exist",
                path.display()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[target]
kind = "student-t"
nu = 5.0

[[samplers]]
kind = "gi-mala-const"
step_size = 0.5
adapt = false

[run]
n_burnin = 1000
n_samples = 10000
seed = 7

[estimator]
function = { kind = "indicator", a = [1.0], b = 0.0 }
terms = 2
repeats = 100
"#;

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = ExperimentConfig::parse(EXAMPLE, Format::Toml).unwrap();
        cfg.validate().unwrap();
        for f in [Format::Toml, Format::Json] {
            let text = cfg.to_text(f).unwrap();
            assert_eq!(ExperimentConfig::parse(&text, f).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_sampler_kind_names_the_field() {
        let text = EXAMPLE.replace("gi-mala-const", "hmc");
        let err = ExperimentConfig::parse(&text, Format::Toml)
            .unwrap_err()
            .to_string();
        assert!(err.contains("kind") && err.contains("hmc"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EXAMPLE.replace("seed = 7", "sede = 7");
        assert!(ExperimentConfig::parse(&text, Format::Toml)
            .unwrap_err()
            .to_string()
            .contains("sede"));
    }

    #[test]
    fn too_few_seeds_for_repeats() {
        let text = EXAMPLE.replace("seed = 7", "seeds = [1, 2, 3]");
        let cfg = ExperimentConfig::parse(&text, Format::Toml).unwrap();
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("run.seeds"));
    }

    #[test]
    fn missing_dataset_file_is_a_config_error() {
        let cfg = ExperimentConfig::parse(
            "[target]\nkind = \"logistic\"\ndataset = { path = \"/no/such/file.csv\" }\n",
            Format::Toml,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
