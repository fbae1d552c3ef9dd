//! Builds targets and samplers from a config.

use gimcmc::experiments::{
    gp_classification_target, gp_default_hyperparameters, logistic_from_dataset,
    random_gaussian_target,
};
use gimcmc::latent_gaussian::{
    simulate_cox, CoxConfig, CoxDataset, LgmDenseView, LgmKernel, LgmKind, PriorEigen,
};
use gimcmc::linalg::Preconditioner;
use gimcmc::poisson_cv::{
    solution_exp, solution_indicator, solution_linear, solution_quadratic, BetaMode,
    PoissonSolution, SpecMoments,
};
use gimcmc::samplers::{run_chain, run_kernel, ChainTrace, ProposalKind, ProposalSpec, RunOptions};
use gimcmc::targets::{
    bundled_dataset, load_csv, make_latent_gaussian_target, student_t_preconditioner, Dataset,
    GaussianMixtureTarget, GaussianTarget, LatentGaussianTarget, LogisticRegressionTarget,
    NewtonFit, StudentTTarget, TargetModel,
};
use nalgebra::{DMatrix, DVector};

use crate::config::{
    DatasetRef, EstimatorConfig, FunctionConfig, PreconditionerChoice, RunConfig, SamplerConfig,
    TargetConfig,
};
use crate::error::CliError;

pub enum Problem {
    Gaussian(GaussianTarget),
    StudentT(StudentTTarget),
    Mixture(GaussianMixtureTarget),
    Logistic {
        target: LogisticRegressionTarget,
        fit: NewtonFit,
    },
    Latent {
        target: LatentGaussianTarget,
        eigen: PriorEigen,
    },
}

pub fn load_dataset(r: &DatasetRef) -> Result<Dataset, CliError> {
    Ok(match r {
        DatasetRef::Name(n) if gimcmc::targets::BUNDLED_DATASETS.contains(&n.as_str()) => {
            bundled_dataset(n)?
        }
        DatasetRef::Name(n) => load_csv(n.as_ref(), true)?,
        DatasetRef::File { path, header } => load_csv(path, *header)?,
    })
}

/// The Cox settings for a target section; the lattice defaults to 16×16, or 64×64 when extended.
pub fn cox_config(
    grid_size: Option<usize>,
    variance: Option<f64>,
    beta: Option<f64>,
    extended: bool,
) -> CoxConfig {
    let mut c = CoxConfig::standard(grid_size.unwrap_or(if extended { 64 } else { 16 }));
    if let Some(v) = variance {
        c.variance = v;
    }
    if let Some(b) = beta {
        c.beta = b;
    }
    c
}

impl Problem {
    pub fn build(cfg: &TargetConfig, extended: bool, seed: u64) -> Result<Self, CliError> {
        Ok(match cfg {
            TargetConfig::Gaussian {
                dim,
                mean,
                variances,
                random_seed,
            } => match random_seed {
                Some(s) => Self::Gaussian(random_gaussian_target(*dim, *s)?),
                None => {
                    let mean = mean
                        .clone()
                        .map_or_else(|| DVector::zeros(*dim), DVector::from_vec);
                    let var = variances
                        .clone()
                        .map_or_else(|| DVector::from_element(*dim, 1.0), DVector::from_vec);
                    Self::Gaussian(GaussianTarget::new(mean, DMatrix::from_diagonal(&var))?)
                }
            },
            TargetConfig::StudentT { nu } => Self::StudentT(StudentTTarget::new(*nu)?),
            TargetConfig::Mixture { offset } => {
                Self::Mixture(GaussianMixtureTarget::correlated_pair(*offset))
            }
            TargetConfig::Logistic { dataset } => {
                let (target, fit) = logistic_from_dataset(&load_dataset(dataset)?)?;
                Self::Logistic { target, fit }
            }
            TargetConfig::GpClassification {
                dataset,
                variance,
                lengthscale,
            } => {
                let data = load_dataset(dataset)?;
                let (v0, l0) = gp_default_hyperparameters(data.n_covariates());
                let (target, eigen) = gp_classification_target(
                    &data,
                    variance.unwrap_or(v0),
                    lengthscale.unwrap_or(l0),
                )?;
                Self::Latent { target, eigen }
            }
            TargetConfig::Cox {
                grid_size,
                variance,
                beta,
                data,
                data_seed,
            } => {
                let config = cox_config(*grid_size, *variance, *beta, extended);
                let prior = config.prior()?;
                let eigen = PriorEigen::new(&prior)?;
                let data = match data {
                    Some(path) => CoxDataset::read_csv(path, config)?,
                    None => simulate_cox(config, &eigen, data_seed.unwrap_or(seed))?,
                };
                let target = make_latent_gaussian_target(prior, data.likelihood())?;
                Self::Latent { target, eigen }
            }
        })
    }

    pub fn model(&self) -> &dyn TargetModel {
        match self {
            Self::Gaussian(t) => t,
            Self::StudentT(t) => t,
            Self::Mixture(t) => t,
            Self::Logistic { target, .. } => target,
            Self::Latent { target, .. } => target,
        }
    }

    pub fn dim(&self) -> usize {
        self.model().dim()
    }

    /// Gaussian approximation `(μ, Σ)` used for GI-RWM, truncated solutions and `auto`
    /// preconditioners.
    pub fn gaussian_approximation(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        match self {
            Self::Gaussian(t) => Some((t.mean().clone(), t.covariance().matrix().clone())),
            Self::StudentT(t) => Some((
                DVector::zeros(1),
                DMatrix::from_element(1, 1, student_t_preconditioner(t.degrees_of_freedom())),
            )),
            Self::Logistic { fit, .. } => Some((fit.theta.clone(), fit.covariance.clone())),
            Self::Latent { target, .. } => Some((
                DVector::zeros(target.prior_covariance().nrows()),
                target.prior_covariance().clone(),
            )),
            Self::Mixture(_) => None,
        }
    }

    pub fn initial_state(&self, run: &RunConfig) -> Result<DVector<f64>, CliError> {
        if let Some(x) = &run.init {
            if x.len() != self.dim() {
                return Err(CliError::Config(format!(
                    "run.init has {} entries, target dimension is {}",
                    x.len(),
                    self.dim()
                )));
            }
            return Ok(DVector::from_vec(x.clone()));
        }
        Ok(match self {
            Self::Gaussian(t) => t.mean().clone(),
            Self::Logistic { fit, .. } => fit.theta.clone(),
            _ => DVector::zeros(self.dim()),
        })
    }

    fn constant_preconditioner(&self, s: &SamplerConfig) -> Result<Preconditioner, CliError> {
        let d = self.dim();
        let base = match (s.preconditioner, self) {
            (PreconditionerChoice::Identity, _) => DMatrix::identity(d, d),
            (PreconditionerChoice::Prior, Self::Latent { target, .. }) => {
                target.prior_covariance().clone()
            }
            (PreconditionerChoice::Prior, _) => {
                return Err(CliError::Config(
                    "preconditioner = \"prior\" needs a latent Gaussian target".into(),
                ))
            }
            (PreconditionerChoice::Auto, p) => p
                .gaussian_approximation()
                .map_or_else(|| DMatrix::identity(d, d), |(_, c)| c),
        };
        Ok(Preconditioner::from_matrix(base * s.scale)?)
    }

    pub fn proposal_spec(&self, s: &SamplerConfig) -> Result<ProposalSpec, CliError> {
        let gamma = s.step_size;
        Ok(match s.kind {
            ProposalKind::GiRwm => {
                let mean = self
                    .gaussian_approximation()
                    .map_or_else(|| DVector::zeros(self.dim()), |(m, _)| m);
                ProposalSpec::gi_rwm(mean, self.constant_preconditioner(s)?, gamma)
            }
            ProposalKind::GiMalaConst => {
                ProposalSpec::gi_mala_const(self.constant_preconditioner(s)?, gamma)
            }
            ProposalKind::GiMalaPrecond => ProposalSpec::gi_mala_precond(gamma),
            ProposalKind::Rwm => ProposalSpec::rwm(self.constant_preconditioner(s)?, gamma),
            ProposalKind::MalaConst => {
                ProposalSpec::mala_const(self.constant_preconditioner(s)?, gamma)
            }
            ProposalKind::MalaPrecond => ProposalSpec::mala_precond(gamma),
            ProposalKind::Pcn => {
                let prior = match (s.preconditioner, self) {
                    (PreconditionerChoice::Identity, _) => Preconditioner::identity(self.dim()),
                    (_, Self::Latent { target, .. }) => target.prior().clone(),
                    _ => {
                        return Err(CliError::Config(
                            "pcn needs a latent Gaussian target".into(),
                        ))
                    }
                };
                ProposalSpec::pcn(prior, gamma)
            }
        })
    }

    fn run_options(s: &SamplerConfig, run: &RunConfig) -> RunOptions {
        RunOptions {
            n_burnin: run.n_burnin,
            n_samples: run.n_samples,
            adapt: s.adapt,
            target_rate: s.target_rate,
        }
    }

    /// Runs one chain; position-dependent GI-MALA and MALA on latent Gaussian targets use the
    /// O(d²) kernel.
    pub fn run(
        &self,
        s: &SamplerConfig,
        run: &RunConfig,
        seed: u64,
    ) -> Result<ChainTrace, CliError> {
        let opts = Self::run_options(s, run);
        let x0 = self.initial_state(run)?;
        if let Self::Latent { target, eigen } = self {
            let fast = match s.kind {
                ProposalKind::GiMalaPrecond => Some(LgmKind::GiMala),
                ProposalKind::MalaPrecond => Some(LgmKind::Mala),
                _ => None,
            };
            if let Some(kind) = fast {
                let mut k = LgmKernel::new(target, eigen, kind, s.step_size, x0)?;
                return Ok(run_kernel(&mut k, &opts, seed)?);
            }
            let view = LgmDenseView { target, eigen };
            return Ok(run_chain(&self.proposal_spec(s)?, &view, x0, &opts, seed)?);
        }
        Ok(run_chain(
            &self.proposal_spec(s)?,
            self.model(),
            x0,
            &opts,
            seed,
        )?)
    }

    /// The Poisson solution for the configured function at the step size a trace ended with.
    pub fn solution(&self, e: &EstimatorConfig, gamma: f64) -> Result<PoissonSolution, CliError> {
        let approx = || -> Result<(DVector<f64>, DMatrix<f64>), CliError> {
            if let (Some(mu), Some(sigma)) = (&e.mu, &e.sigma) {
                let d = mu.len();
                if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
                    return Err(CliError::Config(format!("estimator.sigma must be {d}×{d}")));
                }
                return Ok((
                    DVector::from_vec(mu.clone()),
                    DMatrix::from_fn(d, d, |i, j| sigma[i][j]),
                ));
            }
            self.gaussian_approximation().ok_or_else(|| {
                CliError::Config(
                    "estimator.mu and estimator.sigma are required for this target".into(),
                )
            })
        };
        let check_dir = |a: &Vec<f64>| {
            if a.len() == self.dim() {
                Ok(DVector::from_vec(a.clone()))
            } else {
                Err(CliError::Config(format!(
                    "estimator.function.a must have {} entries",
                    self.dim()
                )))
            }
        };
        Ok(match &e.function {
            FunctionConfig::Identity => solution_linear(gamma)?,
            FunctionConfig::Quadratic => solution_quadratic(gamma, approx()?.0, true)?,
            FunctionConfig::Indicator { a, b } => {
                let (mu, sigma) = approx()?;
                solution_indicator(gamma, &mu, &sigma, check_dir(a)?, *b, e.terms)?
            }
            FunctionConfig::Exp { a } => {
                let (mu, sigma) = approx()?;
                solution_exp(gamma, &mu, &sigma, check_dir(a)?, e.terms)?
            }
        })
    }

    /// Control-variate estimate from one trace of sampler `s`.
    pub fn estimate(
        &self,
        s: &SamplerConfig,
        e: &EstimatorConfig,
        trace: &ChainTrace,
    ) -> Result<gimcmc::poisson_cv::EstimatorReport, CliError> {
        let sol = self.solution(e, trace.step_size)?;
        let matched = matches!(self, Self::Gaussian(_))
            && s.kind.is_gaussian_invariant()
            && s.preconditioner == PreconditionerChoice::Auto
            && s.scale == 1.0
            && sol.kind().is_exact();
        let mode = e.beta.unwrap_or(if matched {
            BetaMode::Exact
        } else {
            BetaMode::PlugIn
        });
        let spec = self.proposal_spec(s)?.with_step_size(trace.step_size);
        let est = if sol.needs_covariance() {
            match self {
                Self::Latent { target, eigen } => {
                    let view = LgmDenseView { target, eigen };
                    let m = SpecMoments {
                        spec: &spec,
                        target: &view,
                    };
                    gimcmc::poisson_cv::cv_estimator(trace, &sol, Some(&m), mode)?
                }
                _ => {
                    let m = SpecMoments {
                        spec: &spec,
                        target: self.model(),
                    };
                    gimcmc::poisson_cv::cv_estimator(trace, &sol, Some(&m), mode)?
                }
            }
        } else {
            gimcmc::poisson_cv::cv_estimator(trace, &sol, None, mode)?
        };
        Ok(est)
    }
}
