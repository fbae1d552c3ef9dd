//! Reproducible experiment protocols shared by the benchmark harness and the test suite.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{variance_ratio, EssReport, VarianceRatioReport};
use crate::error::Result;
use crate::latent_gaussian::{
    simulate_cox, CoxConfig, CoxDataset, LgmDenseView, LgmKernel, LgmKind, PriorEigen,
};
use crate::linalg::{random_spd, Preconditioner};
use crate::poisson_cv::{
    cv_estimator, solution_exp, solution_indicator, solution_linear, solution_quadratic,
    zero_variance_estimator_gaussian, BetaMode, FixedMoments, PoissonSolution,
};
use crate::rng::{chain_rng, standard_normal_vector};
use crate::samplers::{
    gi_scale, run_chain, run_kernel, ChainTrace, GenericKernel, MhKernel, ProposalKind,
    ProposalSpec, RunOptions,
};
use crate::targets::{
    bundled_dataset, make_latent_gaussian_target, make_logistic_regression_target,
    squared_exponential_kernel, student_t_preconditioner, Dataset, GaussianTarget,
    LatentGaussianTarget, LikelihoodTerm, LogisticRegressionTarget, NewtonFit, StudentTTarget,
};

/// A random `𝒩(μ, Σ)` with standard normal `μ` and a well-conditioned random SPD `Σ`.
pub fn random_gaussian_target(d: usize, seed: u64) -> Result<GaussianTarget> {
    let mut rng = chain_rng(seed);
    let mean = standard_normal_vector(d, &mut rng);
    GaussianTarget::new(mean, random_spd(d, &mut rng))
}

/// The three Gaussian-invariant proposals tuned to `target`'s own moments.
pub fn gaussian_invariant_specs(target: &GaussianTarget, gamma: f64) -> [ProposalSpec; 3] {
    [
        ProposalSpec::gi_rwm(target.mean().clone(), target.covariance().clone(), gamma),
        ProposalSpec::gi_mala_const(target.covariance().clone(), gamma),
        ProposalSpec::gi_mala_precond(gamma),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceResult {
    pub kind: ProposalKind,
    pub gamma: f64,
    pub acceptance_rate: f64,
    pub min_alpha: f64,
    /// Largest `|μ̂_n − μ|` of the zero-variance estimator over the checked prefixes.
    pub zero_variance_error: f64,
}

/// Runs each Gaussian-invariant proposal on a random Gaussian and records acceptance and the
/// zero-variance estimator on prefixes of every length `10^k` as well as the full trace.
pub fn gaussian_invariance(
    d: usize,
    n_steps: usize,
    gamma: f64,
    seed: u64,
) -> Result<Vec<InvarianceResult>> {
    let target = random_gaussian_target(d, seed)?;
    let x0 = standard_normal_vector(d, &mut chain_rng(seed ^ 0x5eed)) * 3.0;
    let mut out = Vec::new();
    for (i, spec) in gaussian_invariant_specs(&target, gamma)
        .into_iter()
        .enumerate()
    {
        let trace = run_chain(
            &spec,
            &target,
            x0.clone(),
            &RunOptions::fixed(0, n_steps),
            seed.wrapping_add(i as u64),
        )?;
        let min_alpha = trace
            .records
            .iter()
            .map(|r| r.alpha)
            .fold(f64::INFINITY, f64::min);
        let mut prefixes: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 10))
            .take_while(|n| *n < n_steps)
            .collect();
        prefixes.extend([2, 3, n_steps]);
        let mut zv = 0.0f64;
        for n in prefixes {
            let mut prefix = trace.clone();
            prefix.records.truncate(n);
            let est = zero_variance_estimator_gaussian(&prefix, &target)?;
            zv = zv.max((est - target.mean()).amax());
        }
        out.push(InvarianceResult {
            kind: spec.kind,
            gamma,
            acceptance_rate: trace.acceptance_rate(),
            min_alpha,
            zero_variance_error: zv,
        });
    }
    Ok(out)
}

/// Largest `|PG − G + F − π(F)|` over random points for the exact solutions on random Gaussians.
pub fn poisson_identity_residual(
    dims: &[usize],
    gammas: &[f64],
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = chain_rng(seed);
    let mut worst = 0.0f64;
    for &d in dims {
        let target = random_gaussian_target(d, seed.wrapping_add(d as u64))?;
        let sigma = target.covariance().matrix();
        for &gamma in gammas {
            let sols = [
                solution_linear(gamma)?,
                solution_quadratic(gamma, target.mean().clone(), true)?,
                solution_quadratic(gamma, target.mean().clone(), false)?,
            ];
            let pi: Vec<DVector<f64>> = sols
                .iter()
                .map(|s| s.stationary_expectation(&target))
                .collect::<Result<_>>()?;
            let c = sigma * gi_scale(gamma);
            for _ in 0..n_points {
                let x = standard_normal_vector(d, &mut rng) * 2.0 + target.mean();
                let m = &x * (1.0 - gamma) + target.mean() * gamma;
                for (s, p) in sols.iter().zip(&pi) {
                    let r = s.proposal_expectation(&m, &c)? - s.evaluate(&x)?
                        + s.target_function(&x)?
                        - p;
                    worst = worst.max(r.amax());
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayRatio {
    pub exp: bool,
    pub gamma: f64,
    /// `Δ_{N+1} / Δ_N`.
    pub n: usize,
    pub ratio: f64,
    pub beta: f64,
}

/// Successive truncation-residual ratios on `𝒩(0, 1)` for `F = exp(x/2)` at `x = 1.5` and
/// `F = I(x > 0)` at `x = 1`.
pub fn truncation_decay(
    gamma: f64,
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<DecayRatio>> {
    let mu = DVector::zeros(1);
    let sigma = DMatrix::identity(1, 1);
    let make = |n: usize, exp: bool| -> Result<PoissonSolution> {
        if exp {
            solution_exp(gamma, &mu, &sigma, DVector::from_element(1, 0.5), n)
        } else {
            solution_indicator(gamma, &mu, &sigma, DVector::from_element(1, 1.0), 0.0, n)
        }
    };
    let mut out = Vec::new();
    for (exp, x) in [(true, 1.5), (false, 1.0)] {
        let x = DVector::from_element(1, x);
        for n in n_range.clone() {
            let r0 = make(n, exp)?.truncation_residual(&x)?;
            let r1 = make(n + 1, exp)?.truncation_residual(&x)?;
            out.push(DecayRatio {
                exp,
                gamma,
                n,
                ratio: r1 / r0,
                beta: (1.0 - gamma).abs(),
            });
        }
    }
    Ok(out)
}

/// A random binary-logistic latent Gaussian model.
pub fn random_logistic_lgm(d: usize, seed: u64) -> Result<(LatentGaussianTarget, PriorEigen)> {
    let mut rng = chain_rng(seed);
    let prior = random_spd(d, &mut rng) * 2.0;
    let labels = DVector::from_fn(d, |_, _| rng.gen_bool(0.5) as u8 as f64);
    let target = make_latent_gaussian_target(prior, LikelihoodTerm::BinaryLogistic { labels })?;
    let eigen = PriorEigen::new(target.prior_covariance())?;
    Ok((target, eigen))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FastPathCheck {
    pub d: usize,
    pub kind: String,
    pub steps: usize,
    pub max_alpha_diff: f64,
    pub max_state_diff: f64,
    pub accept_mismatches: usize,
    pub acceptance_rate: f64,
}

/// Drives the O(d²) kernel and the dense reference with identical noise.
pub fn fast_path_equivalence(
    d: usize,
    kind: LgmKind,
    gamma: f64,
    steps: usize,
    seed: u64,
) -> Result<FastPathCheck> {
    let (target, eigen) = random_logistic_lgm(d, seed)?;
    let view = LgmDenseView {
        target: &target,
        eigen: &eigen,
    };
    let spec = match kind {
        LgmKind::GiMala => ProposalSpec::gi_mala_precond(gamma),
        LgmKind::Mala => ProposalSpec::mala_precond(gamma),
    };
    let x0 = DVector::zeros(d);
    let mut fast = LgmKernel::new(&target, &eigen, kind, gamma, x0.clone())?;
    let mut dense = GenericKernel::new(spec, &view, x0)?;
    let mut rng = chain_rng(seed.wrapping_add(1));
    let mut check = FastPathCheck {
        d,
        kind: fast.label(),
        steps,
        max_alpha_diff: 0.0,
        max_state_diff: 0.0,
        accept_mismatches: 0,
        acceptance_rate: 0.0,
    };
    let mut accepted = 0;
    for _ in 0..steps {
        let eps = standard_normal_vector(d, &mut rng);
        let u: f64 = rng.gen();
        let a = fast.step_with_noise(&eps, u)?;
        let b = dense.step_with_noise(&eps, u)?;
        check.max_alpha_diff = check.max_alpha_diff.max((a.alpha - b.alpha).abs());
        check.accept_mismatches += (a.accepted != b.accepted) as usize;
        accepted += a.accepted as usize;
        check.max_state_diff = check
            .max_state_diff
            .max((fast.current() - dense.current()).amax());
    }
    check.acceptance_rate = accepted as f64 / steps as f64;
    Ok(check)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostPoint {
    pub d: usize,
    pub seconds_per_iteration: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Time per fast-path iteration on Gaussian-process priors over random 2-d inputs. Setup
/// (kernel and eigendecomposition) is excluded; each size reports the best of `repeats` timed blocks.
pub fn fast_path_cost(
    dims: &[usize],
    iterations: usize,
    repeats: usize,
    seed: u64,
) -> Result<(Vec<CostPoint>, f64)> {
    let mut points = Vec::new();
    for &d in dims {
        let mut rng = chain_rng(seed.wrapping_add(d as u64));
        let inputs: Vec<DVector<f64>> = (0..d)
            .map(|_| standard_normal_vector(2, &mut rng))
            .collect();
        let prior = squared_exponential_kernel(&inputs, 1.0, 1.0)?;
        let labels = DVector::from_fn(d, |_, _| rng.gen_bool(0.5) as u8 as f64);
        let target = make_latent_gaussian_target(prior, LikelihoodTerm::BinaryLogistic { labels })?;
        let eigen = PriorEigen::new(target.prior_covariance())?;
        let mut kernel = LgmKernel::new(&target, &eigen, LgmKind::GiMala, 0.3, DVector::zeros(d))?;
        let mut chain = chain_rng(seed);
        for _ in 0..iterations.min(20) {
            kernel.step(&mut chain)?;
        }
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            for _ in 0..iterations {
                kernel.step(&mut chain)?;
            }
            best = best.min(start.elapsed().as_secs_f64() / iterations as f64);
        }
        points.push(CostPoint {
            d,
            seconds_per_iteration: best,
        });
    }
    let slope = log_log_slope(
        &points
            .iter()
            .map(|p| (p.d as f64, p.seconds_per_iteration))
            .collect::<Vec<_>>(),
    );
    Ok((points, slope))
}

/// Bayesian logistic regression on a bundled dataset with its Newton MLE fit.
pub fn logistic_benchmark(name: &str) -> Result<(LogisticRegressionTarget, NewtonFit)> {
    let data = bundled_dataset(name)?;
    logistic_from_dataset(&data)
}

pub fn logistic_from_dataset(data: &Dataset) -> Result<(LogisticRegressionTarget, NewtonFit)> {
    let target = make_logistic_regression_target(data.standardized_design(), data.labels.clone())?;
    let fit = target.fit_mle(1e-10, 100)?;
    Ok((target, fit))
}

/// Adaptive GI-MALA and MALA with the MLE covariance as constant preconditioner, both started
/// at the MLE. Returns `(GI-MALA, MALA)` traces.
pub fn logistic_chains(
    target: &LogisticRegressionTarget,
    fit: &NewtonFit,
    opts: &RunOptions,
    seed: u64,
) -> Result<(ChainTrace, ChainTrace)> {
    let a = Preconditioner::from_matrix(fit.covariance.clone())?;
    let gi = run_chain(
        &ProposalSpec::gi_mala_const(a.clone(), 0.5),
        target,
        fit.theta.clone(),
        opts,
        seed,
    )?;
    let mala = run_chain(
        &ProposalSpec::mala_const(a, 0.5),
        target,
        fit.theta.clone(),
        opts,
        seed,
    )?;
    Ok((gi, mala))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EssComparison {
    pub seed: u64,
    pub reports: Vec<EssReport>,
}

impl EssComparison {
    pub fn get(&self, label: &str) -> Option<&EssReport> {
        self.reports.iter().find(|r| r.label == label)
    }
}

/// GI-MALA versus MALA ESS on a logistic regression target, one comparison per seed.
pub fn logistic_ess_comparison(
    target: &LogisticRegressionTarget,
    fit: &NewtonFit,
    opts: &RunOptions,
    seeds: &[u64],
) -> Result<Vec<EssComparison>> {
    seeds
        .iter()
        .map(|&seed| {
            let (gi, mala) = logistic_chains(target, fit, opts, seed)?;
            Ok(EssComparison {
                seed,
                reports: vec![EssReport::from_trace(&gi)?, EssReport::from_trace(&mala)?],
            })
        })
        .collect()
}

/// Plain versus control-variate estimates of the posterior mean under adaptive GI-MALA.
pub fn logistic_variance_ratio(
    target: &LogisticRegressionTarget,
    fit: &NewtonFit,
    opts: &RunOptions,
    repeats: usize,
    base_seed: u64,
) -> Result<VarianceRatioReport> {
    let a = Preconditioner::from_matrix(fit.covariance.clone())?;
    variance_ratio(repeats, base_seed, |seed| {
        let trace = run_chain(
            &ProposalSpec::gi_mala_const(a.clone(), 0.5),
            target,
            fit.theta.clone(),
            opts,
            seed,
        )?;
        cv_estimator(
            &trace,
            &solution_linear(trace.step_size)?,
            None,
            BetaMode::PlugIn,
        )
    })
}

/// Settings of the Student-t indicator experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentSetting {
    pub nu: f64,
    pub b: f64,
    pub terms: usize,
    pub gamma: f64,
}

/// Estimates `P(X > b)` under a Student-t with GI-MALA whose constant preconditioner is the
/// inverse Fisher information, using the truncated indicator solution for the matching Gaussian.
pub fn student_t_variance_ratio(
    setting: StudentSetting,
    opts: &RunOptions,
    repeats: usize,
    base_seed: u64,
) -> Result<VarianceRatioReport> {
    let target = StudentTTarget::new(setting.nu)?;
    let var = student_t_preconditioner(setting.nu);
    let a = Preconditioner::scaled_identity(1, var)?;
    let sigma = DMatrix::from_element(1, 1, var);
    let sol = solution_indicator(
        setting.gamma,
        &DVector::zeros(1),
        &sigma,
        DVector::from_element(1, 1.0),
        setting.b,
        setting.terms,
    )?;
    let spec = ProposalSpec::gi_mala_const(a, setting.gamma);
    let moments = FixedMoments(sigma * gi_scale(setting.gamma));
    variance_ratio(repeats, base_seed, |seed| {
        let trace = run_chain(&spec, &target, DVector::zeros(1), opts, seed)?;
        cv_estimator(&trace, &sol, Some(&moments), BetaMode::PlugIn)
    })
}

/// Default squared-exponential hyperparameters for GP classification: unit variance and
/// lengthscale `√p` over `p` standardised inputs.
pub fn gp_default_hyperparameters(n_inputs: usize) -> (f64, f64) {
    (1.0, (n_inputs as f64).sqrt())
}

/// GP classification with one latent value per observation.
pub fn gp_classification_target(
    data: &Dataset,
    variance: f64,
    lengthscale: f64,
) -> Result<(LatentGaussianTarget, PriorEigen)> {
    let prior = squared_exponential_kernel(&data.standardized_inputs(), variance, lengthscale)?;
    let target = make_latent_gaussian_target(
        prior,
        LikelihoodTerm::BinaryLogistic {
            labels: data.labels.clone(),
        },
    )?;
    let eigen = PriorEigen::new(target.prior_covariance())?;
    Ok((target, eigen))
}

/// GI-MALA (fast path), MALA (fast path) and pCN on a latent Gaussian model with adaptive
/// step sizes, all started at `x0`.
pub fn lgm_chains(
    target: &LatentGaussianTarget,
    eigen: &PriorEigen,
    x0: &DVector<f64>,
    opts: &RunOptions,
    seed: u64,
) -> Result<Vec<ChainTrace>> {
    let mut gi = LgmKernel::new(target, eigen, LgmKind::GiMala, 0.5, x0.clone())?;
    let mut mala = LgmKernel::new(target, eigen, LgmKind::Mala, 0.5, x0.clone())?;
    let pcn_spec = ProposalSpec::pcn(target.prior().clone(), 0.1);
    let mut pcn = GenericKernel::new(pcn_spec, target, x0.clone())?;
    Ok(vec![
        run_kernel(&mut gi, opts, seed)?,
        run_kernel(&mut mala, opts, seed)?,
        run_kernel(&mut pcn, opts, seed)?,
    ])
}

pub fn lgm_ess_comparison(
    target: &LatentGaussianTarget,
    eigen: &PriorEigen,
    x0: &DVector<f64>,
    opts: &RunOptions,
    seed: u64,
) -> Result<EssComparison> {
    let reports = lgm_chains(target, eigen, x0, opts, seed)?
        .iter()
        .map(EssReport::from_trace)
        .collect::<Result<_>>()?;
    Ok(EssComparison { seed, reports })
}

/// Posterior-mean variance reduction under the GI-MALA fast path.
pub fn lgm_variance_ratio(
    target: &LatentGaussianTarget,
    eigen: &PriorEigen,
    x0: &DVector<f64>,
    opts: &RunOptions,
    repeats: usize,
    base_seed: u64,
) -> Result<VarianceRatioReport> {
    variance_ratio(repeats, base_seed, |seed| {
        let mut k = LgmKernel::new(target, eigen, LgmKind::GiMala, 0.5, x0.clone())?;
        let trace = run_kernel(&mut k, opts, seed)?;
        cv_estimator(
            &trace,
            &solution_linear(trace.step_size)?,
            None,
            BetaMode::PlugIn,
        )
    })
}

/// Simulated log-Gaussian Cox data and the matching posterior.
pub fn cox_benchmark(
    config: CoxConfig,
    seed: u64,
) -> Result<(CoxDataset, LatentGaussianTarget, PriorEigen)> {
    let prior = config.prior()?;
    let eigen = PriorEigen::new(&prior)?;
    let data = simulate_cox(config, &eigen, seed)?;
    let target = make_latent_gaussian_target(prior, data.likelihood())?;
    Ok((data, target, eigen))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariance_protocol_small() {
        for r in gaussian_invariance(4, 200, 0.6, 1).unwrap() {
            assert_eq!(r.acceptance_rate, 1.0);
            assert!(r.min_alpha >= 1.0 - 1e-10);
            assert!(r.zero_variance_error < 1e-10);
        }
    }

    #[test]
    fn decay_protocol_matches_beta() {
        for r in truncation_decay(0.7, 3..=10).unwrap() {
            assert!((r.ratio - r.beta).abs() < 0.1 * r.beta);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|x| (*x, 3.0 * x * x))
            .collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_fast_path_run_agrees() {
        let c = fast_path_equivalence(8, LgmKind::GiMala, 0.7, 100, 3).unwrap();
        assert!(c.max_alpha_diff < 1e-8 && c.accept_mismatches == 0);
    }
}
