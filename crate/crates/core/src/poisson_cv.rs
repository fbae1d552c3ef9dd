//! Control variates built from solutions of the Poisson equation `PG − G = −F + π(F)`.
//!
//! For a Gaussian-invariant kernel on `𝒩(μ, Σ)` every move is accepted and the one-step
//! expectation `PG(x)` is the proposal expectation `E_q(·|x)[G]`, which has a closed form for
//! the functions below. On non-Gaussian targets the same `G` still yields two zero-mean
//! statistics per step, `H₁ = α(G(y) − G(x))` and `H₂ = G(y) − E_q[G]`, whose optimally weighted
//! sum is added to the ergodic average.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::{
    gi_scale, proposal_covariance, ChainTrace, ProposalKind, ProposalSpec, TransitionRecord,
};
use crate::special::{log_sum_exp, norm_cdf};
use crate::targets::{GaussianTarget, TargetModel};

/// Condition number above which `K_n` gets a ridge.
pub const CONDITION_LIMIT: f64 = 1e12;
const RIDGE: f64 = 1e-10;
/// Truncation used when none is configured.
pub const DEFAULT_TRUNCATION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionKind {
    Linear,
    QuadraticRaw,
    QuadraticCentered,
    ExpTruncated,
    IndicatorTruncated,
}

impl SolutionKind {
    pub fn is_exact(self) -> bool {
        matches!(
            self,
            Self::Linear | Self::QuadraticRaw | Self::QuadraticCentered
        )
    }
}

#[derive(Debug, Clone)]
enum Params {
    Linear,
    Quadratic {
        mu: DVector<f64>,
        raw: bool,
    },
    // Both truncated series depend on x only through aᵀx.
    Projected {
        a: DVector<f64>,
        b: f64,
        mu_a: f64,
        var_a: f64,
        terms: usize,
        exp: bool,
    },
}

/// A Poisson-equation solution `G` for the Gaussian-invariant kernel with step `γ`.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    gamma: f64,
    scale: f64,
    params: Params,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "step size {gamma} outside (0, 2)"
        )))
    }
}

/// `G(x) = x/γ`, solving the equation for `F(x) = x`.
pub fn solution_linear(gamma: f64) -> Result<PoissonSolution> {
    check_gamma(gamma)?;
    Ok(PoissonSolution {
        gamma,
        scale: 1.0,
        params: Params::Linear,
    })
}

/// Solutions for `F(x) = xxᵀ` (`raw`) or `F(x) = (x−μ)(x−μ)ᵀ`. Outputs are column-major `d²` vectors.
pub fn solution_quadratic(gamma: f64, mu: DVector<f64>, raw: bool) -> Result<PoissonSolution> {
    check_gamma(gamma)?;
    Ok(PoissonSolution {
        gamma,
        scale: 1.0,
        params: Params::Quadratic { mu, raw },
    })
}

fn projected_moments(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    a: &DVector<f64>,
) -> Result<(f64, f64)> {
    let d = a.len();
    if mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mu.len(),
        });
    }
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma.nrows(),
        });
    }
    Ok((a.dot(mu), (sigma * a).dot(a)))
}

/// Truncated solution for `F(x) = I(aᵀx > b)` with `N` series terms.
pub fn solution_indicator(
    gamma: f64,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    a: DVector<f64>,
    b: f64,
    terms: usize,
) -> Result<PoissonSolution> {
    check_gamma(gamma)?;
    if terms == 0 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 1".into(),
        ));
    }
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter(
            "indicator direction is zero".into(),
        ));
    }
    let (mu_a, var_a) = projected_moments(mu, sigma, &a)?;
    if !(var_a > 0.0) {
        return Err(Error::InvalidParameter("aᵀΣa must be positive".into()));
    }
    Ok(PoissonSolution {
        gamma,
        scale: 1.0,
        params: Params::Projected {
            a,
            b,
            mu_a,
            var_a,
            terms,
            exp: false,
        },
    })
}

/// Truncated solution for `F(x) = exp(aᵀx)` with `N` series terms.
pub fn solution_exp(
    gamma: f64,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    a: DVector<f64>,
    terms: usize,
) -> Result<PoissonSolution> {
    check_gamma(gamma)?;
    if terms == 0 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 1".into(),
        ));
    }
    let (mu_a, var_a) = projected_moments(mu, sigma, &a)?;
    Ok(PoissonSolution {
        gamma,
        scale: 1.0,
        params: Params::Projected {
            a,
            b: 0.0,
            mu_a,
            var_a,
            terms,
            exp: true,
        },
    })
}

/// `Φ(num / sd)`, degrading to a step when the spread vanishes.
fn phi_ratio(num: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        norm_cdf(num / sd)
    } else if num > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn outer_vec(u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    u * v.transpose()
}

fn flatten(m: DMatrix<f64>) -> DVector<f64> {
    let n = m.len();
    DVector::from_vec(
        m.reshape_generic(nalgebra::Dyn(n), nalgebra::Const::<1>)
            .data
            .into(),
    )
}

impl PoissonSolution {
    pub fn kind(&self) -> SolutionKind {
        match &self.params {
            Params::Linear => SolutionKind::Linear,
            Params::Quadratic { raw: true, .. } => SolutionKind::QuadraticRaw,
            Params::Quadratic { raw: false, .. } => SolutionKind::QuadraticCentered,
            Params::Projected { exp: true, .. } => SolutionKind::ExpTruncated,
            Params::Projected { exp: false, .. } => SolutionKind::IndicatorTruncated,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Multiplies `G` by `c`; control-variate estimates are unchanged by this.
    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    /// Series length for truncated kinds.
    pub fn truncation(&self) -> Option<usize> {
        match &self.params {
            Params::Projected { terms, .. } => Some(*terms),
            _ => None,
        }
    }

    /// Projection direction for truncated kinds.
    pub fn direction(&self) -> Option<&DVector<f64>> {
        match &self.params {
            Params::Projected { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Number of output components for a `d`-dimensional state.
    pub fn output_dim(&self, d: usize) -> usize {
        match &self.params {
            Params::Linear => d,
            Params::Quadratic { .. } => d * d,
            Params::Projected { .. } => 1,
        }
    }

    fn beta(&self) -> f64 {
        1.0 - self.gamma
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let expected = match &self.params {
            Params::Linear => return Ok(()),
            Params::Quadratic { mu, .. } => mu.len(),
            Params::Projected { a, .. } => a.len(),
        };
        if expected == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got: d })
        }
    }

    /// The function `F` this `G` solves for.
    pub fn target_function(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(match &self.params {
            Params::Linear => x.clone(),
            Params::Quadratic { raw: true, .. } => flatten(outer_vec(x, x)),
            Params::Quadratic { mu, raw: false } => {
                let c = x - mu;
                flatten(outer_vec(&c, &c))
            }
            Params::Projected { a, b, exp, .. } => {
                let t = a.dot(x);
                DVector::from_element(1, if *exp { t.exp() } else { (t > *b) as u8 as f64 })
            }
        })
    }

    /// Log of each series term of a truncated `G`, with the zeroth term first.
    fn exp_log_terms(&self, t: f64, var_t: f64) -> Vec<f64> {
        let Params::Projected {
            mu_a, var_a, terms, ..
        } = &self.params
        else {
            unreachable!()
        };
        let beta = self.beta();
        let mut out = Vec::with_capacity(terms + 1);
        out.push(t + 0.5 * var_t);
        for n in 1..=*terms as i32 {
            let bn = beta.powi(n);
            let b2n = beta.powi(2 * n);
            out.push(bn * t + 0.5 * b2n * var_t + (1.0 - bn) * mu_a + 0.5 * (1.0 - b2n) * var_a);
        }
        out
    }

    fn indicator_terms(&self, t: f64, var_t: f64) -> f64 {
        let Params::Projected {
            b,
            mu_a,
            var_a,
            terms,
            ..
        } = &self.params
        else {
            unreachable!()
        };
        let beta = self.beta();
        let mut sum = phi_ratio(t - b, var_t.sqrt());
        for n in 1..=*terms as i32 {
            let bn = beta.powi(n);
            let b2n = beta.powi(2 * n);
            let sd = ((1.0 - b2n) * var_a + b2n * var_t).sqrt();
            sum += phi_ratio(bn * t + (1.0 - bn) * mu_a - b, sd);
        }
        sum
    }

    /// Truncated kinds at projected mean `t` and projected variance `var_t`; `var_t = 0` gives `G`.
    fn projected_value(&self, t: f64, var_t: f64) -> Result<f64> {
        let Params::Projected { exp, .. } = &self.params else {
            unreachable!()
        };
        let v = if *exp {
            log_sum_exp(&self.exp_log_terms(t, var_t)).exp()
        } else {
            self.indicator_terms(t, var_t)
        };
        if v.is_finite() {
            Ok(self.scale * v)
        } else {
            Err(Error::Numerical(format!(
                "{:?} solution evaluated to {v}",
                self.kind()
            )))
        }
    }

    /// `G(x)`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        let s = gi_scale(self.gamma);
        Ok(match &self.params {
            Params::Linear => x * (self.scale / self.gamma),
            Params::Quadratic { mu, raw: true } => {
                let m = outer_vec(x, x) + (outer_vec(x, mu) + outer_vec(mu, x)) * self.beta();
                flatten(m * (self.scale / s))
            }
            Params::Quadratic { mu, raw: false } => {
                let c = x - mu;
                flatten(outer_vec(&c, &c) * (self.scale / s))
            }
            Params::Projected { a, .. } => {
                DVector::from_element(1, self.projected_value(a.dot(x), 0.0)?)
            }
        })
    }

    /// What `E_q[G]` needs beyond the proposal mean.
    pub fn needs_covariance(&self) -> bool {
        !matches!(self.params, Params::Linear)
    }

    /// `E_q[G]` for `q = 𝒩(m, C)`.
    pub fn proposal_expectation(&self, m: &DVector<f64>, c: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(m.len())?;
        if self.needs_covariance() && (c.nrows() != m.len() || c.ncols() != m.len()) {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                got: c.nrows(),
            });
        }
        match &self.params {
            Params::Projected { a, .. } => self.projected_expectation(m, (c * a).dot(a)),
            Params::Linear => Ok(m * (self.scale / self.gamma)),
            Params::Quadratic { mu, raw } => {
                let s = gi_scale(self.gamma);
                let second = c + outer_vec(m, m);
                let g = if *raw {
                    second + (outer_vec(m, mu) + outer_vec(mu, m)) * self.beta()
                } else {
                    let e = m - mu;
                    c + outer_vec(&e, &e)
                };
                Ok(flatten(g * (self.scale / s)))
            }
        }
    }

    /// `E_q[G]` for truncated kinds given only `aᵀCa`.
    pub fn projected_expectation(&self, m: &DVector<f64>, var_a: f64) -> Result<DVector<f64>> {
        match &self.params {
            Params::Projected { a, .. } => Ok(DVector::from_element(
                1,
                self.projected_value(a.dot(m), var_a.max(0.0))?,
            )),
            _ => Err(Error::InvalidParameter(
                "projected expectation needs a truncated solution".into(),
            )),
        }
    }

    /// `π(F)` under a Gaussian target.
    pub fn stationary_expectation(&self, target: &GaussianTarget) -> Result<DVector<f64>> {
        let mu = target.mean();
        self.check_dim(mu.len())?;
        let sigma = target.covariance().matrix();
        Ok(match &self.params {
            Params::Linear => mu.clone(),
            Params::Quadratic { raw: true, .. } => flatten(sigma + outer_vec(mu, mu)),
            Params::Quadratic {
                mu: centre,
                raw: false,
            } => {
                let e = mu - centre;
                flatten(sigma + outer_vec(&e, &e))
            }
            Params::Projected { a, b, exp, .. } => {
                let (m, v) = (a.dot(mu), (sigma * a).dot(a));
                DVector::from_element(
                    1,
                    if *exp {
                        (m + 0.5 * v).exp()
                    } else {
                        phi_ratio(m - b, v.sqrt())
                    },
                )
            }
        })
    }

    /// `|P^{N+1}F(x) − π(F)|` for the Gaussian the truncated solution was built from: the
    /// amount by which the truncated `G` misses the Poisson equation at `x`.
    pub fn truncation_residual(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let Params::Projected {
            a,
            b,
            mu_a,
            var_a,
            terms,
            exp,
        } = &self.params
        else {
            return Ok(0.0);
        };
        let bn = self.beta().powi(*terms as i32 + 1);
        let mean = bn * a.dot(x) + (1.0 - bn) * mu_a;
        let var = (1.0 - bn * bn) * var_a;
        Ok(if *exp {
            ((mean + 0.5 * var).exp() - (mu_a + 0.5 * var_a).exp()).abs()
        } else {
            (phi_ratio(mean - b, var.sqrt()) - phi_ratio(mu_a - b, var_a.sqrt())).abs()
        })
    }
}

/// Source of proposal covariances `C_x` along a trace.
pub trait ProposalMoments: Sync {
    fn covariance(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `aᵀC_x a`; override when it is cheaper than forming `C_x`.
    fn projected_variance(&self, x: &DVector<f64>, a: &DVector<f64>) -> Result<f64> {
        Ok((self.covariance(x)? * a).dot(a))
    }
}

/// A proposal covariance that does not depend on the state.
#[derive(Debug, Clone)]
pub struct FixedMoments(pub DMatrix<f64>);

impl ProposalMoments for FixedMoments {
    fn covariance(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.0.clone())
    }
}

/// Proposal covariances of a generic sampler spec on a target.
pub struct SpecMoments<'a> {
    pub spec: &'a ProposalSpec,
    pub target: &'a dyn TargetModel,
}

impl ProposalMoments for SpecMoments<'_> {
    fn covariance(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        proposal_covariance(self.spec, self.target, x)
    }
}

/// Per-step control variates for one output component set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVariatePair {
    pub h1: DVector<f64>,
    pub h2: DVector<f64>,
}

/// `H₁` and `H₂` along a trace, stored as `n × m` matrices.
#[derive(Debug, Clone)]
pub struct ControlVariates {
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
}

impl ControlVariates {
    pub fn len(&self) -> usize {
        self.h1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h1.nrows() == 0
    }

    pub fn components(&self) -> usize {
        self.h1.ncols()
    }

    pub fn pair(&self, i: usize) -> ControlVariatePair {
        ControlVariatePair {
            h1: self.h1.row(i).transpose(),
            h2: self.h2.row(i).transpose(),
        }
    }

    pub fn rows(&self, start: usize, len: usize) -> ControlVariates {
        ControlVariates {
            h1: self.h1.rows(start, len).into_owned(),
            h2: self.h2.rows(start, len).into_owned(),
        }
    }
}

/// `(H₁, H₂)` for a single transition.
pub fn control_variate_pair(
    solution: &PoissonSolution,
    rec: &TransitionRecord,
    moments: Option<&dyn ProposalMoments>,
) -> Result<ControlVariatePair> {
    let gx = solution.evaluate(&rec.x)?;
    let gy = solution.evaluate(&rec.y)?;
    let eq = match (&solution.params, moments) {
        (Params::Linear, _) => {
            solution.proposal_expectation(&rec.proposal_mean, &DMatrix::zeros(0, 0))?
        }
        (Params::Projected { a, .. }, Some(mm)) => {
            solution.projected_expectation(&rec.proposal_mean, mm.projected_variance(&rec.x, a)?)?
        }
        (_, Some(mm)) => {
            solution.proposal_expectation(&rec.proposal_mean, &mm.covariance(&rec.x)?)?
        }
        (_, None) => {
            return Err(Error::InvalidParameter(format!(
                "{:?} needs proposal covariances",
                solution.kind()
            )))
        }
    };
    Ok(ControlVariatePair {
        h1: (&gy - &gx) * rec.alpha,
        h2: &gy - eq,
    })
}

fn check_trace(trace: &ChainTrace, solution: &PoissonSolution) -> Result<()> {
    let kind: ProposalKind = trace.label.parse()?;
    if !kind.is_gaussian_invariant() {
        return Err(Error::Precondition(format!(
            "control variates need a Gaussian-invariant trace, got {kind}"
        )));
    }
    let tol = 1e-12 * solution.gamma.max(1.0);
    if (trace.step_size - solution.gamma).abs() > tol {
        return Err(Error::Precondition(format!(
            "trace step size {} differs from solution step size {}",
            trace.step_size, solution.gamma
        )));
    }
    Ok(())
}

/// `H₁` and `H₂` at every step of a Gaussian-invariant trace.
pub fn control_variates(
    trace: &ChainTrace,
    solution: &PoissonSolution,
    moments: Option<&dyn ProposalMoments>,
) -> Result<ControlVariates> {
    check_trace(trace, solution)?;
    let n = trace.len();
    let m = solution.output_dim(trace.dim());
    let pairs: Vec<ControlVariatePair> = trace
        .records
        .par_iter()
        .map(|r| control_variate_pair(solution, r, moments))
        .collect::<Result<_>>()?;
    let mut h1 = DMatrix::zeros(n, m);
    let mut h2 = DMatrix::zeros(n, m);
    for (i, p) in pairs.iter().enumerate() {
        h1.set_row(i, &p.h1.transpose());
        h2.set_row(i, &p.h2.transpose());
    }
    Ok(ControlVariates { h1, h2 })
}

/// `F(Xᵢ)` for every state of a trace as an `n × m` matrix.
pub fn function_values<F>(trace: &ChainTrace, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let rows: Vec<DVector<f64>> = trace
        .records
        .iter()
        .map(|r| f(&r.x))
        .collect::<Result<_>>()?;
    let m = rows.first().map_or(0, |r| r.len());
    let mut out = DMatrix::zeros(rows.len(), m);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: r.len(),
            });
        }
        out.set_row(i, &r.transpose());
    }
    Ok(out)
}

/// Per-component coefficients `(β̂₁, β̂₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaHat {
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
    /// Components whose `K_n` needed the ridge.
    pub regularized: Vec<bool>,
}

impl BetaHat {
    pub fn zeros(m: usize) -> Self {
        BetaHat {
            beta1: DVector::zeros(m),
            beta2: DVector::zeros(m),
            regularized: vec![false; m],
        }
    }

    /// The same pair for every component.
    pub fn constant(m: usize, b1: f64, b2: f64) -> Self {
        BetaHat {
            beta1: DVector::from_element(m, b1),
            beta2: DVector::from_element(m, b2),
            regularized: vec![false; m],
        }
    }

    pub fn len(&self) -> usize {
        self.beta1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta1.is_empty()
    }
}

fn condition_2x2(k11: f64, k12: f64, k22: f64) -> f64 {
    let half = 0.5 * (k11 + k22);
    let r = (0.25 * (k11 - k22).powi(2) + k12 * k12).sqrt();
    let (hi, lo) = (half + r, half - r);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Coefficients minimizing the empirical variance of `F + β₁H₁ + β₂H₂`, per component:
/// `β̂ = −K_n⁻¹[μ_n(FH) − μ_n(F)μ_n(H)]` with `K_n = (1/(n−1))ΣHHᵀ`.
pub fn estimate_beta(f_values: &DMatrix<f64>, cv: &ControlVariates) -> Result<BetaHat> {
    let n = f_values.nrows();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 samples to estimate coefficients, got {n}"
        )));
    }
    if cv.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cv.len(),
        });
    }
    let m = f_values.ncols();
    if cv.components() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: cv.components(),
        });
    }
    let mut out = BetaHat::zeros(m);
    let nf = n as f64;
    for k in 0..m {
        let (f, h1, h2) = (f_values.column(k), cv.h1.column(k), cv.h2.column(k));
        let mut k11 = h1.norm_squared() / (nf - 1.0);
        let k12 = h1.dot(&h2) / (nf - 1.0);
        let mut k22 = h2.norm_squared() / (nf - 1.0);
        let mf = f.mean();
        let c1 = f.dot(&h1) / nf - mf * h1.mean();
        let c2 = f.dot(&h2) / nf - mf * h2.mean();
        let trace = k11 + k22;
        if !trace.is_finite() || !c1.is_finite() || !c2.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite control-variate moments in component {k}"
            )));
        }
        if trace == 0.0 {
            continue;
        }
        if condition_2x2(k11, k12, k22) > CONDITION_LIMIT {
            let ridge = RIDGE * trace / 2.0;
            k11 += ridge;
            k22 += ridge;
            out.regularized[k] = true;
        }
        let det = k11 * k22 - k12 * k12;
        out.beta1[k] = -(k22 * c1 - k12 * c2) / det;
        out.beta2[k] = -(k11 * c2 - k12 * c1) / det;
    }
    Ok(out)
}

/// Plain and control-variate ergodic averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub plain_estimate: DVector<f64>,
    pub cv_estimate: DVector<f64>,
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
    pub n: usize,
}

impl EstimatorReport {
    pub fn components(&self) -> usize {
        self.plain_estimate.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["component", "plain", "cv", "beta1", "beta2"])?;
        for k in 0..self.components() {
            w.write_record([
                k.to_string(),
                self.plain_estimate[k].to_string(),
                self.cv_estimate[k].to_string(),
                self.beta1[k].to_string(),
                self.beta2[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a report written by [`EstimatorReport::write_csv`]; the sample count is not stored and comes back as 0.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut cols: [Vec<f64>; 4] = Default::default();
        for row in r.records() {
            let row = row?;
            for (j, col) in cols.iter_mut().enumerate() {
                let v = row
                    .get(j + 1)
                    .ok_or_else(|| Error::Dataset("short estimator row".into()))?;
                col.push(
                    v.parse()
                        .map_err(|_| Error::Dataset(format!("bad number {v:?}")))?,
                );
            }
        }
        let [p, c, b1, b2] = cols.map(DVector::from_vec);
        Ok(EstimatorReport {
            plain_estimate: p,
            cv_estimate: c,
            beta1: b1,
            beta2: b2,
            n: 0,
        })
    }
}

/// `μ_{n,G}(F) = μ_n(F) + β̂₁∘μ_n(H₁) + β̂₂∘μ_n(H₂)` with given coefficients.
pub fn cv_estimate(
    f_values: &DMatrix<f64>,
    cv: &ControlVariates,
    beta: &BetaHat,
) -> Result<EstimatorReport> {
    let (n, m) = f_values.shape();
    if cv.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cv.len(),
        });
    }
    if cv.components() != m || beta.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: if beta.len() != m {
                beta.len()
            } else {
                cv.components()
            },
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    let plain = f_values.row_mean().transpose();
    let mh1 = cv.h1.row_mean().transpose();
    let mh2 = cv.h2.row_mean().transpose();
    let cv_est = &plain + beta.beta1.component_mul(&mh1) + beta.beta2.component_mul(&mh2);
    Ok(EstimatorReport {
        plain_estimate: plain,
        cv_estimate: cv_est,
        beta1: beta.beta1.clone(),
        beta2: beta.beta2.clone(),
        n,
    })
}

/// How `β̂` relates to the samples it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    /// Estimate and apply on the whole trace.
    #[default]
    PlugIn,
    /// Estimate on the first half, apply on the second.
    Split,
    /// The limiting `(1, −1)`, exact when `G` solves the Poisson equation of the sampled kernel.
    Exact,
}

/// Estimates `β̂` and the variance-reduced average from precomputed values.
pub fn cv_estimator_from_values(
    f_values: &DMatrix<f64>,
    cv: &ControlVariates,
    mode: BetaMode,
) -> Result<EstimatorReport> {
    match mode {
        BetaMode::PlugIn => cv_estimate(f_values, cv, &estimate_beta(f_values, cv)?),
        BetaMode::Split => {
            let n = f_values.nrows();
            let half = n / 2;
            let beta = estimate_beta(&f_values.rows(0, half).into_owned(), &cv.rows(0, half))?;
            cv_estimate(
                &f_values.rows(half, n - half).into_owned(),
                &cv.rows(half, n - half),
                &beta,
            )
        }
        BetaMode::Exact => {
            cv_estimate(f_values, cv, &BetaHat::constant(cv.components(), 1.0, -1.0))
        }
    }
}

/// Variance-reduced estimate of `π(F)` for the `F` that `solution` solves for.
pub fn cv_estimator(
    trace: &ChainTrace,
    solution: &PoissonSolution,
    moments: Option<&dyn ProposalMoments>,
    mode: BetaMode,
) -> Result<EstimatorReport> {
    let cv = control_variates(trace, solution, moments)?;
    let f = function_values(trace, |x| solution.target_function(x))?;
    cv_estimator_from_values(&f, &cv, mode)
}

/// The zero-variance estimate `(1/n)Σ[Xᵢ + (mᵢ − Xᵢ)/γ]` for a Gaussian-invariant chain on
/// a Gaussian target. This is `Xᵢ + A∇log π(Xᵢ)` for GI-MALA and `μ` pointwise for GI-RWM.
pub fn zero_variance_estimator_gaussian(
    trace: &ChainTrace,
    target: &GaussianTarget,
) -> Result<DVector<f64>> {
    let kind: ProposalKind = trace.label.parse()?;
    if !kind.is_gaussian_invariant() {
        return Err(Error::Precondition(format!(
            "zero-variance estimator needs a Gaussian-invariant trace, got {kind}"
        )));
    }
    if trace.is_empty() {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    if trace.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: trace.dim(),
        });
    }
    if let Some(i) = trace.records.iter().position(|r| !r.accepted) {
        return Err(Error::Precondition(format!(
            "trace has a rejection at step {i}"
        )));
    }
    let gamma = trace.step_size;
    let mut sum = DVector::zeros(trace.dim());
    for r in &trace.records {
        sum += &r.x + (&r.proposal_mean - &r.x) / gamma;
    }
    Ok(sum / trace.len() as f64)
}
