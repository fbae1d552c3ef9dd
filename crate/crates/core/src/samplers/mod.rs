//! Metropolis-Hastings engine.
//!
//! All proposals are Gaussian, `q(y | x) = N(y | m_x, c·A_x)`, and differ only in the mean
//! `m_x`, the scale `c` and where the preconditioner `A_x` comes from:
//!
//! | kind | `m_x` | `c` |
//! |------|-------|-----|
//! | GI-RWM | `(1−γ)x + γμ` | `2γ−γ²` |
//! | pCN | `(1−γ)x` | `2γ−γ²` |
//! | GI-MALA | `x + γA_x∇log π(x)` | `2γ−γ²` |
//! | MALA | `x + γA_x∇log π(x)` | `2γ` |
//! | RWM | `x` | `2γ` |

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Preconditioner;
use crate::rng::{chain_rng, standard_normal_vector, ChainRng};
use crate::targets::TargetModel;

mod trace_io;

pub use trace_io::{read_trace, write_trace, TraceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    GiRwm,
    GiMalaConst,
    GiMalaPrecond,
    Rwm,
    MalaConst,
    MalaPrecond,
    Pcn,
}

impl ProposalKind {
    pub const ALL: [ProposalKind; 7] = [
        Self::GiRwm,
        Self::GiMalaConst,
        Self::GiMalaPrecond,
        Self::Rwm,
        Self::MalaConst,
        Self::MalaPrecond,
        Self::Pcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GiRwm => "gi-rwm",
            Self::GiMalaConst => "gi-mala-const",
            Self::GiMalaPrecond => "gi-mala-precond",
            Self::Rwm => "rwm",
            Self::MalaConst => "mala-const",
            Self::MalaPrecond => "mala-precond",
            Self::Pcn => "pcn",
        }
    }

    pub fn is_gaussian_invariant(self) -> bool {
        matches!(
            self,
            Self::GiRwm | Self::GiMalaConst | Self::GiMalaPrecond | Self::Pcn
        )
    }

    pub fn uses_gradient(self) -> bool {
        matches!(
            self,
            Self::GiMalaConst | Self::GiMalaPrecond | Self::MalaConst | Self::MalaPrecond
        )
    }

    pub fn position_dependent(self) -> bool {
        matches!(self, Self::GiMalaPrecond | Self::MalaPrecond)
    }

    /// Acceptance rate targeted by adaptation unless overridden.
    pub fn default_target_rate(self) -> f64 {
        match self {
            Self::GiRwm | Self::GiMalaConst | Self::GiMalaPrecond => 0.8,
            Self::MalaConst | Self::MalaPrecond => 0.574,
            Self::Rwm | Self::Pcn => 0.234,
        }
    }

    /// The factor `c` multiplying `A_x` in the proposal covariance.
    pub fn covariance_scale(self, gamma: f64) -> f64 {
        if self.is_gaussian_invariant() {
            gi_scale(gamma)
        } else {
            2.0 * gamma
        }
    }
}

impl fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProposalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sampler kind '{s}'")))
    }
}

/// `2γ − γ²`.
pub fn gi_scale(gamma: f64) -> f64 {
    gamma * (2.0 - gamma)
}

fn check_gi_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "step size {gamma} outside (0, 2)"
        )))
    }
}

fn check_positive_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "step size {gamma} must be positive"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct ProposalSpec {
    pub kind: ProposalKind,
    pub step_size: f64,
    /// `μ` for GI-RWM.
    pub mean: Option<DVector<f64>>,
    /// Constant `Σ` (or `Σ₀` for pCN) for the constant-preconditioner kinds.
    pub precond: Option<Preconditioner>,
}

impl ProposalSpec {
    pub fn gi_rwm(mean: DVector<f64>, covariance: Preconditioner, gamma: f64) -> Self {
        Self {
            kind: ProposalKind::GiRwm,
            step_size: gamma,
            mean: Some(mean),
            precond: Some(covariance),
        }
    }

    pub fn gi_mala_const(covariance: Preconditioner, gamma: f64) -> Self {
        Self {
            kind: ProposalKind::GiMalaConst,
            step_size: gamma,
            mean: None,
            precond: Some(covariance),
        }
    }

    pub fn gi_mala_precond(gamma: f64) -> Self {
        Self {
            kind: ProposalKind::GiMalaPrecond,
            step_size: gamma,
            mean: None,
            precond: None,
        }
    }

    pub fn rwm(covariance: Preconditioner, gamma: f64) -> Self {
        Self {
            kind: ProposalKind::Rwm,
            step_size: gamma,
            mean: None,
            precond: Some(covariance),
        }
    }

    pub fn mala_const(covariance: Preconditioner, gamma: f64) -> Self {
        Self {
            kind: ProposalKind::MalaConst,
            step_size: gamma,
            mean: None,
            precond: Some(covariance),
        }
    }

    pub fn mala_precond(gamma: f64) -> Self {
        Self {
            kind: ProposalKind::MalaPrecond,
            step_size: gamma,
            mean: None,
            precond: None,
        }
    }

    pub fn pcn(prior_covariance: Preconditioner, gamma: f64) -> Self {
        Self {
            kind: ProposalKind::Pcn,
            step_size: gamma,
            mean: None,
            precond: Some(prior_covariance),
        }
    }

    pub fn with_step_size(mut self, gamma: f64) -> Self {
        self.step_size = gamma;
        self
    }

    /// Checks the step-size range and that the required parameters are present with dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.kind.is_gaussian_invariant() {
            check_gi_gamma(self.step_size)?;
        } else {
            check_positive_gamma(self.step_size)?;
        }
        if !self.kind.position_dependent() {
            let p = self.precond.as_ref().ok_or_else(|| {
                Error::InvalidParameter(format!("{} needs a constant preconditioner", self.kind))
            })?;
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
        }
        if self.kind == ProposalKind::GiRwm {
            let m = self
                .mean
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("gi-rwm needs a mean".into()))?;
            if m.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }
}

/// One Metropolis-Hastings transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub proposal_mean: DVector<f64>,
    pub alpha: f64,
    pub accepted: bool,
}

impl TransitionRecord {
    /// `y` if accepted, else `x`.
    pub fn next_state(&self) -> &DVector<f64> {
        if self.accepted {
            &self.y
        } else {
            &self.x
        }
    }
}

/// Post-burn-in transitions of one chain plus its adaptation summary.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub label: String,
    pub records: Vec<TransitionRecord>,
    pub n_burnin: usize,
    pub seed: u64,
    /// Step size in force after burn-in.
    pub step_size: f64,
    pub burnin_acceptance: f64,
    /// Wall-clock seconds of the post-burn-in sampling loop.
    pub sampling_seconds: f64,
    pub burnin_seconds: f64,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.accepted).count() as f64 / self.records.len() as f64
    }

    pub fn mean_alpha(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.alpha).sum::<f64>() / self.records.len() as f64
    }

    /// The chain states `X_0, …, X_{n−1}` as rows.
    pub fn sample_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(self.records.len(), d, |i, j| self.records[i].x[j])
    }

    pub fn sample_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for r in &self.records {
            m += &r.x;
        }
        m / self.records.len().max(1) as f64
    }

    /// True when each record starts from the previous record's next state.
    pub fn is_chained(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[0].next_state() == &w[1].x)
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.records.last().map(|r| r.next_state())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub n_burnin: usize,
    pub n_samples: usize,
    pub adapt: bool,
    /// Target acceptance rate; the kernel's default when `None`.
    pub target_rate: Option<f64>,
}

impl RunOptions {
    pub fn fixed(n_burnin: usize, n_samples: usize) -> Self {
        Self {
            n_burnin,
            n_samples,
            adapt: false,
            target_rate: None,
        }
    }

    pub fn adaptive(n_burnin: usize, n_samples: usize) -> Self {
        Self {
            n_burnin,
            n_samples,
            adapt: true,
            target_rate: None,
        }
    }
}

/// Robbins-Monro update on `log γ` with gain `t^{−0.6}`, clamped to `(1e-6, 2−1e-6)` for
/// Gaussian-invariant kinds and to `γ ≥ 1e-6` otherwise.
pub fn adapt_step_size(
    accepted: bool,
    gamma: f64,
    target_rate: f64,
    t: usize,
    gaussian_invariant: bool,
) -> f64 {
    let t = t.max(1) as f64;
    let a = if accepted { 1.0 } else { 0.0 };
    let updated = (gamma.ln() + t.powf(-0.6) * (a - target_rate)).exp();
    let hi = if gaussian_invariant {
        2.0 - 1e-6
    } else {
        f64::INFINITY
    };
    updated.clamp(1e-6, hi)
}

/// A Markov kernel driven by [`run_kernel`].
pub trait MhKernel {
    fn dim(&self) -> usize;
    fn label(&self) -> String;
    fn gaussian_invariant(&self) -> bool;
    fn default_target_rate(&self) -> f64;
    fn step_size(&self) -> f64;
    fn set_step_size(&mut self, gamma: f64);
    fn current(&self) -> &DVector<f64>;
    /// One transition from the current state; consumes `d` normals then one uniform.
    fn step(&mut self, rng: &mut ChainRng) -> Result<TransitionRecord>;
}

/// Runs burn-in (adapting `γ` if requested) and then `n_samples` recorded transitions.
pub fn run_kernel<K: MhKernel + ?Sized>(
    kernel: &mut K,
    opts: &RunOptions,
    seed: u64,
) -> Result<ChainTrace> {
    if opts.n_samples == 0 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    if kernel.current().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { iteration: 0 });
    }
    let mut rng = chain_rng(seed);
    let target_rate = opts
        .target_rate
        .unwrap_or_else(|| kernel.default_target_rate());
    let gi = kernel.gaussian_invariant();

    let start = Instant::now();
    let mut burn_accepts = 0usize;
    for t in 1..=opts.n_burnin {
        let rec = kernel.step(&mut rng)?;
        burn_accepts += rec.accepted as usize;
        if opts.adapt {
            let g = adapt_step_size(rec.accepted, kernel.step_size(), target_rate, t, gi);
            kernel.set_step_size(g);
        }
        check_state(kernel.current(), t)?;
    }
    let burnin_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut records = Vec::with_capacity(opts.n_samples);
    for i in 0..opts.n_samples {
        let rec = kernel.step(&mut rng)?;
        records.push(rec);
        check_state(kernel.current(), opts.n_burnin + i + 1)?;
    }
    let sampling_seconds = start.elapsed().as_secs_f64();

    Ok(ChainTrace {
        label: kernel.label(),
        records,
        n_burnin: opts.n_burnin,
        seed,
        step_size: kernel.step_size(),
        burnin_acceptance: if opts.n_burnin > 0 {
            burn_accepts as f64 / opts.n_burnin as f64
        } else {
            f64::NAN
        },
        sampling_seconds,
        burnin_seconds,
    })
}

fn check_state(x: &DVector<f64>, iteration: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { iteration })
    }
}

/// Quantities at a point that the proposal and its reverse need.
#[derive(Debug, Clone)]
pub struct PointState {
    pub x: DVector<f64>,
    pub log_density: f64,
    pub grad: Option<DVector<f64>>,
    pub precond: Preconditioner,
    pub log_likelihood: Option<f64>,
}

impl PointState {
    pub fn evaluate(
        spec: &ProposalSpec,
        target: &dyn TargetModel,
        x: DVector<f64>,
    ) -> Result<Self> {
        let (log_density, grad) = if spec.kind.uses_gradient() {
            let (lp, g) = target.log_density_and_grad(&x);
            (lp, Some(g))
        } else {
            (target.log_density(&x), None)
        };
        let precond = if spec.kind.position_dependent() {
            target.curvature(&x).ok_or_else(|| {
                Error::Precondition(format!("{} needs a target curvature hook", spec.kind))
            })?
        } else {
            spec.precond.clone().ok_or_else(|| {
                Error::InvalidParameter(format!("{} needs a preconditioner", spec.kind))
            })?
        };
        let log_likelihood = if spec.kind == ProposalKind::Pcn {
            target.log_likelihood(&x)
        } else {
            None
        };
        Ok(Self {
            x,
            log_density,
            grad,
            precond,
            log_likelihood,
        })
    }

    fn is_valid(&self) -> bool {
        self.log_density.is_finite()
            && self.x.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Proposal mean `m_x` at `state`.
pub fn proposal_mean(spec: &ProposalSpec, state: &PointState) -> DVector<f64> {
    let g = spec.step_size;
    match spec.kind {
        ProposalKind::GiRwm => &state.x * (1.0 - g) + spec.mean.as_ref().expect("validated") * g,
        ProposalKind::Pcn => &state.x * (1.0 - g),
        ProposalKind::Rwm => state.x.clone(),
        _ => {
            &state.x
                + state
                    .precond
                    .mul(state.grad.as_ref().expect("gradient kinds"))
                    * g
        }
    }
}

/// `log q(to | from)` with the proposal mean `mean_from`.
fn log_q(
    spec: &ProposalSpec,
    from: &PointState,
    mean_from: &DVector<f64>,
    to: &DVector<f64>,
) -> f64 {
    from.precond
        .log_normal(to, mean_from, spec.kind.covariance_scale(spec.step_size))
}

fn log_ratio_states(
    spec: &ProposalSpec,
    sx: &PointState,
    mx: &DVector<f64>,
    sy: &PointState,
) -> f64 {
    if !sy.is_valid() {
        return f64::NEG_INFINITY;
    }
    let r = match spec.kind {
        ProposalKind::Rwm => sy.log_density - sx.log_density,
        ProposalKind::Pcn => match (sx.log_likelihood, sy.log_likelihood) {
            (Some(gx), Some(gy)) => gy - gx,
            _ => {
                let my = proposal_mean(spec, sy);
                sy.log_density - sx.log_density + log_q(spec, sy, &my, &sx.x)
                    - log_q(spec, sx, mx, &sy.x)
            }
        },
        _ => {
            let my = proposal_mean(spec, sy);
            sy.log_density - sx.log_density + log_q(spec, sy, &my, &sx.x)
                - log_q(spec, sx, mx, &sy.x)
        }
    };
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

/// `log π(y) − log π(x) + log q(x|y) − log q(y|x)` with all reverse-move quantities
/// recomputed at `y`. A non-finite density at `y` gives `−∞`.
pub fn mh_log_ratio(
    spec: &ProposalSpec,
    target: &dyn TargetModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    m_x: &DVector<f64>,
) -> Result<f64> {
    let sx = PointState::evaluate(spec, target, x.clone())?;
    let sy = PointState::evaluate(spec, target, y.clone())?;
    Ok(log_ratio_states(spec, &sx, m_x, &sy))
}

/// `min(1, exp(r))`, with NaN mapped to zero.
pub fn accept_prob(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// The generic kernel for any [`ProposalSpec`] over any [`TargetModel`].
pub struct GenericKernel<'a> {
    spec: ProposalSpec,
    target: &'a dyn TargetModel,
    current: PointState,
}

impl<'a> GenericKernel<'a> {
    pub fn new(spec: ProposalSpec, target: &'a dyn TargetModel, x0: DVector<f64>) -> Result<Self> {
        spec.validate(target.dim())?;
        if x0.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: x0.len(),
            });
        }
        let current = PointState::evaluate(&spec, target, x0)?;
        if !current.is_valid() {
            return Err(Error::NonFiniteState { iteration: 0 });
        }
        Ok(Self {
            spec,
            target,
            current,
        })
    }

    pub fn spec(&self) -> &ProposalSpec {
        &self.spec
    }

    /// Proposes with the supplied standard-normal noise and acceptance uniform.
    pub fn step_with_noise(&mut self, eps: &DVector<f64>, u: f64) -> Result<TransitionRecord> {
        let m = proposal_mean(&self.spec, &self.current);
        let c = self.spec.kind.covariance_scale(self.spec.step_size);
        let y = &m + self.current.precond.apply_factor(eps) * c.sqrt();
        let sy = PointState::evaluate(&self.spec, self.target, y.clone())?;
        let alpha = accept_prob(log_ratio_states(&self.spec, &self.current, &m, &sy));
        let accepted = u < alpha;
        let rec = TransitionRecord {
            x: self.current.x.clone(),
            y,
            proposal_mean: m,
            alpha,
            accepted,
        };
        if accepted {
            self.current = sy;
        }
        Ok(rec)
    }
}

impl MhKernel for GenericKernel<'_> {
    fn dim(&self) -> usize {
        self.current.x.len()
    }

    fn label(&self) -> String {
        self.spec.kind.name().to_string()
    }

    fn gaussian_invariant(&self) -> bool {
        self.spec.kind.is_gaussian_invariant()
    }

    fn default_target_rate(&self) -> f64 {
        self.spec.kind.default_target_rate()
    }

    fn step_size(&self) -> f64 {
        self.spec.step_size
    }

    fn set_step_size(&mut self, gamma: f64) {
        self.spec.step_size = gamma;
    }

    fn current(&self) -> &DVector<f64> {
        &self.current.x
    }

    fn step(&mut self, rng: &mut ChainRng) -> Result<TransitionRecord> {
        let eps = standard_normal_vector(self.dim(), rng);
        let u: f64 = rng.gen();
        self.step_with_noise(&eps, u)
    }
}

/// One transition of the generic kernel from `x`.
pub fn mh_step(
    spec: &ProposalSpec,
    target: &dyn TargetModel,
    x: &DVector<f64>,
    rng: &mut ChainRng,
) -> Result<TransitionRecord> {
    GenericKernel::new(spec.clone(), target, x.clone())?.step(rng)
}

pub fn run_chain(
    spec: &ProposalSpec,
    target: &dyn TargetModel,
    x0: DVector<f64>,
    opts: &RunOptions,
    seed: u64,
) -> Result<ChainTrace> {
    let mut kernel = GenericKernel::new(spec.clone(), target, x0)?;
    run_kernel(&mut kernel, opts, seed)
}

/// Proposal covariance `c·A_x` at `x`.
pub fn proposal_covariance(
    spec: &ProposalSpec,
    target: &dyn TargetModel,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let a = if spec.kind.position_dependent() {
        target.curvature(x).ok_or_else(|| {
            Error::Precondition(format!("{} needs a target curvature hook", spec.kind))
        })?
    } else {
        spec.precond
            .clone()
            .ok_or_else(|| Error::InvalidParameter("missing preconditioner".into()))?
    };
    Ok(a.matrix() * spec.kind.covariance_scale(spec.step_size))
}

fn with_noise(
    mean: DVector<f64>,
    factor: &Preconditioner,
    scale: f64,
    eps: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let y = &mean + factor.apply_factor(eps) * scale.sqrt();
    (y, mean)
}

/// GI-RWM draw `y = (1−γ)x + γμ + √(2γ−γ²) L ε`; returns `(y, proposal_mean)`.
pub fn girwm_propose_with_noise(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &Preconditioner,
    gamma: f64,
    eps: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_gi_gamma(gamma)?;
    Ok(with_noise(
        x * (1.0 - gamma) + mu * gamma,
        sigma,
        gi_scale(gamma),
        eps,
    ))
}

pub fn girwm_propose<R: Rng + ?Sized>(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &Preconditioner,
    gamma: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    girwm_propose_with_noise(x, mu, sigma, gamma, &standard_normal_vector(x.len(), rng))
}

/// GI-MALA draw with mean `x + γA∇` and covariance `(2γ−γ²)A`.
pub fn gimala_propose_with_noise(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    a: &Preconditioner,
    gamma: f64,
    eps: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_gi_gamma(gamma)?;
    Ok(with_noise(x + a.mul(grad) * gamma, a, gi_scale(gamma), eps))
}

pub fn gimala_propose<R: Rng + ?Sized>(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    a: &Preconditioner,
    gamma: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    gimala_propose_with_noise(x, grad, a, gamma, &standard_normal_vector(x.len(), rng))
}

/// MALA draw with mean `x + γA∇` and covariance `2γA`.
pub fn mala_propose_with_noise(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    a: &Preconditioner,
    gamma: f64,
    eps: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_positive_gamma(gamma)?;
    Ok(with_noise(x + a.mul(grad) * gamma, a, 2.0 * gamma, eps))
}

pub fn mala_propose<R: Rng + ?Sized>(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    a: &Preconditioner,
    gamma: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    mala_propose_with_noise(x, grad, a, gamma, &standard_normal_vector(x.len(), rng))
}

/// Random-walk draw `N(x, 2γΣ)`.
pub fn rwm_propose_with_noise(
    x: &DVector<f64>,
    sigma: &Preconditioner,
    gamma: f64,
    eps: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_positive_gamma(gamma)?;
    Ok(with_noise(x.clone(), sigma, 2.0 * gamma, eps))
}

pub fn rwm_propose<R: Rng + ?Sized>(
    x: &DVector<f64>,
    sigma: &Preconditioner,
    gamma: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    rwm_propose_with_noise(x, sigma, gamma, &standard_normal_vector(x.len(), rng))
}

/// pCN draw: GI-RWM with zero mean against the prior covariance.
pub fn pcn_propose<R: Rng + ?Sized>(
    x: &DVector<f64>,
    prior: &Preconditioner,
    gamma: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    girwm_propose(x, &DVector::zeros(x.len()), prior, gamma, rng)
}

#[cfg(test)]
mod tests;
