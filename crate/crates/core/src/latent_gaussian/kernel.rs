use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::PriorEigen;
use crate::error::{Error, Result};
use crate::linalg::Preconditioner;
use crate::rng::{standard_normal_vector, ChainRng};
use crate::samplers::{accept_prob, gi_scale, MhKernel, ProposalKind, TransitionRecord};
use crate::targets::{LatentGaussianTarget, TargetModel};

/// Lower clamp on the mean likelihood curvature.
pub const DELTA_MIN: f64 = 1e-12;

/// Mean of `diag(−∇²g)`, clamped below at `1e-12`.
pub fn compute_delta(curvature_diag: &DVector<f64>) -> Result<f64> {
    if curvature_diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite likelihood curvature".into()));
    }
    let mean = curvature_diag.sum() / curvature_diag.len().max(1) as f64;
    Ok(if mean <= DELTA_MIN { DELTA_MIN } else { mean })
}

/// Counts of `d × d` matrix-vector products with the eigenvector matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProductCounter {
    /// Products needed by the transition itself: one for the proposal, one at acceptance.
    pub kernel: u64,
    /// One-off products when a chain is started.
    pub init: u64,
    /// Products spent only on recording the proposal mean.
    pub bookkeeping: u64,
}

/// Per-state quantities reused between proposal and acceptance.
#[derive(Debug, Clone)]
pub struct LgmStepCache {
    pub delta: f64,
    /// `ξ = δ·ζ = Uᵀ(δx + ∇g(x))`.
    pub xi: DVector<f64>,
    pub grad_g: DVector<f64>,
    pub g: f64,
    /// `Uᵀx`.
    pub x_tilde: DVector<f64>,
}

impl LgmStepCache {
    /// `ζ = Uᵀ(x + δ⁻¹∇g(x))`.
    pub fn zeta(&self) -> DVector<f64> {
        &self.xi / self.delta
    }

    fn is_finite(&self) -> bool {
        self.g.is_finite()
            && self.grad_g.iter().all(|v| v.is_finite())
            && self.xi.iter().all(|v| v.is_finite())
    }
}

/// Builds the cache at `x` from scratch (two products, counted as initialisation).
pub fn lgm_cache(
    target: &LatentGaussianTarget,
    eigen: &PriorEigen,
    x: &DVector<f64>,
    counter: &mut ProductCounter,
) -> Result<LgmStepCache> {
    if x.len() != eigen.dim() || target.dim() != eigen.dim() {
        return Err(Error::DimensionMismatch {
            expected: eigen.dim(),
            got: x.len(),
        });
    }
    let x_tilde = eigen.vectors().tr_mul(x);
    counter.init += 1;
    let mut scratch = ProductCounter::default();
    let cache = evaluate_at(target, eigen, x, x_tilde, &mut scratch)?;
    counter.init += scratch.kernel;
    Ok(cache)
}

/// Cache at `y` given `ỹ = Uᵀy` (one product for `Uᵀ∇g(y)`).
fn evaluate_at(
    target: &LatentGaussianTarget,
    eigen: &PriorEigen,
    y: &DVector<f64>,
    y_tilde: DVector<f64>,
    counter: &mut ProductCounter,
) -> Result<LgmStepCache> {
    let g = target.g(y);
    let grad_g = target.grad_g(y);
    let curv = target.curvature_diag(y);
    let delta = if curv.iter().all(|v| v.is_finite()) {
        compute_delta(&curv)?
    } else {
        f64::NAN
    };
    let mut xi = eigen.vectors().tr_mul(&grad_g);
    counter.kernel += 1;
    xi.axpy(delta, &y_tilde, 1.0);
    Ok(LgmStepCache {
        delta,
        xi,
        grad_g,
        g,
        x_tilde: y_tilde,
    })
}

/// A proposed point with its eigen-coordinates and the proposal mean.
#[derive(Debug, Clone)]
pub struct LgmProposal {
    pub y: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub mean: DVector<f64>,
}

fn resolvent(eigen: &PriorEigen, delta: f64) -> DVector<f64> {
    eigen.values().map(|l| l / (1.0 + delta * l))
}

fn propose_scaled(
    x: &DVector<f64>,
    cache: &LgmStepCache,
    eigen: &PriorEigen,
    gamma: f64,
    scale: f64,
    eps: &DVector<f64>,
    counter: &mut ProductCounter,
) -> LgmProposal {
    let a = resolvent(eigen, cache.delta);
    let shift = a.zip_map(&cache.xi, |ai, xi| gamma * ai * xi);
    let b = DVector::from_fn(a.len(), |i, _| shift[i] + (scale * a[i]).sqrt() * eps[i]);
    // One pass over U for both the draw and the recorded mean.
    let mut rhs = DMatrix::zeros(a.len(), 2);
    rhs.set_column(0, &b);
    rhs.set_column(1, &shift);
    let ub = eigen.vectors() * rhs;
    counter.kernel += 1;
    counter.bookkeeping += 1;
    let y = x * (1.0 - gamma) + ub.column(0);
    let mean = x * (1.0 - gamma) + ub.column(1);
    let y_tilde = &cache.x_tilde * (1.0 - gamma) + b;
    LgmProposal { y, y_tilde, mean }
}

/// GI-MALA draw `y = (1−γ)x + U[γΛ(Λ+δ⁻¹I)⁻¹ζ + √(δ⁻¹(2γ−γ²)) Λ^{1/2}(Λ+δ⁻¹I)^{−1/2} ε]` with
/// the supplied standard-normal `ε`.
pub fn lgm_propose_with_noise(
    x: &DVector<f64>,
    cache: &LgmStepCache,
    eigen: &PriorEigen,
    gamma: f64,
    eps: &DVector<f64>,
) -> Result<LgmProposal> {
    check_gamma(gamma)?;
    Ok(propose_scaled(
        x,
        cache,
        eigen,
        gamma,
        gi_scale(gamma),
        eps,
        &mut ProductCounter::default(),
    ))
}

pub fn lgm_propose<R: Rng + ?Sized>(
    x: &DVector<f64>,
    cache: &LgmStepCache,
    eigen: &PriorEigen,
    gamma: f64,
    rng: &mut R,
) -> Result<LgmProposal> {
    lgm_propose_with_noise(
        x,
        cache,
        eigen,
        gamma,
        &standard_normal_vector(x.len(), rng),
    )
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

/// `h(x, y)` for a proposal with covariance `s·A_x`.
///
/// The closed form has terms in `1/δ` that cancel; this arrangement keeps only the
/// surviving ones so it stays exact when `δ` is tiny:
///
/// `δ/(2s)‖y−x‖² − (γ/s)(y−x)ᵀ∇g − γ²/(2s)(δ‖x‖² + 2xᵀ∇g) + γ²/(2s)Σλᵢξᵢ²/(1+δλᵢ) − ½Σlog(1+δλᵢ)`.
fn h_scaled(
    x: &DVector<f64>,
    y: &DVector<f64>,
    cache: &LgmStepCache,
    eigen: &PriorEigen,
    gamma: f64,
    s: f64,
) -> f64 {
    let delta = cache.delta;
    let w = &cache.grad_g;
    let r = y - x;
    let mut quad = 0.0;
    let mut logdet = 0.0;
    for (l, xi) in eigen.values().iter().zip(cache.xi.iter()) {
        let dl = delta * l;
        quad += l * xi * xi / (1.0 + dl);
        logdet += dl.ln_1p();
    }
    let c = gamma * gamma / (2.0 * s);
    delta / (2.0 * s) * r.norm_squared()
        - gamma / s * r.dot(w)
        - c * (delta * x.norm_squared() + 2.0 * x.dot(w))
        + c * quad
        - 0.5 * logdet
}

/// `h(x, y) = ½δ/(2γ−γ²)‖y − x − (γ/δ)∇g(x)‖² − ½Σlog(λᵢδ+1) − ½γ/(2−γ)·ζᵀ(Λ+δ⁻¹I)⁻¹ζ`.
pub fn lgm_h(
    x: &DVector<f64>,
    y: &DVector<f64>,
    cache_x: &LgmStepCache,
    eigen: &PriorEigen,
    gamma: f64,
) -> f64 {
    h_scaled(x, y, cache_x, eigen, gamma, gi_scale(gamma))
}

/// Which proposal scale the fast path implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LgmKind {
    /// Covariance `(2γ−γ²)A_x`.
    GiMala,
    /// Covariance `2γA_x`.
    Mala,
}

impl LgmKind {
    pub fn scale(self, gamma: f64) -> f64 {
        match self {
            Self::GiMala => gi_scale(gamma),
            Self::Mala => 2.0 * gamma,
        }
    }

    pub fn proposal_kind(self) -> ProposalKind {
        match self {
            Self::GiMala => ProposalKind::GiMalaPrecond,
            Self::Mala => ProposalKind::MalaPrecond,
        }
    }
}

/// Log acceptance ratio `g(y) − g(x) + h(x,y) − h(y,x)`, plus the prior correction
/// `(c_GI/c − 1)/2 · Σ(ỹᵢ² − x̃ᵢ²)/λᵢ` when the proposal scale `c` is not the
/// Gaussian-invariant one.
#[allow(clippy::too_many_arguments)]
pub fn lgm_log_ratio(
    kind: LgmKind,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cache_x: &LgmStepCache,
    cache_y: &LgmStepCache,
    eigen: &PriorEigen,
    gamma: f64,
) -> f64 {
    if !cache_y.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s = kind.scale(gamma);
    let mut r = cache_y.g - cache_x.g + h_scaled(x, y, cache_x, eigen, gamma, s)
        - h_scaled(y, x, cache_y, eigen, gamma, s);
    if kind == LgmKind::Mala {
        let coef = 0.5 * (gi_scale(gamma) / s - 1.0);
        let mut prior = 0.0;
        for ((l, xt), yt) in eigen
            .values()
            .iter()
            .zip(cache_x.x_tilde.iter())
            .zip(cache_y.x_tilde.iter())
        {
            if *l > 0.0 {
                prior += (yt * yt - xt * xt) / l;
            }
        }
        r += coef * prior;
    }
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

/// Acceptance probability of the GI-MALA move `x → y`; also returns the cache at `y`, whose
/// construction is the iteration's second product.
#[allow(clippy::too_many_arguments)]
pub fn lgm_accept_prob(
    target: &LatentGaussianTarget,
    eigen: &PriorEigen,
    x: &DVector<f64>,
    cache_x: &LgmStepCache,
    proposal: &LgmProposal,
    gamma: f64,
    counter: &mut ProductCounter,
) -> Result<(f64, LgmStepCache)> {
    let cy = evaluate_at(
        target,
        eigen,
        &proposal.y,
        proposal.y_tilde.clone(),
        counter,
    )?;
    let r = lgm_log_ratio(LgmKind::GiMala, x, &proposal.y, cache_x, &cy, eigen, gamma);
    Ok((accept_prob(r), cy))
}

/// The O(d²) kernel for `exp{g(x)} N(x | 0, Σ₀)` with `A_x = (Σ₀⁻¹ + δ_x I)⁻¹`.
pub struct LgmKernel<'a> {
    target: &'a LatentGaussianTarget,
    eigen: &'a PriorEigen,
    kind: LgmKind,
    gamma: f64,
    x: DVector<f64>,
    cache: LgmStepCache,
    counter: ProductCounter,
}

impl<'a> LgmKernel<'a> {
    pub fn new(
        target: &'a LatentGaussianTarget,
        eigen: &'a PriorEigen,
        kind: LgmKind,
        gamma: f64,
        x0: DVector<f64>,
    ) -> Result<Self> {
        match kind {
            LgmKind::GiMala => check_gamma(gamma)?,
            LgmKind::Mala if !(gamma > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "step size {gamma} must be positive"
                )))
            }
            LgmKind::Mala => {}
        }
        let mut counter = ProductCounter::default();
        let cache = lgm_cache(target, eigen, &x0, &mut counter)?;
        if !cache.is_finite() {
            return Err(Error::NonFiniteState { iteration: 0 });
        }
        Ok(Self {
            target,
            eigen,
            kind,
            gamma,
            x: x0,
            cache,
            counter,
        })
    }

    pub fn counter(&self) -> ProductCounter {
        self.counter
    }

    pub fn cache(&self) -> &LgmStepCache {
        &self.cache
    }

    pub fn step_with_noise(&mut self, eps: &DVector<f64>, u: f64) -> Result<TransitionRecord> {
        let s = self.kind.scale(self.gamma);
        let p = propose_scaled(
            &self.x,
            &self.cache,
            self.eigen,
            self.gamma,
            s,
            eps,
            &mut self.counter,
        );
        let cy = evaluate_at(
            self.target,
            self.eigen,
            &p.y,
            p.y_tilde.clone(),
            &mut self.counter,
        )?;
        let alpha = accept_prob(lgm_log_ratio(
            self.kind,
            &self.x,
            &p.y,
            &self.cache,
            &cy,
            self.eigen,
            self.gamma,
        ));
        let accepted = u < alpha;
        let rec = TransitionRecord {
            x: self.x.clone(),
            y: p.y,
            proposal_mean: p.mean,
            alpha,
            accepted,
        };
        if accepted {
            self.x = rec.y.clone();
            self.cache = cy;
        }
        Ok(rec)
    }
}

impl MhKernel for LgmKernel<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn label(&self) -> String {
        self.kind.proposal_kind().name().to_string()
    }

    fn gaussian_invariant(&self) -> bool {
        self.kind == LgmKind::GiMala
    }

    fn default_target_rate(&self) -> f64 {
        self.kind.proposal_kind().default_target_rate()
    }

    fn step_size(&self) -> f64 {
        self.gamma
    }

    fn set_step_size(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    fn current(&self) -> &DVector<f64> {
        &self.x
    }

    fn step(&mut self, rng: &mut ChainRng) -> Result<TransitionRecord> {
        let eps = standard_normal_vector(self.x.len(), rng);
        let u: f64 = rng.gen();
        self.step_with_noise(&eps, u)
    }
}

/// The latent Gaussian target seen through the generic interface, with the curvature hook
/// `A_x = U diag(λᵢ/(1+δ_xλᵢ)) Uᵀ`. Used as the dense reference for the fast path.
pub struct LgmDenseView<'a> {
    pub target: &'a LatentGaussianTarget,
    pub eigen: &'a PriorEigen,
}

impl LgmDenseView<'_> {
    pub fn preconditioner_at(&self, x: &DVector<f64>) -> Result<Preconditioner> {
        let delta = compute_delta(&self.target.curvature_diag(x))?;
        Preconditioner::from_eigen(self.eigen.vectors().clone(), resolvent(self.eigen, delta))
    }
}

impl TargetModel for LgmDenseView<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.target.log_density(x)
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        self.target.grad_log_density(x)
    }

    fn curvature(&self, x: &DVector<f64>) -> Option<Preconditioner> {
        self.preconditioner_at(x).ok()
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Option<f64> {
        self.target.log_likelihood(x)
    }
}
