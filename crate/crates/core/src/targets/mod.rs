//! Target distributions.
//!
//! A [`TargetModel`] exposes an unnormalised log-density, its gradient and, optionally, a
//! position-dependent preconditioner `A_x` that equals the target covariance whenever the
//! target is Gaussian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Preconditioner;

mod dataset;
mod kernels;
mod latent;
mod logistic;
mod mixture;
mod student;

pub use dataset::{bundled_dataset, load_csv, Dataset, BUNDLED_DATASETS};
pub use kernels::{exponential_grid_kernel, squared_exponential_kernel, KERNEL_JITTER};
pub use latent::{
    make_latent_gaussian_target, LatentGaussianTarget, LikelihoodKind, LikelihoodTerm,
};
pub use logistic::{make_logistic_regression_target, LogisticRegressionTarget, NewtonFit};
pub use mixture::{mixture_preconditioner, GaussianMixtureTarget};
pub use student::{student_t_preconditioner, StudentTTarget};

pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Log-density up to an additive constant.
    fn log_density(&self, x: &DVector<f64>) -> f64;

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64>;

    fn log_density_and_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.log_density(x), self.grad_log_density(x))
    }

    /// Position-dependent SPD preconditioner `A_x`, if the target defines one.
    fn curvature(&self, _x: &DVector<f64>) -> Option<Preconditioner> {
        None
    }

    /// `g(x)` when the target factorises as `exp{g(x)} N(x | 0, Σ₀)`.
    fn log_likelihood(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    covariance: Preconditioner,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        let covariance = Preconditioner::from_matrix(covariance)?;
        Ok(Self { mean, covariance })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            covariance: Preconditioner::identity(d),
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Preconditioner {
        &self.covariance
    }
}

impl TargetModel for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        -0.5 * self.covariance.inv_quad(&(x - &self.mean))
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        self.covariance.solve(&(&self.mean - x))
    }

    fn curvature(&self, _x: &DVector<f64>) -> Option<Preconditioner> {
        Some(self.covariance.clone())
    }
}

/// Largest relative discrepancy between the analytic gradient and central differences with
/// step `1e-5·(1+|xᵢ|)`, measured against `max(1, |∂ᵢ|)`.
pub fn gradient_check(target: &dyn TargetModel, x: &DVector<f64>) -> f64 {
    let g = target.grad_log_density(x);
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let h = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (target.log_density(&xp) - target.log_density(&xm)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
    }
    worst
}
