use nalgebra::{DMatrix, DVector};

use super::TargetModel;
use crate::error::{Error, Result};
use crate::linalg::Preconditioner;
use crate::special::log_sum_exp;

/// Finite mixture of Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    log_weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<Preconditioner>,
}

impl GaussianMixtureTarget {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covariances.len()
        {
            return Err(Error::InvalidParameter(
                "weights, means and covariances must have equal non-zero length".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-10
        {
            return Err(Error::InvalidParameter(
                "weights must be positive and sum to one".into(),
            ));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: means.iter().map(|m| m.len()).max().unwrap_or(0),
            });
        }
        let covariances = covariances
            .into_iter()
            .map(|c| {
                if c.nrows() != d {
                    Err(Error::DimensionMismatch {
                        expected: d,
                        got: c.nrows(),
                    })
                } else {
                    Preconditioner::from_matrix(c)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            means,
            covariances,
        })
    }

    /// The two-component example with correlations ±0.95 centred at `±offset·(1, 1)`.
    pub fn correlated_pair(offset: f64) -> Self {
        let c1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.95, 0.95, 1.0]);
        let c2 = DMatrix::from_row_slice(2, 2, &[1.0, -0.95, -0.95, 1.0]);
        let m1 = DVector::from_vec(vec![offset, offset]);
        let m2 = -m1.clone();
        Self::new(vec![0.5, 0.5], vec![m1, m2], vec![c1, c2]).expect("valid mixture")
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    fn component_logs(&self, x: &DVector<f64>) -> Vec<f64> {
        self.log_weights
            .iter()
            .zip(&self.means)
            .zip(&self.covariances)
            .map(|((lw, m), c)| lw + c.log_normal(x, m, 1.0))
            .collect()
    }

    /// Posterior component probabilities `π(k | x)`.
    pub fn responsibilities(&self, x: &DVector<f64>) -> Vec<f64> {
        let logs = self.component_logs(x);
        let z = log_sum_exp(&logs);
        logs.iter().map(|l| (l - z).exp()).collect()
    }
}

impl TargetModel for GaussianMixtureTarget {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        log_sum_exp(&self.component_logs(x))
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.responsibilities(x);
        let mut g = DVector::zeros(x.len());
        for ((rk, m), c) in r.iter().zip(&self.means).zip(&self.covariances) {
            g += c.solve(&(m - x)) * *rk;
        }
        g
    }

    fn curvature(&self, x: &DVector<f64>) -> Option<Preconditioner> {
        mixture_preconditioner(self, x).ok()
    }
}

/// Responsibility-weighted average of the component covariances.
pub fn mixture_preconditioner(
    target: &GaussianMixtureTarget,
    x: &DVector<f64>,
) -> Result<Preconditioner> {
    let r = target.responsibilities(x);
    let d = target.dim();
    let mut a = DMatrix::zeros(d, d);
    for (rk, c) in r.iter().zip(&target.covariances) {
        a += c.matrix() * *rk;
    }
    Preconditioner::from_matrix(a)
}
