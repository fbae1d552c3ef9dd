use nalgebra::{DMatrix, DVector};

use super::TargetModel;
use crate::error::{Error, Result};
use crate::special::{sigmoid, softplus};

/// Bayesian logistic regression with a flat prior on the coefficients.
#[derive(Debug, Clone)]
pub struct LogisticRegressionTarget {
    design: DMatrix<f64>,
    labels: DVector<f64>,
}

/// Maximum-likelihood estimate and the inverse observed information at it.
#[derive(Debug, Clone)]
pub struct NewtonFit {
    pub theta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
}

/// Builds the logistic-regression posterior; `design` must contain a column of ones.
pub fn make_logistic_regression_target(
    design: DMatrix<f64>,
    labels: DVector<f64>,
) -> Result<LogisticRegressionTarget> {
    if design.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    let has_intercept = design.column_iter().any(|c| c.iter().all(|&v| v == 1.0));
    if !has_intercept {
        return Err(Error::InvalidParameter(
            "design matrix has no intercept column".into(),
        ));
    }
    Ok(LogisticRegressionTarget { design, labels })
}

impl LogisticRegressionTarget {
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    /// `Zᵀ W Z` with `W = diag(σ(η)(1−σ(η)))`.
    pub fn fisher_information(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.design * theta;
        let w = eta.map(|e| {
            let p = sigmoid(e);
            p * (1.0 - p)
        });
        let mut zw = self.design.clone();
        for (mut row, wi) in zw.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        self.design.tr_mul(&zw)
    }

    /// Newton-Raphson from zero until `‖∇‖∞ < tol`.
    pub fn fit_mle(&self, tol: f64, max_iter: usize) -> Result<NewtonFit> {
        let mut theta = DVector::zeros(self.design.ncols());
        for it in 0..max_iter {
            let g = self.grad_log_density(&theta);
            if g.amax() < tol {
                let covariance =
                    self.fisher_information(&theta)
                        .try_inverse()
                        .ok_or_else(|| {
                            Error::Numerical("singular Fisher information at the MLE".into())
                        })?;
                return Ok(NewtonFit {
                    theta,
                    covariance,
                    iterations: it,
                });
            }
            let h = self.fisher_information(&theta);
            let step = h
                .cholesky()
                .ok_or_else(|| {
                    Error::Numerical("Fisher information is not positive definite".into())
                })?
                .solve(&g);
            theta += step;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(
                    "Newton iterations diverged (separable data?)".into(),
                ));
            }
        }
        Err(Error::Numerical(format!(
            "Newton iterations did not converge in {max_iter} steps"
        )))
    }
}

impl TargetModel for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let eta = &self.design * theta;
        eta.iter()
            .zip(self.labels.iter())
            .map(|(e, y)| y * e - softplus(*e))
            .sum()
    }

    fn grad_log_density(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.design * theta;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter()
                .zip(self.labels.iter())
                .map(|(e, y)| y - sigmoid(*e)),
        );
        self.design.tr_mul(&resid)
    }

    fn log_density_and_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let eta = &self.design * theta;
        let mut lp = 0.0;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.labels.iter()).map(|(e, y)| {
                lp += y * e - softplus(*e);
                y - sigmoid(*e)
            }),
        );
        (lp, self.design.tr_mul(&resid))
    }
}
