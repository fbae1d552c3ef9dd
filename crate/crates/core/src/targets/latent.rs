use nalgebra::{DMatrix, DVector};

use super::TargetModel;
use crate::error::{Error, Result};
use crate::linalg::Preconditioner;
use crate::special::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodKind {
    BinaryLogistic,
    PoissonCox,
    GaussianRegression,
}

/// Coordinatewise log-likelihood `g(x) = Σᵢ gᵢ(xᵢ)`.
#[derive(Debug, Clone)]
pub enum LikelihoodTerm {
    /// `yᵢ log σ(xᵢ) + (1−yᵢ) log(1−σ(xᵢ))`.
    BinaryLogistic { labels: DVector<f64> },
    /// `yᵢ(xᵢ+v) − m·exp(xᵢ+v)`.
    PoissonCox {
        counts: DVector<f64>,
        cell_area: f64,
        offset: f64,
    },
    /// `−(yᵢ−xᵢ)²/(2σ²)`.
    GaussianRegression {
        observations: DVector<f64>,
        noise_var: f64,
    },
}

impl LikelihoodTerm {
    pub fn kind(&self) -> LikelihoodKind {
        match self {
            Self::BinaryLogistic { .. } => LikelihoodKind::BinaryLogistic,
            Self::PoissonCox { .. } => LikelihoodKind::PoissonCox,
            Self::GaussianRegression { .. } => LikelihoodKind::GaussianRegression,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::BinaryLogistic { labels } => labels.len(),
            Self::PoissonCox { counts, .. } => counts.len(),
            Self::GaussianRegression { observations, .. } => observations.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::BinaryLogistic { labels } => {
                if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
                    return Err(Error::InvalidParameter(
                        "logistic labels must be 0 or 1".into(),
                    ));
                }
            }
            Self::PoissonCox {
                counts,
                cell_area,
                offset,
            } => {
                if counts.iter().any(|&y| y < 0.0 || y.fract() != 0.0)
                    || !(*cell_area > 0.0)
                    || !offset.is_finite()
                {
                    return Err(Error::InvalidParameter(
                        "Poisson counts must be non-negative integers and the cell area positive"
                            .into(),
                    ));
                }
            }
            Self::GaussianRegression {
                observations,
                noise_var,
            } => {
                if !(*noise_var > 0.0) || observations.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "noise variance must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::BinaryLogistic { labels } => x
                .iter()
                .zip(labels.iter())
                .map(|(x, y)| y * x - softplus(*x))
                .sum(),
            Self::PoissonCox {
                counts,
                cell_area,
                offset,
            } => x
                .iter()
                .zip(counts.iter())
                .map(|(x, y)| y * (x + offset) - cell_area * (x + offset).exp())
                .sum(),
            Self::GaussianRegression {
                observations,
                noise_var,
            } => -0.5 * (observations - x).norm_squared() / noise_var,
        }
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::BinaryLogistic { labels } => labels.zip_map(x, |y, x| y - sigmoid(x)),
            Self::PoissonCox {
                counts,
                cell_area,
                offset,
            } => counts.zip_map(x, |y, x| y - cell_area * (x + offset).exp()),
            Self::GaussianRegression {
                observations,
                noise_var,
            } => (observations - x) / *noise_var,
        }
    }

    /// Diagonal of `−∇²g(x)`.
    pub fn curvature_diag(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::BinaryLogistic { .. } => x.map(|x| {
                let p = sigmoid(x);
                p * (1.0 - p)
            }),
            Self::PoissonCox {
                cell_area, offset, ..
            } => x.map(|x| cell_area * (x + offset).exp()),
            Self::GaussianRegression { noise_var, .. } => {
                DVector::from_element(x.len(), 1.0 / noise_var)
            }
        }
    }

    /// Position-independent part of `−∇²g`, absorbed into the prior.
    pub fn constant_curvature(&self) -> f64 {
        match self {
            Self::GaussianRegression { noise_var, .. } => 1.0 / noise_var,
            _ => 0.0,
        }
    }
}

/// `π(x) ∝ exp{g̃(x)} N(x | 0, Σ₀)` where any constant likelihood curvature `C` has been moved
/// into `Σ₀ ← (Σ₀⁻¹ + C I)⁻¹` and `g̃(x) = g(x) + ½C‖x‖²`.
#[derive(Debug, Clone)]
pub struct LatentGaussianTarget {
    prior: Preconditioner,
    likelihood: LikelihoodTerm,
    absorbed: f64,
}

pub fn make_latent_gaussian_target(
    prior: DMatrix<f64>,
    likelihood: LikelihoodTerm,
) -> Result<LatentGaussianTarget> {
    if prior.nrows() != likelihood.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.nrows(),
            got: likelihood.dim(),
        });
    }
    likelihood.validate()?;
    let c = likelihood.constant_curvature();
    let effective = if c > 0.0 {
        // (Σ₀⁻¹ + cI)⁻¹ = (I + cΣ₀)⁻¹ Σ₀ avoids inverting Σ₀.
        let d = prior.nrows();
        let m = DMatrix::identity(d, d) + &prior * c;
        let mut s = m
            .lu()
            .solve(&prior)
            .ok_or_else(|| Error::NotPositiveDefinite("I + CΣ₀ is singular".into()))?;
        crate::linalg::symmetrize(&mut s);
        s
    } else {
        prior
    };
    let prior = Preconditioner::from_matrix(effective)?;
    Ok(LatentGaussianTarget {
        prior,
        likelihood,
        absorbed: c,
    })
}

impl LatentGaussianTarget {
    /// The (possibly curvature-absorbed) prior covariance.
    pub fn prior_covariance(&self) -> &DMatrix<f64> {
        self.prior.matrix()
    }

    pub fn prior(&self) -> &Preconditioner {
        &self.prior
    }

    pub fn likelihood(&self) -> &LikelihoodTerm {
        &self.likelihood
    }

    pub fn absorbed_curvature(&self) -> f64 {
        self.absorbed
    }

    /// Residual log-likelihood `g̃`.
    pub fn g(&self, x: &DVector<f64>) -> f64 {
        let v = self.likelihood.value(x);
        if self.absorbed > 0.0 {
            v + 0.5 * self.absorbed * x.norm_squared()
        } else {
            v
        }
    }

    pub fn grad_g(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = self.likelihood.grad(x);
        if self.absorbed > 0.0 {
            g + x * self.absorbed
        } else {
            g
        }
    }

    /// Diagonal of `−∇²g̃`.
    pub fn curvature_diag(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.likelihood.curvature_diag(x);
        if self.absorbed > 0.0 {
            c.map(|v| v - self.absorbed)
        } else {
            c
        }
    }

    /// Posterior mean for the conjugate Gaussian-regression case.
    pub fn conjugate_posterior_mean(&self) -> Option<DVector<f64>> {
        match &self.likelihood {
            LikelihoodTerm::GaussianRegression {
                observations,
                noise_var,
            } => Some(self.prior.mul(observations) / *noise_var),
            _ => None,
        }
    }
}

impl TargetModel for LatentGaussianTarget {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.g(x) - 0.5 * self.prior.inv_quad(x)
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        self.grad_g(x) - self.prior.solve(x)
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.g(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_spd;
    use crate::rng::{chain_rng, standard_normal_vector};
    use crate::targets::gradient_check;

    #[test]
    fn logistic_curvature_at_zero() {
        let lik = LikelihoodTerm::BinaryLogistic {
            labels: DVector::from_vec(vec![0.0, 1.0, 1.0]),
        };
        let c = lik.curvature_diag(&DVector::zeros(3));
        assert!(c.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let big = lik.curvature_diag(&DVector::from_vec(vec![-40.0, 3.0, 40.0]));
        assert!(big.iter().all(|&v| (0.0..=0.25).contains(&v)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = chain_rng(21);
        let d = 5;
        let prior = random_spd(d, &mut rng);
        let liks = vec![
            LikelihoodTerm::BinaryLogistic {
                labels: DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0, 1.0]),
            },
            LikelihoodTerm::PoissonCox {
                counts: DVector::from_vec(vec![0.0, 2.0, 1.0, 5.0, 0.0]),
                cell_area: 0.1,
                offset: 1.0,
            },
            LikelihoodTerm::GaussianRegression {
                observations: standard_normal_vector(d, &mut rng),
                noise_var: 0.7,
            },
        ];
        for lik in liks {
            let t = make_latent_gaussian_target(prior.clone(), lik).unwrap();
            for _ in 0..20 {
                let x = standard_normal_vector(d, &mut rng);
                assert!(gradient_check(&t, &x) < 1e-5);
            }
        }
    }

    #[test]
    fn gaussian_regression_curvature_is_absorbed() {
        let mut rng = chain_rng(22);
        let d = 4;
        let prior = random_spd(d, &mut rng);
        let y = standard_normal_vector(d, &mut rng);
        let t = make_latent_gaussian_target(
            prior.clone(),
            LikelihoodTerm::GaussianRegression {
                observations: y.clone(),
                noise_var: 1.0,
            },
        )
        .unwrap();
        let post_cov = (prior.clone().try_inverse().unwrap() + DMatrix::identity(d, d))
            .try_inverse()
            .unwrap();
        assert!((t.prior_covariance() - &post_cov).amax() < 1e-10);
        let mean = t.conjugate_posterior_mean().unwrap();
        assert!((mean - &post_cov * &y).amax() < 1e-10);
        let x = standard_normal_vector(d, &mut rng);
        assert!(t.curvature_diag(&x).amax() < 1e-15);
        // The posterior is exactly N(mean, post_cov): its gradient is the Gaussian score.
        let g = t.grad_log_density(&x);
        let expected =
            post_cov.clone().try_inverse().unwrap() * (t.conjugate_posterior_mean().unwrap() - &x);
        assert!((g - expected).amax() < 1e-8);
    }

    #[test]
    fn rejects_invalid_construction() {
        let lik = LikelihoodTerm::BinaryLogistic {
            labels: DVector::from_vec(vec![0.0, 1.0]),
        };
        assert!(make_latent_gaussian_target(DMatrix::identity(3, 3), lik.clone()).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(make_latent_gaussian_target(bad, lik).is_err());
    }
}
