use nalgebra::DVector;
use statrs::function::gamma::ln_gamma;

use super::TargetModel;
use crate::error::{Error, Result};

/// Univariate Student-t with `ν` degrees of freedom, centred at zero with unit scale.
#[derive(Debug, Clone, Copy)]
pub struct StudentTTarget {
    nu: f64,
    log_norm: f64,
}

impl StudentTTarget {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom must be positive, got {nu}"
            )));
        }
        let log_norm = ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (nu * std::f64::consts::PI).ln();
        Ok(Self { nu, log_norm })
    }

    pub fn degrees_of_freedom(&self) -> f64 {
        self.nu
    }

    /// Normalised density at a scalar point.
    pub fn density(&self, x: f64) -> f64 {
        (self.log_norm + self.log_kernel(x)).exp()
    }

    fn log_kernel(&self, x: f64) -> f64 {
        -0.5 * (self.nu + 1.0) * (x * x / self.nu).ln_1p()
    }
}

impl TargetModel for StudentTTarget {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.log_norm + self.log_kernel(x[0])
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = x[0];
        DVector::from_element(1, -(self.nu + 1.0) * v / (self.nu + v * v))
    }
}

/// Inverse Fisher information `E_π[−∇² log π]⁻¹ = (ν+3)/(ν+1)`.
pub fn student_t_preconditioner(nu: f64) -> f64 {
    (nu + 3.0) / (nu + 1.0)
}
