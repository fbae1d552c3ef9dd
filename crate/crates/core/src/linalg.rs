//! Dense symmetric positive-definite matrices with a cached square-root factor.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normal_vector;

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug)]
enum Factor {
    /// Lower Cholesky factor `L` with `A = L Lᵀ`.
    Cholesky(DMatrix<f64>),
    /// `A = U diag(values) Uᵀ` with strictly positive values.
    Eigen {
        vectors: DMatrix<f64>,
        values: DVector<f64>,
    },
}

#[derive(Debug)]
struct Inner {
    matrix: DMatrix<f64>,
    factor: Factor,
    log_det: f64,
}

/// An SPD matrix `A` together with a factor `F` such that `A = F Fᵀ`.
///
/// Cloning is cheap; the matrix and factor are shared.
#[derive(Debug, Clone)]
pub struct Preconditioner(Arc<Inner>);

impl Preconditioner {
    /// Factorises `matrix` by Cholesky after checking symmetry.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let sym = symmetrize_checked(matrix)?;
        let chol = nalgebra::Cholesky::new(sym.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite(
                "non-finite log-determinant".into(),
            ));
        }
        Ok(Self(Arc::new(Inner {
            matrix: sym,
            factor: Factor::Cholesky(l),
            log_det,
        })))
    }

    /// Builds `U diag(values) Uᵀ` from an orthonormal `vectors` and positive `values`.
    pub fn from_eigen(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if vectors.nrows() != vectors.ncols() || vectors.nrows() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.nrows(),
                got: values.len(),
            });
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(
                "eigenvalues must be positive and finite".into(),
            ));
        }
        let scaled = scale_columns(&vectors, values.iter().copied());
        let mut matrix = &scaled * vectors.transpose();
        symmetrize(&mut matrix);
        let log_det = values.iter().map(|v| v.ln()).sum();
        Ok(Self(Arc::new(Inner {
            matrix,
            factor: Factor::Eigen { vectors, values },
            log_det,
        })))
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0).expect("identity is SPD")
    }

    pub fn scaled_identity(d: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "scale {scale} is not positive"
            )));
        }
        Self::from_matrix(DMatrix::from_diagonal_element(d, d, scale))
    }

    pub fn dim(&self) -> usize {
        self.0.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0.matrix
    }

    pub fn log_det(&self) -> f64 {
        self.0.log_det
    }

    /// `A v`.
    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0.matrix * v
    }

    /// `F ε`, so that `F ε ~ N(0, A)` for standard normal `ε`.
    pub fn apply_factor(&self, eps: &DVector<f64>) -> DVector<f64> {
        match &self.0.factor {
            Factor::Cholesky(l) => l * eps,
            Factor::Eigen { vectors, values } => {
                let scaled = eps.zip_map(values, |e, v| e * v.sqrt());
                vectors * scaled
            }
        }
    }

    /// `A⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.0.factor {
            Factor::Cholesky(l) => {
                let mut z = v.clone();
                l.solve_lower_triangular_mut(&mut z);
                l.tr_solve_lower_triangular_mut(&mut z);
                z
            }
            Factor::Eigen { vectors, values } => {
                let t = vectors.tr_mul(v).component_div(values);
                vectors * t
            }
        }
    }

    /// `vᵀ A⁻¹ v`.
    pub fn inv_quad(&self, v: &DVector<f64>) -> f64 {
        match &self.0.factor {
            Factor::Cholesky(l) => {
                let mut z = v.clone();
                l.solve_lower_triangular_mut(&mut z);
                z.norm_squared()
            }
            Factor::Eigen { vectors, values } => {
                let t = vectors.tr_mul(v);
                t.iter().zip(values.iter()).map(|(t, l)| t * t / l).sum()
            }
        }
    }

    /// `log N(y | m, c A)` including the normalising constant.
    pub fn log_normal(&self, y: &DVector<f64>, mean: &DVector<f64>, scale: f64) -> f64 {
        let d = self.dim() as f64;
        let r = y - mean;
        -0.5 * self.inv_quad(&r) / scale
            - 0.5 * d * (2.0 * std::f64::consts::PI * scale).ln()
            - 0.5 * self.log_det()
    }

    /// One draw from `N(0, A)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.apply_factor(&standard_normal_vector(self.dim(), rng))
    }
}

/// Multiplies column `j` of `m` by `s_j`.
pub fn scale_columns(m: &DMatrix<f64>, s: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, sj) in s.enumerate() {
        out.column_mut(j).scale_mut(sj);
    }
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

/// Rejects non-square or visibly asymmetric input, then averages with the transpose.
pub fn symmetrize_checked(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(
            "matrix has non-finite entries".into(),
        ));
    }
    let scale = max_abs(&m).max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveDefinite(format!(
                    "asymmetric at ({i}, {j})"
                )));
            }
        }
    }
    symmetrize(&mut m);
    Ok(m)
}

/// A random well-conditioned SPD matrix `B Bᵀ / d + 0.5 I` with standard normal `B`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let mut m = &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5;
    symmetrize(&mut m);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chain_rng;

    #[test]
    fn cholesky_and_eigen_factors_agree() {
        let mut rng = chain_rng(3);
        let a = random_spd(5, &mut rng);
        let eig = a.clone().symmetric_eigen();
        let p1 = Preconditioner::from_matrix(a.clone()).unwrap();
        let p2 = Preconditioner::from_eigen(eig.eigenvectors, eig.eigenvalues).unwrap();
        let v = standard_normal_vector(5, &mut rng);
        assert!((p1.inv_quad(&v) - p2.inv_quad(&v)).abs() < 1e-10);
        assert!((p1.log_det() - p2.log_det()).abs() < 1e-10);
        assert!((p1.solve(&v) - p2.solve(&v)).amax() < 1e-10);
        assert!((p2.matrix() - &a).amax() < 1e-12);
        assert!((&a * p1.solve(&v) - &v).amax() < 1e-10);
    }

    #[test]
    fn factor_reproduces_matrix() {
        let mut rng = chain_rng(4);
        let a = random_spd(4, &mut rng);
        let p = Preconditioner::from_matrix(a.clone()).unwrap();
        let mut f = DMatrix::zeros(4, 4);
        for j in 0..4 {
            let mut e = DVector::zeros(4);
            e[j] = 1.0;
            f.set_column(j, &p.apply_factor(&e));
        }
        assert!((&f * f.transpose() - a).amax() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.1;
        assert!(Preconditioner::from_matrix(m).is_err());
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        assert!(Preconditioner::from_matrix(m).is_err());
    }

    #[test]
    fn log_normal_matches_univariate_formula() {
        let p = Preconditioner::scaled_identity(1, 2.0).unwrap();
        let y = DVector::from_element(1, 1.5);
        let m = DVector::from_element(1, 0.5);
        let var: f64 = 2.0 * 0.75;
        let expected = -0.5 * 1.0 / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        assert!((p.log_normal(&y, &m, 0.75) - expected).abs() < 1e-14);
    }
}
