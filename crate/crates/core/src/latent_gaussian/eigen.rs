use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::rng::standard_normal_vector;

const MAGIC: &[u8; 8] = b"GIEIG001";

/// `Σ₀ = U diag(λ) Uᵀ` with eigenvalues clamped at zero.
#[derive(Debug, Clone)]
pub struct PriorEigen {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl PriorEigen {
    /// Symmetric eigendecomposition of `(Σ₀ + Σ₀ᵀ)/2`.
    pub fn new(sigma0: &DMatrix<f64>) -> Result<Self> {
        let n = sigma0.nrows();
        if n != sigma0.ncols() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sigma0.ncols(),
            });
        }
        if sigma0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "prior covariance has non-finite entries".into(),
            ));
        }
        let m = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (sigma0[(i, j)] + sigma0[(j, i)]));
        let evd = m.selfadjoint_eigendecomposition(faer::Side::Lower);
        let u = evd.u();
        let s = evd.s().column_vector();
        let vectors = DMatrix::from_fn(n, n, |i, j| u.read(i, j));
        let values = DVector::from_fn(n, |i, _| s.read(i).max(0.0));
        Ok(Self { vectors, values })
    }

    pub fn from_parts(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if vectors.nrows() != vectors.ncols() || vectors.nrows() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.nrows(),
                got: values.len(),
            });
        }
        Ok(Self {
            vectors,
            values: values.map(|v| v.max(0.0)),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `‖UᵀU − I‖_max`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.vectors.tr_mul(&self.vectors) - DMatrix::identity(n, n)))
    }

    /// `‖UΛUᵀ − Σ₀‖_max / ‖Σ₀‖_max`.
    pub fn reconstruction_error(&self, sigma0: &DMatrix<f64>) -> f64 {
        max_abs(&(self.reconstruct() - sigma0)) / max_abs(sigma0).max(f64::MIN_POSITIVE)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        crate::linalg::scale_columns(&self.vectors, self.values.iter().copied())
            * self.vectors.transpose()
    }

    /// One draw from `N(0, Σ₀)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let eps = standard_normal_vector(self.dim(), rng);
        &self.vectors * eps.zip_map(&self.values, |e, l| e * l.sqrt())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let n = self.dim();
        let mut buf = Vec::with_capacity(16 + 8 * n * (n + 1));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.values.iter().chain(self.vectors.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(Error::Dataset(format!(
                "{} is not an eigendecomposition cache",
                path.display()
            )));
        }
        let n = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
        if buf.len() != 16 + 8 * n * (n + 1) {
            return Err(Error::Dataset(format!("{} is truncated", path.display())));
        }
        let mut it = buf[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let values = DVector::from_iterator(n, it.by_ref().take(n));
        let vectors = DMatrix::from_iterator(n, n, it);
        Ok(Self { vectors, values })
    }

    /// Loads `dir/<hash(key)>.eig` if present, otherwise decomposes `build()` and stores it.
    pub fn cached<F>(dir: &Path, key: &str, build: F) -> Result<Self>
    where
        F: FnOnce() -> Result<DMatrix<f64>>,
    {
        let path = dir.join(format!("{}.eig", cache_key(key)));
        if path.exists() {
            if let Ok(e) = Self::read_from(&path) {
                return Ok(e);
            }
        }
        let eig = Self::new(&build()?)?;
        std::fs::create_dir_all(dir)?;
        eig.write_to(&path)?;
        Ok(eig)
    }
}

/// Hex SHA-256 of a hyperparameter description.
pub fn cache_key(description: &str) -> String {
    hex::encode(Sha256::digest(description.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_spd;
    use crate::rng::chain_rng;
    use crate::targets::exponential_grid_kernel;

    #[test]
    fn decomposition_invariants() {
        let s = random_spd(30, &mut chain_rng(1));
        let e = PriorEigen::new(&s).unwrap();
        assert!(e.orthogonality_error() < 1e-8);
        assert!(e.reconstruction_error(&s) < 1e-6);
        assert!(e.values().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn rank_deficient_prior_is_clamped() {
        let u = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let s = &u * u.transpose();
        let e = PriorEigen::new(&s).unwrap();
        assert!(e.values().iter().all(|&l| l >= 0.0));
        assert!(e.reconstruction_error(&s) < 1e-6);
    }

    #[test]
    fn grid_kernel_decomposes() {
        let k = exponential_grid_kernel(8, 1.91, 1.0 / 33.0).unwrap();
        let e = PriorEigen::new(&k).unwrap();
        assert!(e.orthogonality_error() < 1e-8);
        assert!(e.reconstruction_error(&k) < 1e-6);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = random_spd(7, &mut chain_rng(2));
        let a = PriorEigen::cached(dir.path(), "spd-7-seed-2", || Ok(s.clone())).unwrap();
        let b =
            PriorEigen::cached(dir.path(), "spd-7-seed-2", || panic!("should be cached")).unwrap();
        assert_eq!(a.vectors(), b.vectors());
        assert_eq!(a.values(), b.values());
        assert_ne!(cache_key("a"), cache_key("b"));
        assert_eq!(cache_key("a").len(), 64);
    }
}
