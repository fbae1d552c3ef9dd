use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative diagonal jitter added to every kernel matrix.
pub const KERNEL_JITTER: f64 = 1e-8;

/// `K_ij = σ² exp(−‖zᵢ − zⱼ‖² / (2ℓ²))` plus `1e-8·σ²` on the diagonal.
pub fn squared_exponential_kernel(
    inputs: &[DVector<f64>],
    variance: f64,
    lengthscale: f64,
) -> Result<DMatrix<f64>> {
    if !(variance > 0.0) || !(lengthscale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel hyperparameters must be positive (variance {variance}, lengthscale {lengthscale})"
        )));
    }
    let n = inputs.len();
    let inv = 0.5 / (lengthscale * lengthscale);
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = variance * (1.0 + KERNEL_JITTER);
        for j in 0..i {
            let v = variance * (-(&inputs[i] - &inputs[j]).norm_squared() * inv).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Exponential covariance over a `grid_size × grid_size` lattice, cells in row-major order:
/// `σ² exp(−dist / (grid_size·β))` plus jitter.
pub fn exponential_grid_kernel(grid_size: usize, variance: f64, beta: f64) -> Result<DMatrix<f64>> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    if !(variance > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(
            "kernel hyperparameters must be positive".into(),
        ));
    }
    let d = grid_size * grid_size;
    let scale = 1.0 / (grid_size as f64 * beta);
    // Distances only depend on the lattice offset.
    let mut table = vec![0.0; d];
    for di in 0..grid_size {
        for dj in 0..grid_size {
            let r = ((di * di + dj * dj) as f64).sqrt();
            table[di * grid_size + dj] = variance * (-r * scale).exp();
        }
    }
    let mut k = DMatrix::zeros(d, d);
    for a in 0..d {
        let (ia, ja) = (a / grid_size, a % grid_size);
        for b in 0..d {
            let (ib, jb) = (b / grid_size, b % grid_size);
            k[(a, b)] = table[ia.abs_diff(ib) * grid_size + ja.abs_diff(jb)];
        }
        k[(a, a)] += variance * KERNEL_JITTER;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_exponential_entries() {
        let z: Vec<_> = (0..3).map(|i| DVector::from_element(1, i as f64)).collect();
        let k = squared_exponential_kernel(&z, 1.0, 1.0).unwrap();
        assert!((k[(0, 0)] - (1.0 + 1e-8)).abs() < 1e-15);
        assert!((k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k[(0, 2)] - (-2.0f64).exp()).abs() < 1e-15);
        let far = vec![DVector::from_element(1, 0.0), DVector::from_element(1, 1e3)];
        assert!(squared_exponential_kernel(&far, 2.0, 1.0).unwrap()[(0, 1)] < 1e-300);
        assert!(squared_exponential_kernel(&z, 0.0, 1.0).is_err());
        assert!(squared_exponential_kernel(&z, 1.0, -1.0).is_err());
    }

    #[test]
    fn grid_kernel_entries() {
        let k = exponential_grid_kernel(64, 1.91, 1.0 / 33.0).unwrap();
        assert_eq!(k.nrows(), 4096);
        assert!((k[(0, 0)] - 1.91 * (1.0 + 1e-8)).abs() < 1e-14);
        assert!((k[(0, 1)] - 1.91 * (-33.0f64 / 64.0).exp()).abs() < 1e-14);
        assert!((k[(0, 64)] - k[(0, 1)]).abs() < 1e-15);
        assert!((k[(0, 65)] - 1.91 * (-33.0 * 2f64.sqrt() / 64.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn small_grid_is_spd() {
        let k = exponential_grid_kernel(8, 1.91, 1.0 / 33.0).unwrap();
        assert_eq!(k.nrows(), 64);
        let eig = k.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
        assert!((&k - k.transpose()).amax() == 0.0);
        assert!(exponential_grid_kernel(1, 1.0, 1.0).is_err());
    }
}
