//! Simulated log-Gaussian Cox process on a square lattice.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::PriorEigen;
use crate::error::{Error, Result};
use crate::rng::chain_rng;
use crate::targets::{exponential_grid_kernel, LikelihoodTerm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxConfig {
    pub grid_size: usize,
    pub variance: f64,
    pub beta: f64,
    /// Constant mean `v`; `log(126) − σ²/2` when absent.
    pub offset: Option<f64>,
}

impl CoxConfig {
    /// `σ² = 1.91`, `β = 1/33` on a `grid_size × grid_size` lattice.
    pub fn standard(grid_size: usize) -> Self {
        Self {
            grid_size,
            variance: 1.91,
            beta: 1.0 / 33.0,
            offset: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid_size * self.grid_size
    }

    /// Cell area `m` of the unit square divided into `grid_size²` cells.
    pub fn cell_area(&self) -> f64 {
        1.0 / self.dim() as f64
    }

    pub fn offset(&self) -> f64 {
        self.offset
            .unwrap_or_else(|| 126f64.ln() - 0.5 * self.variance)
    }

    pub fn prior(&self) -> Result<DMatrix<f64>> {
        exponential_grid_kernel(self.grid_size, self.variance, self.beta)
    }

    /// Text identifying the prior, used as the eigendecomposition cache key.
    pub fn prior_description(&self) -> String {
        format!(
            "exponential-grid;n={};var={:e};beta={:e}",
            self.grid_size, self.variance, self.beta
        )
    }
}

#[derive(Debug, Clone)]
pub struct CoxDataset {
    pub config: CoxConfig,
    pub counts: DVector<f64>,
    pub latent: DVector<f64>,
}

impl CoxDataset {
    pub fn likelihood(&self) -> LikelihoodTerm {
        LikelihoodTerm::PoissonCox {
            counts: self.counts.clone(),
            cell_area: self.config.cell_area(),
            offset: self.config.offset(),
        }
    }

    /// Writes `cell,row,col,count,latent`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell", "row", "col", "count", "latent"])?;
        let g = self.config.grid_size;
        for c in 0..self.counts.len() {
            w.write_record(&[
                c.to_string(),
                (c / g).to_string(),
                (c % g).to_string(),
                format!("{}", self.counts[c]),
                format!("{:e}", self.latent[c]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, config: CoxConfig) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut counts = Vec::new();
        let mut latent = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Dataset("bad Cox row".into()))
            };
            counts.push(parse(3)?);
            latent.push(parse(4)?);
        }
        if counts.len() != config.dim() {
            return Err(Error::DimensionMismatch {
                expected: config.dim(),
                got: counts.len(),
            });
        }
        Ok(Self {
            config,
            counts: DVector::from_vec(counts),
            latent: DVector::from_vec(latent),
        })
    }
}

/// Draws `x ~ N(0, Σ₀)` and `y_ij ~ Poisson(m·exp(x_ij + v))`.
pub fn simulate_cox(config: CoxConfig, eigen: &PriorEigen, seed: u64) -> Result<CoxDataset> {
    if config.grid_size < 2 {
        return Err(Error::InvalidParameter(
            "grid size must be at least 2".into(),
        ));
    }
    if eigen.dim() != config.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.dim(),
            got: eigen.dim(),
        });
    }
    let mut rng = chain_rng(seed);
    let latent = eigen.sample(&mut rng);
    let m = config.cell_area();
    let v = config.offset();
    let counts = latent
        .iter()
        .map(|x| {
            let rate = m * (x + v).exp();
            Poisson::new(rate)
                .map(|p| p.sample(&mut rng))
                .map_err(|_| Error::Numerical(format!("invalid Poisson rate {rate}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CoxDataset {
        config,
        counts: DVector::from_vec(counts),
        latent,
    })
}
