//! Tabular binary-classification datasets.
//!
//! Files are CSV with one observation per row, covariates first and the label in the last
//! column.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Names accepted by [`bundled_dataset`].
pub const BUNDLED_DATASETS: &[&str] = &["heart", "australian"];

const HEART_CSV: &str = include_str!("../../../../data/heart.csv");
const AUSTRALIAN_CSV: &str = include_str!("../../../../data/australian.csv");

#[derive(Debug, Clone)]
pub struct Dataset {
    pub names: Vec<String>,
    pub covariates: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl Dataset {
    pub fn n_obs(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    /// Covariates shifted to zero mean and scaled to unit (population) variance.
    pub fn standardized_covariates(&self) -> DMatrix<f64> {
        let mut z = self.covariates.clone();
        let n = z.nrows() as f64;
        for mut col in z.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        z
    }

    /// Intercept column followed by the standardised covariates.
    pub fn standardized_design(&self) -> DMatrix<f64> {
        let z = self.standardized_covariates();
        let mut out = DMatrix::from_element(z.nrows(), z.ncols() + 1, 1.0);
        out.columns_mut(1, z.ncols()).copy_from(&z);
        out
    }

    /// Rows of the standardised covariates, as inputs for a kernel.
    pub fn standardized_inputs(&self) -> Vec<DVector<f64>> {
        let z = self.standardized_covariates();
        z.row_iter().map(|r| r.transpose()).collect()
    }

    /// Checks labels are binary and every column is non-constant.
    pub fn validate(&self) -> Result<()> {
        if self.labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Dataset("labels must be 0 or 1".into()));
        }
        for (j, col) in self.covariates.column_iter().enumerate() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::Dataset(format!("covariate column {j} is constant")));
            }
        }
        Ok(())
    }
}

pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_csv(file, has_header)
}

pub fn bundled_dataset(name: &str) -> Result<Dataset> {
    let text = match name {
        "heart" => HEART_CSV,
        "australian" => AUSTRALIAN_CSV,
        other => return Err(Error::Dataset(format!("unknown bundled dataset '{other}'"))),
    };
    parse_csv(text.as_bytes(), true)
}

fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut names: Vec<String> = if has_header {
        rdr.headers()?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Dataset(format!("row {}: cannot parse '{s}'", line + 1)))
            })
            .collect::<Result<_>>()?;
        if row.len() < 2 {
            return Err(Error::Dataset(format!(
                "row {} has fewer than two columns",
                line + 1
            )));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Dataset(format!(
                    "row {} has {} columns, expected {w}",
                    line + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        labels.push(*row.last().expect("non-empty"));
        values.extend_from_slice(&row[..row.len() - 1]);
    }
    let w = width.ok_or_else(|| Error::Dataset("no data rows".into()))? - 1;
    if names.len() != w + 1 {
        names = (0..w)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
    }
    let covariates = DMatrix::from_row_slice(labels.len(), w, &values);
    Ok(Dataset {
        names,
        covariates,
        labels: DVector::from_vec(labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_datasets_parse_and_validate() {
        let h = bundled_dataset("heart").unwrap();
        assert_eq!((h.n_obs(), h.n_covariates()), (270, 13));
        h.validate().unwrap();
        let a = bundled_dataset("australian").unwrap();
        assert_eq!((a.n_obs(), a.n_covariates()), (690, 14));
        a.validate().unwrap();
        assert!(bundled_dataset("nope").is_err());
    }

    #[test]
    fn standardisation_moments() {
        let h = bundled_dataset("heart").unwrap();
        let z = h.standardized_covariates();
        for col in z.column_iter() {
            let n = col.len() as f64;
            assert!((col.sum() / n).abs() < 1e-12);
            assert!((col.norm_squared() / n - 1.0).abs() < 1e-12);
        }
        let d = h.standardized_design();
        assert!(d.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn headerless_and_ragged_input() {
        let ok = parse_csv("1,2,0\n3,4,1\n".as_bytes(), false).unwrap();
        assert_eq!(ok.covariates[(1, 1)], 4.0);
        assert_eq!(ok.labels[1], 1.0);
        assert!(parse_csv("1,2,0\n3,1\n".as_bytes(), false).is_err());
        assert!(parse_csv("a,b\n1,x\n".as_bytes(), true).is_err());
    }
}
