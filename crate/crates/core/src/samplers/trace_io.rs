//! CSV persistence of chain traces with a JSON sidecar.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ChainTrace, TransitionRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub label: String,
    pub seed: u64,
    pub dim: usize,
    pub n_burnin: usize,
    pub n_samples: usize,
    pub step_size: f64,
    pub acceptance_rate: f64,
    pub burnin_acceptance: Option<f64>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes one row per transition (`iter, accepted, alpha, x…, y…, m…`) and the sidecar.
pub fn write_trace(trace: &ChainTrace, path: &Path) -> Result<()> {
    let d = trace.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iter".to_string(), "accepted".into(), "alpha".into()];
    for p in ["x", "y", "m"] {
        header.extend((0..d).map(|j| format!("{p}{j}")));
    }
    w.write_record(&header)?;
    for (i, r) in trace.records.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            (r.accepted as u8).to_string(),
            format!("{:e}", r.alpha),
        ];
        for v in [&r.x, &r.y, &r.proposal_mean] {
            row.extend(v.iter().map(|x| format!("{x:e}")));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = TraceMeta {
        label: trace.label.clone(),
        seed: trace.seed,
        dim: d,
        n_burnin: trace.n_burnin,
        n_samples: trace.len(),
        step_size: trace.step_size,
        acceptance_rate: trace.acceptance_rate(),
        burnin_acceptance: trace
            .burnin_acceptance
            .is_finite()
            .then_some(trace.burnin_acceptance),
    };
    std::fs::write(sidecar(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]; timing fields are not persisted and read back as zero.
pub fn read_trace(path: &Path) -> Result<ChainTrace> {
    let meta: TraceMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
    let d = meta.dim;
    let mut rdr = csv::Reader::from_path(path)?;
    let mut records = Vec::with_capacity(meta.n_samples);
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 + 3 * d {
            return Err(Error::Dataset(format!(
                "trace row has {} fields, expected {}",
                rec.len(),
                3 + 3 * d
            )));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::Dataset(format!("bad number '{}'", &rec[i])))
        };
        let vec = |off: usize| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(
                (0..d).map(|j| num(off + j)).collect::<Result<Vec<_>>>()?,
            ))
        };
        records.push(TransitionRecord {
            accepted: num(1)? != 0.0,
            alpha: num(2)?,
            x: vec(3)?,
            y: vec(3 + d)?,
            proposal_mean: vec(3 + 2 * d)?,
        });
    }
    Ok(ChainTrace {
        label: meta.label,
        records,
        n_burnin: meta.n_burnin,
        seed: meta.seed,
        step_size: meta.step_size,
        burnin_acceptance: meta.burnin_acceptance.unwrap_or(f64::NAN),
        sampling_seconds: 0.0,
        burnin_seconds: 0.0,
    })
}
