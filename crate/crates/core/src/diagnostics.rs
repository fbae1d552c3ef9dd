//! Effective sample size and the repeated-run variance-ratio protocol.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poisson_cv::EstimatorReport;
use crate::samplers::ChainTrace;

/// Ratios above this are reported as the sentinel itself.
pub const RATIO_CAP: f64 = 1e12;
/// Minimum series length accepted by [`ess`].
pub const MIN_ESS_SAMPLES: usize = 10;

/// Empirical autocorrelations `ρ̂_0..ρ̂_{n−1}` by zero-padded FFT. `None` for a constant series.
pub fn autocorrelation(series: &[f64]) -> Option<Vec<f64>> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    let scale = series.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if !(c0 > 1e-24 * n as f64 * scale * scale) || scale == 0.0 {
        return None;
    }
    Some(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// ESS of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEss {
    pub ess: f64,
    /// The series was constant; `ess` is then `n`.
    pub degenerate: bool,
}

/// Geyer's initial positive sequence estimator, capped at `n`.
pub fn ess_series(series: &[f64]) -> Result<SeriesEss> {
    let n = series.len();
    if n < MIN_ESS_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "ESS needs at least {MIN_ESS_SAMPLES} samples, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in ESS input".into()));
    }
    let Some(rho) = autocorrelation(series) else {
        return Ok(SeriesEss {
            ess: n as f64,
            degenerate: true,
        });
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho[k] + rho[k + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    let ess = if tau > 0.0 {
        (n as f64 / tau).min(n as f64)
    } else {
        n as f64
    };
    Ok(SeriesEss {
        ess,
        degenerate: false,
    })
}

/// Per-column ESS of an `n × d` sample matrix.
pub fn ess(samples: &DMatrix<f64>) -> Result<Vec<SeriesEss>> {
    (0..samples.ncols())
        .into_par_iter()
        .map(|j| ess_series(samples.column(j).as_slice()))
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// ESS summary for one sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub label: String,
    pub n: usize,
    pub per_component: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Wall-clock seconds of the sampling phase.
    pub seconds: f64,
    pub min_ess_per_second: f64,
    pub acceptance_rate: f64,
    pub step_size: f64,
}

impl EssReport {
    pub fn from_samples(label: &str, samples: &DMatrix<f64>, seconds: f64) -> Result<Self> {
        let per = ess(samples)?;
        if per.is_empty() {
            return Err(Error::InvalidParameter("no components".into()));
        }
        let values: Vec<f64> = per.iter().map(|e| e.ess).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let min = sorted[0];
        Ok(EssReport {
            label: label.to_string(),
            n: samples.nrows(),
            degenerate: per.iter().map(|e| e.degenerate).collect(),
            median: median(&sorted),
            max: sorted[sorted.len() - 1],
            min,
            per_component: values,
            seconds,
            min_ess_per_second: if seconds > 0.0 {
                min / seconds
            } else {
                f64::INFINITY
            },
            acceptance_rate: f64::NAN,
            step_size: f64::NAN,
        })
    }

    /// ESS of the post-burn-in states of a trace, timed by its sampling loop.
    pub fn from_trace(trace: &ChainTrace) -> Result<Self> {
        let mut r =
            Self::from_samples(&trace.label, &trace.sample_matrix(), trace.sampling_seconds)?;
        r.acceptance_rate = trace.acceptance_rate();
        r.step_size = trace.step_size;
        Ok(r)
    }
}

/// Fixed-width table with one row per report.
pub fn format_ess_table(reports: &[EssReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>9} {:>7} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "Method", "Time(s)", "Acc", "Step", "ESS min", "ESS med", "ESS max", "MinESS/s"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<18} {:>9.3} {:>7.3} {:>8.4} {:>10.1} {:>10.1} {:>10.1} {:>10.2}",
            r.label,
            r.seconds,
            r.acceptance_rate,
            r.step_size,
            r.min,
            r.median,
            r.max,
            r.min_ess_per_second
        );
    }
    s
}

pub fn write_ess_csv(reports: &[EssReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "seconds",
        "acceptance",
        "step_size",
        "ess_min",
        "ess_median",
        "ess_max",
        "min_ess_per_s",
    ])?;
    for r in reports {
        w.write_record([
            r.label.clone(),
            r.seconds.to_string(),
            r.acceptance_rate.to_string(),
            r.step_size.to_string(),
            r.min.to_string(),
            r.median.to_string(),
            r.max.to_string(),
            r.min_ess_per_second.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary rows of a file written by [`write_ess_csv`]; per-component values are not stored.
pub fn read_ess_csv(path: &Path) -> Result<Vec<EssReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            let v = row
                .get(i)
                .ok_or_else(|| Error::Dataset("short ESS row".into()))?;
            v.parse()
                .map_err(|_| Error::Dataset(format!("bad number {v:?} in ESS file")))
        };
        out.push(EssReport {
            label: row.get(0).unwrap_or_default().to_string(),
            n: 0,
            per_component: Vec::new(),
            degenerate: Vec::new(),
            seconds: num(1)?,
            acceptance_rate: num(2)?,
            step_size: num(3)?,
            min: num(4)?,
            median: num(5)?,
            max: num(6)?,
            min_ess_per_second: num(7)?,
        });
    }
    Ok(out)
}

/// Standard error of a series mean from `batches` non-overlapping batch means.
pub fn batch_means_se(series: &[f64], batches: usize) -> Result<f64> {
    let b = series.len() / batches.max(1);
    if batches < 2 || b == 0 {
        return Err(Error::InvalidParameter(
            "need at least two non-empty batches".into(),
        ));
    }
    let means: Vec<f64> = series
        .chunks_exact(b)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    Ok((var / batches as f64).sqrt())
}

/// Spread of plain and control-variate estimates over independent repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatioReport {
    pub plain_variance: DVector<f64>,
    pub cv_variance: DVector<f64>,
    /// `plain/cv`, with [`RATIO_CAP`] standing in for anything larger.
    pub ratio: DVector<f64>,
    pub capped: Vec<bool>,
    pub plain_mean: DVector<f64>,
    pub cv_mean: DVector<f64>,
    /// Repeats requested.
    pub t_requested: usize,
    /// Repeats that finished and entered the variances.
    pub t_completed: usize,
    /// Error messages of the repeats that aborted.
    pub failures: Vec<String>,
}

impl VarianceRatioReport {
    pub fn components(&self) -> usize {
        self.ratio.len()
    }

    pub fn is_partial(&self) -> bool {
        self.t_completed < self.t_requested
    }

    pub fn min_ratio(&self) -> f64 {
        self.ratio.min()
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratio.max()
    }

    pub fn ratio_label(&self, k: usize) -> String {
        if self.capped[k] {
            format!("≥{RATIO_CAP:e}")
        } else {
            format!("{:.2}", self.ratio[k])
        }
    }

    /// Builds the report from per-repeat estimates.
    pub fn from_estimates(
        reports: &[EstimatorReport],
        t_requested: usize,
        failures: Vec<String>,
    ) -> Result<Self> {
        let t = reports.len();
        if t < 2 {
            return Err(Error::Numerical(format!(
                "only {t} of {t_requested} repeats completed{}",
                failures
                    .first()
                    .map(|f| format!(": {f}"))
                    .unwrap_or_default()
            )));
        }
        let m = reports[0].components();
        if reports.iter().any(|r| r.components() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: reports.iter().map(|r| r.components()).max().unwrap_or(0),
            });
        }
        let stats = |pick: fn(&EstimatorReport) -> &DVector<f64>| {
            let mean = reports
                .iter()
                .fold(DVector::zeros(m), |acc, r| acc + pick(r))
                / t as f64;
            let var = reports
                .iter()
                .fold(DVector::zeros(m), |acc: DVector<f64>, r| {
                    let d = pick(r) - &mean;
                    acc + d.component_mul(&d)
                })
                / (t as f64 - 1.0);
            (mean, var)
        };
        let (plain_mean, plain_variance) = stats(|r| &r.plain_estimate);
        let (cv_mean, cv_variance) = stats(|r| &r.cv_estimate);
        let mut ratio = DVector::zeros(m);
        let mut capped = vec![false; m];
        for k in 0..m {
            let (p, c) = (plain_variance[k], cv_variance[k]);
            let r = if p == c {
                1.0
            } else if c > 0.0 {
                p / c
            } else {
                f64::INFINITY
            };
            if r > RATIO_CAP {
                ratio[k] = RATIO_CAP;
                capped[k] = true;
            } else {
                ratio[k] = r;
            }
        }
        Ok(VarianceRatioReport {
            plain_variance,
            cv_variance,
            ratio,
            capped,
            plain_mean,
            cv_mean,
            t_requested,
            t_completed: t,
            failures,
        })
    }

    pub fn format_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>9} {:>14} {:>14} {:>12}",
            "component", "Var plain", "Var cv", "ratio"
        );
        for k in 0..self.components() {
            let _ = writeln!(
                s,
                "{:>9} {:>14.6e} {:>14.6e} {:>12}",
                k,
                self.plain_variance[k],
                self.cv_variance[k],
                self.ratio_label(k)
            );
        }
        let _ = writeln!(s, "repeats: {}/{}", self.t_completed, self.t_requested);
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "component",
            "plain_var",
            "cv_var",
            "ratio",
            "capped",
            "plain_mean",
            "cv_mean",
            "t_requested",
            "t_completed",
        ])?;
        for k in 0..self.components() {
            w.write_record([
                k.to_string(),
                self.plain_variance[k].to_string(),
                self.cv_variance[k].to_string(),
                self.ratio[k].to_string(),
                self.capped[k].to_string(),
                self.plain_mean[k].to_string(),
                self.cv_mean[k].to_string(),
                self.t_requested.to_string(),
                self.t_completed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`VarianceRatioReport::write_csv`]; failure messages are not
    /// stored and come back empty.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut cols: [Vec<f64>; 5] = Default::default();
        let mut capped = Vec::new();
        let mut counts = (0, 0);
        for row in r.records() {
            let row = row?;
            let field = |i: usize| {
                row.get(i)
                    .ok_or_else(|| Error::Dataset("short variance-ratio row".into()))
            };
            for (slot, j) in [(0, 1), (1, 2), (2, 3), (3, 5), (4, 6)] {
                let v = field(j)?;
                cols[slot].push(
                    v.parse()
                        .map_err(|_| Error::Dataset(format!("bad number {v:?}")))?,
                );
            }
            capped.push(field(4)? == "true");
            let count = |i: usize| -> Result<usize> {
                let v = field(i)?;
                v.parse()
                    .map_err(|_| Error::Dataset(format!("bad repeat count {v:?}")))
            };
            counts = (count(7)?, count(8)?);
        }
        let [p, c, ratio, pm, cm] = cols.map(DVector::from_vec);
        Ok(VarianceRatioReport {
            plain_variance: p,
            cv_variance: c,
            ratio,
            capped,
            plain_mean: pm,
            cv_mean: cm,
            t_requested: counts.0,
            t_completed: counts.1,
            failures: Vec::new(),
        })
    }
}

/// Seed of repeat `i` derived from a base seed.
pub fn repeat_seed(base: u64, i: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
}

/// Runs `experiment` under `t` independent seeds and compares the spread of the two estimators.
/// Repeats may run concurrently; results are aggregated in repeat order, so the report depends
/// only on `base_seed`.
pub fn variance_ratio<F>(t: usize, base_seed: u64, experiment: F) -> Result<VarianceRatioReport>
where
    F: Fn(u64) -> Result<EstimatorReport> + Sync,
{
    let seeds: Vec<u64> = (0..t).map(|i| repeat_seed(base_seed, i)).collect();
    variance_ratio_with_seeds(&seeds, experiment)
}

/// [`variance_ratio`] with one explicit seed per repeat.
pub fn variance_ratio_with_seeds<F>(seeds: &[u64], experiment: F) -> Result<VarianceRatioReport>
where
    F: Fn(u64) -> Result<EstimatorReport> + Sync,
{
    let t = seeds.len();
    if t < 2 {
        return Err(Error::InvalidParameter(format!(
            "variance ratio needs at least 2 repeats, got {t}"
        )));
    }
    let results: Vec<Result<EstimatorReport>> = seeds.par_iter().map(|&s| experiment(s)).collect();
    let mut ok = Vec::with_capacity(t);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => ok.push(rep),
            Err(e) => failures.push(format!("repeat {i}: {e}")),
        }
    }
    VarianceRatioReport::from_estimates(&ok, t, failures)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::rng::chain_rng;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = chain_rng(seed);
        let mut x = 0.0;
        let sd = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn iid_draws_have_full_ess() {
        let s = ar1(0.0, 100_000, 1);
        let e = ess_series(&s).unwrap();
        assert!(e.ess / 1e5 >= 0.9 && e.ess <= 1e5, "{}", e.ess);
    }

    #[test]
    fn ar1_matches_integrated_autocorrelation() {
        for (rho, seed) in [(0.5, 2), (0.9, 3)] {
            let n = 200_000;
            let e = ess_series(&ar1(rho, n, seed)).unwrap().ess / n as f64;
            let exact = (1.0 - rho) / (1.0 + rho);
            assert!((e / exact - 1.0).abs() < 0.15, "ρ={rho}: {e} vs {exact}");
        }
    }

    #[test]
    fn constant_series_is_degenerate() {
        let e = ess_series(&[2.5; 50]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.ess, 50.0);
        assert!(ess_series(&[1.0; 5]).is_err());
    }

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let s = ar1(0.7, 300, 4);
        let rho = autocorrelation(&s).unwrap();
        let n = s.len();
        let mean = s.iter().sum::<f64>() / n as f64;
        let c = |k: usize| {
            (0..n - k)
                .map(|t| (s[t] - mean) * (s[t + k] - mean))
                .sum::<f64>()
        };
        for k in [0, 1, 5, 40] {
            assert!((rho[k] - c(k) / c(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn report_summarizes_components() {
        let n = 5000;
        let cols = [ar1(0.0, n, 5), ar1(0.8, n, 6), ar1(0.4, n, 7)];
        let m = DMatrix::from_fn(n, 3, |i, j| cols[j][i]);
        let r = EssReport::from_samples("x", &m, 2.0).unwrap();
        assert_eq!(r.min, r.per_component[1]);
        assert_eq!(r.median, r.per_component[2]);
        assert_eq!(r.max, r.per_component[0]);
        assert_eq!(r.min_ess_per_second, r.min / 2.0);
        assert!(r.per_component.iter().all(|e| *e > 0.0 && *e <= n as f64));
        let table = format_ess_table(std::slice::from_ref(&r));
        assert!(table.lines().next().unwrap().starts_with("Method"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ess.csv");
        write_ess_csv(std::slice::from_ref(&r), &p).unwrap();
        let back = read_ess_csv(&p).unwrap();
        assert_eq!(back[0].min, r.min);
        assert_eq!(back[0].label, "x");
    }

    fn report(plain: f64, cv: f64) -> EstimatorReport {
        EstimatorReport {
            plain_estimate: DVector::from_vec(vec![plain]),
            cv_estimate: DVector::from_vec(vec![cv]),
            beta1: DVector::zeros(1),
            beta2: DVector::zeros(1),
            n: 1,
        }
    }

    #[test]
    fn identical_estimators_give_unit_ratio() {
        let r = variance_ratio(20, 1, |seed| {
            let v = chain_rng(seed).gen::<f64>();
            Ok(report(v, v))
        })
        .unwrap();
        assert_eq!(r.ratio[0], 1.0);
        assert!(!r.capped[0]);
    }

    #[test]
    fn zero_variance_is_capped() {
        let r =
            variance_ratio(10, 2, |seed| Ok(report(chain_rng(seed).gen::<f64>(), 0.5))).unwrap();
        assert!(r.capped[0]);
        assert_eq!(r.ratio[0], RATIO_CAP);
        assert!(r.ratio_label(0).starts_with('≥'));
    }

    #[test]
    fn ratio_uses_unbiased_variances() {
        let plain = [1.0, 2.0, 4.0];
        let cv = [1.0, 1.5, 2.0];
        let reps: Vec<_> = plain.iter().zip(cv).map(|(p, c)| report(*p, c)).collect();
        let r = VarianceRatioReport::from_estimates(&reps, 3, vec![]).unwrap();
        assert!((r.plain_variance[0] - 7.0 / 3.0).abs() < 1e-14);
        assert!((r.cv_variance[0] - 0.25).abs() < 1e-14);
        assert!((r.ratio[0] - 28.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn failed_repeats_leave_a_partial_report() {
        let r = variance_ratio(6, 3, |seed| {
            if seed % 3 == 0 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(report(seed as f64, 0.0))
            }
        })
        .unwrap();
        assert_eq!(r.t_requested, 6);
        assert_eq!(r.t_completed + r.failures.len(), 6);
        assert!(variance_ratio(3, 3, |_| Err(Error::Numerical("x".into()))).is_err());
        assert!(variance_ratio(1, 3, |_| Ok(report(0.0, 0.0))).is_err());
    }

    #[test]
    fn variance_ratio_is_reproducible() {
        let run = || {
            variance_ratio(8, 9, |seed| {
                let mut rng = chain_rng(seed);
                Ok(report(rng.gen(), rng.gen::<f64>() * 0.5))
            })
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn csv_round_trip() {
        let reps: Vec<_> = (0..5).map(|i| report(i as f64, (i % 2) as f64)).collect();
        let r = VarianceRatioReport::from_estimates(&reps, 5, vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vr.csv");
        r.write_csv(&p).unwrap();
        let back = VarianceRatioReport::read_csv(&p).unwrap();
        assert_eq!(back.ratio, r.ratio);
        assert_eq!(back.capped, r.capped);
        assert_eq!((back.t_requested, back.t_completed), (5, 5));
    }

    #[test]
    fn batch_means_of_iid_series() {
        let s = ar1(0.0, 100_000, 8);
        let se = batch_means_se(&s, 50).unwrap();
        assert!((se / (1.0 / 100_000f64.sqrt()) - 1.0).abs() < 0.35);
    }
}
