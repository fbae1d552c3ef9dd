//! Output directories: one manifest plus the CSV files it lists.

use std::path::{Path, PathBuf};

use gimcmc::diagnostics::{read_ess_csv, write_ess_csv, EssReport, VarianceRatioReport};
use gimcmc::poisson_cv::EstimatorReport;
use gimcmc::scaling::ScalingCurve;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileKind {
    Ess,
    Runs,
    Timing,
    Estimate,
    VarianceRatio,
    Scaling,
    Acceptance,
    CoxData,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub kind: FileKind,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub files: Vec<FileEntry>,
}

/// One row per chain, without wall-clock fields so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub n_burnin: usize,
    pub n_samples: usize,
    pub step_size: f64,
    pub burnin_acceptance: f64,
    pub acceptance: f64,
    pub mean_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub seed: u64,
    pub burnin_seconds: f64,
    pub sampling_seconds: f64,
    pub min_ess_per_s: f64,
}

/// Accumulates files in an output directory and writes the manifest last.
pub struct BundleWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl BundleWriter {
    pub fn create(
        dir: &Path,
        command: &str,
        config: Option<&ExperimentConfig>,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                version: gimcmc::VERSION.to_string(),
                command: command.to_string(),
                config: config.cloned(),
                files: Vec::new(),
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record(&mut self, kind: FileKind, name: &str) {
        self.manifest.files.push(FileEntry {
            kind,
            path: name.to_string(),
        });
    }

    /// ESS summaries with timing fields zeroed; timings go to a separate file.
    pub fn ess(&mut self, name: &str, reports: &[EssReport]) -> Result<(), CliError> {
        let untimed: Vec<EssReport> = reports
            .iter()
            .map(|r| EssReport {
                seconds: 0.0,
                min_ess_per_second: 0.0,
                ..r.clone()
            })
            .collect();
        write_ess_csv(&untimed, &self.path(name))?;
        self.record(FileKind::Ess, name);
        Ok(())
    }

    pub fn rows<T: Serialize>(
        &mut self,
        kind: FileKind,
        name: &str,
        rows: &[T],
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.record(kind, name);
        Ok(())
    }

    pub fn estimate(&mut self, name: &str, r: &EstimatorReport) -> Result<(), CliError> {
        r.write_csv(&self.path(name))?;
        self.record(FileKind::Estimate, name);
        Ok(())
    }

    pub fn variance_ratio(&mut self, name: &str, r: &VarianceRatioReport) -> Result<(), CliError> {
        r.write_csv(&self.path(name))?;
        self.record(FileKind::VarianceRatio, name);
        Ok(())
    }

    pub fn scaling(&mut self, name: &str, c: &ScalingCurve) -> Result<(), CliError> {
        c.write_csv(&self.path(name))?;
        self.record(FileKind::Scaling, name);
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(self.dir)
    }
}

/// Everything a command wrote, re-read from disk.
#[derive(Debug, Clone, Default)]
pub struct ResultBundle {
    pub version: String,
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub ess: Vec<Vec<EssReport>>,
    pub runs: Vec<RunSummary>,
    pub timing: Vec<TimingRow>,
    pub estimates: Vec<EstimatorReport>,
    pub variance_ratios: Vec<VarianceRatioReport>,
    pub scaling: Vec<ScalingCurve>,
    pub acceptance: Vec<gimcmc::scaling::AcceptancePoint>,
    /// Data files that are only checked for a header and parseable rows.
    pub data_files: Vec<PathBuf>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

impl ResultBundle {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))?;
        let m: Manifest = serde_json::from_str(&text)?;
        let mut b = ResultBundle {
            version: m.version,
            command: m.command,
            config: m.config,
            ..Default::default()
        };
        for f in &m.files {
            let p = dir.join(&f.path);
            match f.kind {
                FileKind::Ess => b.ess.push(read_ess_csv(&p)?),
                FileKind::Runs => b.runs.extend(read_rows::<RunSummary>(&p)?),
                FileKind::Timing => b.timing.extend(read_rows::<TimingRow>(&p)?),
                FileKind::Estimate => b.estimates.push(EstimatorReport::read_csv(&p)?),
                FileKind::VarianceRatio => {
                    b.variance_ratios.push(VarianceRatioReport::read_csv(&p)?)
                }
                FileKind::Scaling => b.scaling.push(ScalingCurve::read_csv(&p)?),
                FileKind::Acceptance => b
                    .acceptance
                    .extend(read_rows::<gimcmc::scaling::AcceptancePoint>(&p)?),
                FileKind::CoxData | FileKind::Dataset => {
                    let mut r = csv::Reader::from_path(&p)?;
                    if r.headers()?.is_empty() {
                        return Err(CliError::Other(format!(
                            "{} has no header row",
                            p.display()
                        )));
                    }
                    for rec in r.records() {
                        rec?;
                    }
                    b.data_files.push(p);
                }
            }
        }
        Ok(b)
    }
}
