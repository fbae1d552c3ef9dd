//! Subcommand implementations.

use std::path::Path;
use std::sync::Mutex;

use gimcmc::diagnostics::{format_ess_table, repeat_seed, variance_ratio_with_seeds, EssReport};
use gimcmc::latent_gaussian::{simulate_cox, PriorEigen};
use gimcmc::poisson_cv::EstimatorReport;
use gimcmc::scaling::{
    empirical_acceptance_curve, k_constant, scaling_curve, PerturbedGaussianSpec,
};
use gimcmc::targets::{bundled_dataset, Dataset, BUNDLED_DATASETS};

use crate::bundle::{BundleWriter, FileKind, RunSummary, TimingRow};
use crate::config::{ExperimentConfig, SamplerConfig, ScalingConfig};
use crate::error::CliError;
use crate::problem::{cox_config, Problem};

/// Settings shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub seed: Option<u64>,
    pub extended: bool,
    pub quiet: bool,
}

impl Context {
    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }
}

fn chain_seeds(cfg: &ExperimentConfig, ctx: &Context) -> Vec<u64> {
    match (ctx.seed, &cfg.run.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(list)) => list.clone(),
        (None, None) => vec![cfg.run.seed],
    }
}

fn ensure_samplers(cfg: &ExperimentConfig, min: usize) -> Result<&[SamplerConfig], CliError> {
    if cfg.samplers.len() < min {
        return Err(CliError::Config(format!(
            "at least {min} [[samplers]] entries are required, found {}",
            cfg.samplers.len()
        )));
    }
    Ok(&cfg.samplers)
}

/// Runs every sampler under every seed and writes run summaries, ESS tables and timings.
fn run_samplers(
    cfg: &ExperimentConfig,
    ctx: &Context,
    out: &Path,
    command: &str,
    min: usize,
) -> Result<(), CliError> {
    cfg.validate()?;
    let samplers = ensure_samplers(cfg, min)?;
    let base = ctx.seed.unwrap_or(cfg.run.seed);
    let problem = Problem::build(cfg.target()?, ctx.extended, base)?;
    let seeds = chain_seeds(cfg, ctx);
    let mut bundle = BundleWriter::create(out, command, Some(cfg))?;
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    for &seed in &seeds {
        let mut reports = Vec::new();
        for s in samplers {
            let trace = problem.run(s, &cfg.run, seed)?;
            let ess = EssReport::from_trace(&trace)?;
            runs.push(RunSummary {
                method: trace.label.clone(),
                seed,
                n_burnin: trace.n_burnin,
                n_samples: trace.len(),
                step_size: trace.step_size,
                burnin_acceptance: trace.burnin_acceptance,
                acceptance: trace.acceptance_rate(),
                mean_alpha: trace.mean_alpha(),
            });
            timing.push(TimingRow {
                method: trace.label.clone(),
                seed,
                burnin_seconds: trace.burnin_seconds,
                sampling_seconds: trace.sampling_seconds,
                min_ess_per_s: ess.min_ess_per_second,
            });
            reports.push(ess);
        }
        ctx.say(&format!("seed {seed}\n{}", format_ess_table(&reports)));
        let name = if seeds.len() == 1 {
            "ess.csv".to_string()
        } else {
            format!("ess-seed{seed}.csv")
        };
        bundle.ess(&name, &reports)?;
    }
    bundle.rows(FileKind::Runs, "runs.csv", &runs)?;
    bundle.rows(FileKind::Timing, "timing.csv", &timing)?;
    bundle.finish()?;
    Ok(())
}

pub fn sample(cfg: &ExperimentConfig, ctx: &Context, out: &Path) -> Result<(), CliError> {
    run_samplers(cfg, ctx, out, "sample", 1)
}

pub fn compare(cfg: &ExperimentConfig, ctx: &Context, out: &Path) -> Result<(), CliError> {
    run_samplers(cfg, ctx, out, "compare", 2)
}

/// Repeats the first (Gaussian-invariant) sampler `T` times and compares plain and
/// control-variate estimators.
pub fn variance_reduction(
    cfg: &ExperimentConfig,
    ctx: &Context,
    out: &Path,
) -> Result<(), CliError> {
    cfg.validate()?;
    let est = cfg
        .estimator
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [estimator] section".into()))?;
    let sampler = &ensure_samplers(cfg, 1)?[0];
    if !sampler.kind.is_gaussian_invariant() {
        return Err(CliError::Config(format!(
            "samplers[0].kind must be Gaussian-invariant, got {}",
            sampler.kind
        )));
    }
    let base = ctx.seed.unwrap_or(cfg.run.seed);
    let problem = Problem::build(cfg.target()?, ctx.extended, base)?;
    let seeds: Vec<u64> = match (&cfg.run.seeds, ctx.seed) {
        (Some(list), None) => list[..est.repeats].to_vec(),
        _ => (0..est.repeats).map(|i| repeat_seed(base, i)).collect(),
    };
    // Fail fast on setup errors before fanning out.
    problem.solution(est, sampler.step_size)?;
    problem.proposal_spec(sampler)?;
    let first: Mutex<Option<EstimatorReport>> = Mutex::new(None);
    let report = variance_ratio_with_seeds(&seeds, |seed| {
        let trace = problem.run(sampler, &cfg.run, seed).map_err(into_core)?;
        let r = problem.estimate(sampler, est, &trace).map_err(into_core)?;
        if seed == seeds[0] {
            *first.lock().expect("unpoisoned") = Some(r.clone());
        }
        Ok(r)
    })?;
    ctx.say(&report.format_table());
    if report.is_partial() {
        eprintln!(
            "warning: {} of {} repeats failed",
            report.failures.len(),
            report.t_requested
        );
        for f in &report.failures {
            eprintln!("  {f}");
        }
    }
    let mut bundle = BundleWriter::create(out, "variance-reduction", Some(cfg))?;
    bundle.variance_ratio("variance_ratio.csv", &report)?;
    if let Some(r) = first.into_inner().expect("unpoisoned") {
        bundle.estimate("estimate.csv", &r)?;
    }
    bundle.finish()?;
    Ok(())
}

/// Carries CLI errors through the core closure interface, keeping the numerical flag.
fn into_core(e: CliError) -> gimcmc::Error {
    match e {
        CliError::Numerical(m) => gimcmc::Error::Numerical(m),
        other => gimcmc::Error::InvalidParameter(other.to_string()),
    }
}

pub fn scaling(cfg: &ExperimentConfig, ctx: &Context, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let sc = cfg.scaling.clone().unwrap_or_default();
    let k = match sc.k {
        Some(k) => k,
        None => k_constant(&sc.h, 0.0)?.value,
    };
    let curve = scaling_curve(&sc.epsilons, &sc.dims, sc.kappa, k, sc.m)?;
    ctx.say(&format_curve(&curve, &sc));
    let mut bundle = BundleWriter::create(out, "scaling", Some(cfg))?;
    bundle.scaling("scaling.csv", &curve)?;
    if let Some(e) = &sc.empirical {
        let spec = PerturbedGaussianSpec {
            h: sc.h.clone(),
            epsilon: e.epsilon,
            d: e.d,
            kappa: sc.kappa,
            m: sc.m,
        };
        let pts = empirical_acceptance_curve(
            &spec,
            &e.gammas,
            e.n_steps,
            ctx.seed.unwrap_or(cfg.run.seed),
        )?;
        bundle.rows(FileKind::Acceptance, "acceptance.csv", &pts)?;
    }
    bundle.finish()?;
    Ok(())
}

fn format_curve(curve: &gimcmc::scaling::ScalingCurve, sc: &ScalingConfig) -> String {
    let mut s = format!("{:>8}", "eps");
    for d in &sc.dims {
        s += &format!(" {:>14}", format!("d={d}"));
    }
    s.push('\n');
    for &e in &sc.epsilons {
        s += &format!("{e:>8.4}");
        for p in curve.at_epsilon(e) {
            s += &format!(" {:>6.4}/{:>7.4}", p.gamma_star, p.acceptance);
        }
        s.push('\n');
    }
    s
}

pub fn simulate_cox_cmd(
    cfg: Option<&ExperimentConfig>,
    grid: Option<usize>,
    ctx: &Context,
    out: &Path,
) -> Result<(), CliError> {
    let (g, v, b) = match cfg.and_then(|c| c.target.as_ref()) {
        Some(crate::config::TargetConfig::Cox {
            grid_size,
            variance,
            beta,
            ..
        }) => (grid.or(*grid_size), *variance, *beta),
        _ => (grid, None, None),
    };
    if let Some(g) = g {
        if !(8..=64).contains(&g) {
            return Err(CliError::Config(format!(
                "grid size {g} must lie in 8..=64"
            )));
        }
    }
    let config = cox_config(g, v, b, ctx.extended);
    let seed = ctx.seed.or(cfg.map(|c| c.run.seed)).unwrap_or(1);
    let eigen = PriorEigen::new(&config.prior()?)?;
    let data = simulate_cox(config, &eigen, seed)?;
    let mut bundle = BundleWriter::create(out, "simulate-cox", cfg)?;
    data.write_csv(&bundle.path("cox.csv"))?;
    bundle.record(FileKind::CoxData, "cox.csv");
    std::fs::write(
        bundle.path("cox_config.json"),
        serde_json::to_string_pretty(&config)? + "\n",
    )?;
    bundle.finish()?;
    ctx.say(&format!(
        "simulated {}x{} lattice (d={}), {} events, seed {seed}\n",
        config.grid_size,
        config.grid_size,
        config.dim(),
        data.counts.sum()
    ));
    Ok(())
}

fn write_dataset(d: &Dataset, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&d.names)?;
    for i in 0..d.n_obs() {
        let row: Vec<String> = d
            .covariates
            .row(i)
            .iter()
            .chain(std::iter::once(&d.labels[i]))
            .map(f64::to_string)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Validates the bundled datasets and optionally exports them as CSV.
pub fn datasets(ctx: &Context, out: Option<&Path>) -> Result<(), CliError> {
    let mut bundle = out
        .map(|o| BundleWriter::create(o, "datasets", None))
        .transpose()?;
    ctx.say(&format!(
        "{:<12} {:>6} {:>10} {:>9}\n",
        "name", "rows", "covariates", "positive"
    ));
    for name in BUNDLED_DATASETS {
        let d = bundled_dataset(name)?;
        d.validate()?;
        let pos = d.labels.iter().filter(|y| **y == 1.0).count();
        ctx.say(&format!(
            "{name:<12} {:>6} {:>10} {:>9}\n",
            d.n_obs(),
            d.n_covariates(),
            pos
        ));
        if let Some(b) = bundle.as_mut() {
            let file = format!("{name}.csv");
            write_dataset(&d, &b.path(&file))?;
            b.record(FileKind::Dataset, &file);
        }
    }
    if let Some(b) = bundle {
        b.finish()?;
    }
    Ok(())
}
