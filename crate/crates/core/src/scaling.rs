//! Finite-dimensional optimal scaling of GI-MALA on factorised near-Gaussian targets
//! `π_d(x) = Π f(x_i)`, `f(x) ∝ exp{−x²/2 + εh(x)}`.
//!
//! The speed objective `(2γ−γ²)^{κd/2}(2Φ(−εK√d γ^{3/2}/2) − M)` trades proposal entropy
//! against the limiting acceptance rate; its maximiser is the recommended step size.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Preconditioner;
use crate::quadrature::integrate;
use crate::samplers::{run_chain, ProposalSpec, RunOptions};
use crate::special::norm_cdf;
use crate::targets::TargetModel;

/// Half-width of the interval the 1-d expectations are integrated over.
pub const QUADRATURE_HALF_WIDTH: f64 = 20.0;
/// Step sizes searched by [`optimize_gamma`].
pub const GAMMA_BOUNDS: (f64, f64) = (1e-4, 2.0 - 1e-4);
const GAMMA_TOL: f64 = 1e-6;
/// Default `ε` grid for scaling curves.
pub const DEFAULT_EPSILONS: [f64; 10] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09];
/// Default dimension grid for scaling curves.
pub const DEFAULT_DIMS: [usize; 4] = [10, 100, 1000, 10_000];

/// Polynomial with coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    /// `c·x^k`.
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }
}

/// Checks that `exp{−x²/2 + εh(x)}` is a usable density for the quadrature.
pub fn validate_perturbation(h: &Polynomial, epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ε must be finite and non-negative, got {epsilon}"
        )));
    }
    let Some(deg) = h.degree() else { return Ok(()) };
    if deg < 4 {
        return Err(Error::InvalidParameter(format!(
            "perturbation must have degree at least 4, got {deg}"
        )));
    }
    if epsilon > 0.0 && (deg % 2 == 1 || h.coeffs[deg] > 0.0) {
        return Err(Error::InvalidParameter(
            "exp{−x²/2 + εh(x)} is not integrable: h needs even degree and a negative leading coefficient".into(),
        ));
    }
    let f = PerturbedDensity::log_unnormalised(h, epsilon);
    let peak = (0..=400)
        .map(|i| f(-5.0 + i as f64 / 40.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let edge = f(-QUADRATURE_HALF_WIDTH).max(f(QUADRATURE_HALF_WIDTH));
    if edge - peak > -50.0 {
        return Err(Error::InvalidParameter(format!(
            "density mass beyond ±{QUADRATURE_HALF_WIDTH} is not negligible"
        )));
    }
    Ok(())
}

/// The normalised 1-d factor `f`.
#[derive(Debug, Clone)]
pub struct PerturbedDensity {
    h: Polynomial,
    epsilon: f64,
    log_z: f64,
}

impl PerturbedDensity {
    fn log_unnormalised(h: &Polynomial, epsilon: f64) -> impl Fn(f64) -> f64 + '_ {
        move |x| -0.5 * x * x + epsilon * h.eval(x)
    }

    pub fn new(h: Polynomial, epsilon: f64) -> Result<Self> {
        validate_perturbation(&h, epsilon)?;
        let mut d = PerturbedDensity {
            h,
            epsilon,
            log_z: 0.0,
        };
        let z = d.integrate_weighted(|_| 1.0)?;
        d.log_z = z.ln();
        Ok(d)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        -0.5 * x * x + self.epsilon * self.h.eval(x) - self.log_z
    }

    fn integrate_weighted<F: Fn(f64) -> f64>(&self, phi: F) -> Result<f64> {
        let w = QUADRATURE_HALF_WIDTH;
        Ok(integrate(|x| phi(x) * self.log_density(x).exp(), -w, w, 1e-14, 1e-12)?.value)
    }

    /// `E_f[φ]`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, phi: F) -> Result<f64> {
        self.integrate_weighted(phi)
    }
}

/// The constant `K = √E_f[(2h″² + 5h‴²)/12]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KConstant {
    pub value: f64,
    /// `h ≡ 0`, so there is no perturbation to measure.
    pub degenerate: bool,
}

pub fn k_constant(h: &Polynomial, epsilon: f64) -> Result<KConstant> {
    if h.is_zero() {
        validate_perturbation(h, epsilon)?;
        return Ok(KConstant {
            value: 0.0,
            degenerate: true,
        });
    }
    let f = PerturbedDensity::new(h.clone(), epsilon)?;
    let h2 = h.derivative().derivative();
    let h3 = h2.derivative();
    let e = f.expectation(|x| (2.0 * h2.eval(x).powi(2) + 5.0 * h3.eval(x).powi(2)) / 12.0)?;
    Ok(KConstant {
        value: e.sqrt(),
        degenerate: false,
    })
}

/// Inverse Fisher preconditioner entry `E_f[1 − εh″]⁻¹`.
pub fn fisher_preconditioner(h: &Polynomial, epsilon: f64) -> Result<f64> {
    let f = PerturbedDensity::new(h.clone(), epsilon)?;
    let h2 = h.derivative().derivative();
    let info = f.expectation(|x| 1.0 - epsilon * h2.eval(x))?;
    if !(info > 0.0) {
        return Err(Error::Numerical(format!(
            "expected curvature {info} is not positive"
        )));
    }
    Ok(1.0 / info)
}

/// Limiting acceptance rate `2Φ(−εK√d γ^{3/2}/2)`.
pub fn implied_acceptance(gamma: f64, epsilon: f64, d: usize, k: f64) -> f64 {
    2.0 * norm_cdf(-epsilon * k * (d as f64).sqrt() * gamma.powf(1.5) / 2.0)
}

/// Log of the speed objective; `−∞` where the objective is not positive.
pub fn log_speed_objective(gamma: f64, epsilon: f64, d: usize, kappa: f64, k: f64, m: f64) -> f64 {
    let s = 2.0 * gamma - gamma * gamma;
    let slack = implied_acceptance(gamma, epsilon, d, k) - m;
    if s <= 0.0 || slack <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * kappa * d as f64 * s.ln() + slack.ln()
}

/// `(2γ−γ²)^{κd/2}(2Φ(−εK√d γ^{3/2}/2) − M)`, with the power evaluated in log-space.
pub fn speed_objective(gamma: f64, epsilon: f64, d: usize, kappa: f64, k: f64, m: f64) -> f64 {
    let s = 2.0 * gamma - gamma * gamma;
    let slack = implied_acceptance(gamma, epsilon, d, k) - m;
    if s <= 0.0 {
        return 0.0;
    }
    (0.5 * kappa * d as f64 * s.ln()).exp() * slack
}

/// Maximiser of the speed objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalStep {
    pub gamma: f64,
    pub acceptance: f64,
}

/// Grid scan followed by golden-section refinement on [`GAMMA_BOUNDS`].
pub fn optimize_gamma(epsilon: f64, d: usize, kappa: f64, k: f64, m: f64) -> Result<OptimalStep> {
    let obj = |g: f64| log_speed_objective(g, epsilon, d, kappa, k, m);
    let (lo, hi) = GAMMA_BOUNDS;
    const GRID: usize = 400;
    let at = |i: usize| lo + (hi - lo) * i as f64 / GRID as f64;
    let (best, best_val) =
        (0..=GRID)
            .map(|i| (i, obj(at(i))))
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, p| if p.1 > acc.1 { p } else { acc },
            );
    if best_val == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!(
            "speed objective is not positive anywhere: M = {m} is too large"
        )));
    }
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(GRID)));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (obj(c), obj(e));
    while b - a > GAMMA_TOL {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = obj(e);
        }
    }
    let gamma = 0.5 * (a + b);
    Ok(OptimalStep {
        gamma,
        acceptance: implied_acceptance(gamma, epsilon, d, k),
    })
}

/// Entropy weight `κ`, either fixed or proportional to `1/d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kappa {
    Fixed(f64),
    /// `κ = c/d`.
    PerDimension(f64),
}

impl Kappa {
    pub fn value(self, d: usize) -> f64 {
        match self {
            Kappa::Fixed(k) => k,
            Kappa::PerDimension(c) => c / d as f64,
        }
    }
}

impl Default for Kappa {
    fn default() -> Self {
        Kappa::PerDimension(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub epsilon: f64,
    pub d: usize,
    pub gamma_star: f64,
    pub acceptance: f64,
}

/// Optimal step sizes over an `(ε, d)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    pub fn get(&self, epsilon: f64, d: usize) -> Option<&ScalingPoint> {
        self.points
            .iter()
            .find(|p| p.epsilon == epsilon && p.d == d)
    }

    /// Points at dimension `d`, ordered by `ε`.
    pub fn at_dim(&self, d: usize) -> Vec<ScalingPoint> {
        let mut v: Vec<_> = self.points.iter().filter(|p| p.d == d).copied().collect();
        v.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        v
    }

    /// Points at noise level `ε`, ordered by `d`.
    pub fn at_epsilon(&self, epsilon: f64) -> Vec<ScalingPoint> {
        let mut v: Vec<_> = self
            .points
            .iter()
            .filter(|p| p.epsilon == epsilon)
            .copied()
            .collect();
        v.sort_by_key(|p| p.d);
        v
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "d", "gamma_star", "acceptance"])?;
        for p in &self.points {
            w.write_record([
                p.epsilon.to_string(),
                p.d.to_string(),
                p.gamma_star.to_string(),
                p.acceptance.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let points = r
            .deserialize()
            .collect::<std::result::Result<Vec<ScalingPoint>, _>>()?;
        Ok(ScalingCurve { points })
    }
}

pub fn scaling_curve(
    epsilons: &[f64],
    dims: &[usize],
    kappa: Kappa,
    k: f64,
    m: f64,
) -> Result<ScalingCurve> {
    if epsilons.is_empty() || dims.is_empty() {
        return Err(Error::InvalidParameter("scaling grid is empty".into()));
    }
    if let Some(d) = dims.iter().find(|d| **d == 0) {
        return Err(Error::InvalidParameter(format!(
            "dimension {d} in scaling grid"
        )));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::InvalidParameter(format!("ε = {e} in scaling grid")));
    }
    let grid: Vec<(f64, usize)> = epsilons
        .iter()
        .flat_map(|e| dims.iter().map(move |d| (*e, *d)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(epsilon, d)| {
            let opt = optimize_gamma(epsilon, d, kappa.value(d), k, m)?;
            Ok(ScalingPoint {
                epsilon,
                d,
                gamma_star: opt.gamma,
                acceptance: opt.acceptance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingCurve { points })
}

/// Parameters of a factorised near-Gaussian scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedGaussianSpec {
    pub h: Polynomial,
    pub epsilon: f64,
    pub d: usize,
    #[serde(default)]
    pub kappa: Kappa,
    #[serde(default = "default_m")]
    pub m: f64,
}

fn default_m() -> f64 {
    0.001
}

impl PerturbedGaussianSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(self.m >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "M must be non-negative, got {}",
                self.m
            )));
        }
        PerturbedDensity::new(self.h.clone(), self.epsilon).map(|_| ())
    }

    pub fn k(&self) -> Result<KConstant> {
        k_constant(&self.h, self.epsilon)
    }

    pub fn optimal_step(&self) -> Result<OptimalStep> {
        optimize_gamma(
            self.epsilon,
            self.d,
            self.kappa.value(self.d),
            self.k()?.value,
            self.m,
        )
    }
}

/// `π_d(x) = Π exp{−x_i²/2 + εh(x_i)}` up to normalisation.
#[derive(Debug, Clone)]
pub struct PerturbedGaussianTarget {
    d: usize,
    h: Polynomial,
    dh: Polynomial,
    epsilon: f64,
}

impl PerturbedGaussianTarget {
    pub fn new(h: Polynomial, epsilon: f64, d: usize) -> Result<Self> {
        validate_perturbation(&h, epsilon)?;
        Ok(PerturbedGaussianTarget {
            d,
            dh: h.derivative(),
            h,
            epsilon,
        })
    }

    pub fn from_spec(spec: &PerturbedGaussianSpec) -> Result<Self> {
        Self::new(spec.h.clone(), spec.epsilon, spec.d)
    }
}

impl TargetModel for PerturbedGaussianTarget {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .map(|v| -0.5 * v * v + self.epsilon * self.h.eval(*v))
            .sum()
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| -v + self.epsilon * self.dh.eval(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePoint {
    pub gamma: f64,
    /// Mean MH acceptance probability along the chain.
    pub empirical: f64,
    /// `2Φ(−εK√d γ^{3/2}/2)`.
    pub predicted: f64,
}

/// Runs GI-MALA with the inverse-Fisher preconditioner at each step size and compares the
/// observed mean acceptance probability with the limiting formula.
pub fn empirical_acceptance_curve(
    spec: &PerturbedGaussianSpec,
    gammas: &[f64],
    n_steps: usize,
    seed: u64,
) -> Result<Vec<AcceptancePoint>> {
    let target = PerturbedGaussianTarget::from_spec(spec)?;
    let a = fisher_preconditioner(&spec.h, spec.epsilon)?;
    let k = spec.k()?.value;
    let precond = Preconditioner::scaled_identity(spec.d, a)?;
    let opts = RunOptions::fixed((n_steps / 5).max(200), n_steps);
    gammas
        .par_iter()
        .enumerate()
        .map(|(i, &gamma)| {
            let prop = ProposalSpec::gi_mala_const(precond.clone(), gamma);
            let trace = run_chain(
                &prop,
                &target,
                DVector::zeros(spec.d),
                &opts,
                seed.wrapping_add(i as u64),
            )?;
            Ok(AcceptancePoint {
                gamma,
                empirical: trace.mean_alpha(),
                predicted: implied_acceptance(gamma, spec.epsilon, spec.d, k),
            })
        })
        .collect()
}

/// `log ∫ exp{−x²/2 + εh(x)} dx` over the quadrature interval.
pub fn log_normaliser(h: &Polynomial, epsilon: f64) -> Result<f64> {
    Ok(PerturbedDensity::new(h.clone(), epsilon)?.log_z)
}

#[cfg(test)]
mod tests;
