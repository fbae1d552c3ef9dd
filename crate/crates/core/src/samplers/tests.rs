use super::*;
use crate::linalg::random_spd;
use crate::rng::{chain_rng, standard_normal_vector};
use crate::targets::{
    make_logistic_regression_target, GaussianMixtureTarget, GaussianTarget, StudentTTarget,
};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(x.to_vec())
}

fn gaussian_setup(d: usize, seed: u64) -> (GaussianTarget, DVector<f64>, Preconditioner) {
    let mut rng = chain_rng(seed);
    let s = random_spd(d, &mut rng);
    let mu = standard_normal_vector(d, &mut rng);
    let t = GaussianTarget::new(mu.clone(), s.clone()).unwrap();
    let p = Preconditioner::from_matrix(s).unwrap();
    (t, mu, p)
}

fn gi_specs(mu: &DVector<f64>, p: &Preconditioner, gamma: f64) -> Vec<ProposalSpec> {
    vec![
        ProposalSpec::gi_rwm(mu.clone(), p.clone(), gamma),
        ProposalSpec::gi_mala_const(p.clone(), gamma),
        ProposalSpec::gi_mala_precond(gamma),
    ]
}

#[test]
fn girwm_plug_in_example() {
    let p = Preconditioner::identity(1);
    let eps = v(&[1.0]);
    let (y, m) = girwm_propose_with_noise(&v(&[2.0]), &v(&[0.0]), &p, 0.5, &eps).unwrap();
    assert!((m[0] - 1.0).abs() < 1e-15);
    assert!((y[0] - m[0] - 0.75f64.sqrt()).abs() < 1e-15);
    assert!(girwm_propose_with_noise(&v(&[2.0]), &v(&[0.0]), &p, 2.0, &eps).is_err());
    assert!(girwm_propose_with_noise(&v(&[2.0]), &v(&[0.0]), &p, 0.0, &eps).is_err());
}

#[test]
fn girwm_unit_step_is_independent_of_x() {
    let (_, mu, p) = gaussian_setup(3, 1);
    let eps = standard_normal_vector(3, &mut chain_rng(2));
    let (y1, _) = girwm_propose_with_noise(&v(&[5.0, -1.0, 2.0]), &mu, &p, 1.0, &eps).unwrap();
    let (y2, _) = girwm_propose_with_noise(&v(&[-3.0, 0.0, 9.0]), &mu, &p, 1.0, &eps).unwrap();
    assert!((y1 - y2).amax() < 1e-12);
}

#[test]
fn girwm_small_step_stays_close() {
    let (_, mu, p) = gaussian_setup(2, 3);
    let x = v(&[1.0, -2.0]);
    let eps = v(&[0.3, -0.7]);
    let (y, m) = girwm_propose_with_noise(&x, &mu, &p, 1e-10, &eps).unwrap();
    assert!((&m - &x).amax() < 1e-9);
    assert!((&y - &x).amax() < 1e-4);
}

#[test]
fn gimala_reduces_to_girwm_on_gaussian() {
    let (t, mu, p) = gaussian_setup(4, 4);
    let mut rng = chain_rng(5);
    for gamma in [0.2, 1.0, 1.7] {
        let x = standard_normal_vector(4, &mut rng);
        let eps = standard_normal_vector(4, &mut rng);
        let grad = t.grad_log_density(&x);
        let (y1, m1) = gimala_propose_with_noise(&x, &grad, &p, gamma, &eps).unwrap();
        let (y2, m2) = girwm_propose_with_noise(&x, &mu, &p, gamma, &eps).unwrap();
        assert!((&m1 - &m2).amax() < 1e-10);
        assert!((&y1 - &y2).amax() < 1e-10);
    }
    let (y, m) = gimala_propose_with_noise(
        &v(&[1.0, 2.0, 3.0, 4.0]),
        &DVector::zeros(4),
        &p,
        0.5,
        &DVector::zeros(4),
    )
    .unwrap();
    assert_eq!(m, v(&[1.0, 2.0, 3.0, 4.0]));
    assert_eq!(y, m);
}

#[test]
fn mala_inflates_gimala_covariance() {
    let (t, _, p) = gaussian_setup(3, 6);
    let mut rng = chain_rng(7);
    let x = standard_normal_vector(3, &mut rng);
    let eps = standard_normal_vector(3, &mut rng);
    let grad = t.grad_log_density(&x);
    let gamma = 0.6;
    let (yg, mg) = gimala_propose_with_noise(&x, &grad, &p, gamma, &eps).unwrap();
    let (ym, mm) = mala_propose_with_noise(&x, &grad, &p, gamma, &eps).unwrap();
    assert!((&mg - &mm).amax() < 1e-15);
    let ratio = (2.0 * gamma / gi_scale(gamma)).sqrt();
    assert!(((&ym - &mm) - (&yg - &mg) * ratio).amax() < 1e-12);
    // Zero gradient, γ = 0.5: N(x, A).
    let (y, m) = mala_propose_with_noise(&x, &DVector::zeros(3), &p, 0.5, &eps).unwrap();
    assert_eq!(m, x);
    assert!(((&y - &m) - p.apply_factor(&eps)).amax() < 1e-15);
    assert!(mala_propose_with_noise(&x, &grad, &p, -1.0, &eps).is_err());
}

#[test]
fn rwm_is_symmetric() {
    let p = Preconditioner::from_matrix(random_spd(3, &mut chain_rng(8))).unwrap();
    let spec = ProposalSpec::rwm(p.clone(), 0.5);
    let mut rng = chain_rng(9);
    for _ in 0..10 {
        let x = standard_normal_vector(3, &mut rng);
        let (y, m) = rwm_propose(&x, &p, 0.5, &mut rng).unwrap();
        assert_eq!(m, x);
        let c = spec.kind.covariance_scale(0.5);
        assert!((p.log_normal(&y, &x, c) - p.log_normal(&x, &y, c)).abs() < 1e-12);
    }
    // Σ = I, γ = 0.5: unit-variance increments.
    let eps = v(&[0.4, -1.2]);
    let (y, _) =
        rwm_propose_with_noise(&v(&[0.0, 0.0]), &Preconditioner::identity(2), 0.5, &eps).unwrap();
    assert_eq!(y, eps);
}

#[test]
fn pcn_matches_girwm_with_zero_mean() {
    let (_, _, p) = gaussian_setup(5, 10);
    let x = standard_normal_vector(5, &mut chain_rng(11));
    let (y1, m1) = pcn_propose(&x, &p, 0.4, &mut chain_rng(12)).unwrap();
    let (y2, m2) = girwm_propose(&x, &DVector::zeros(5), &p, 0.4, &mut chain_rng(12)).unwrap();
    assert_eq!(y1, y2);
    assert_eq!(m1, m2);
}

#[test]
fn pcn_on_pure_prior_always_accepts() {
    let (_, _, p) = gaussian_setup(3, 13);
    let prior = GaussianTarget::new(DVector::zeros(3), p.matrix().clone()).unwrap();
    let spec = ProposalSpec::pcn(p, 0.3);
    let trace = run_chain(
        &spec,
        &prior,
        DVector::zeros(3),
        &RunOptions::fixed(0, 500),
        4,
    )
    .unwrap();
    assert_eq!(trace.acceptance_rate(), 1.0);
}

#[test]
fn gaussian_invariance_of_log_ratio() {
    let (t, mu, p) = gaussian_setup(10, 14);
    let mut rng = chain_rng(15);
    for gamma in [0.1, 0.9, 1.0, 1.9] {
        for spec in gi_specs(&mu, &p, gamma) {
            for _ in 0..20 {
                let x = standard_normal_vector(10, &mut rng) * 3.0;
                let rec = mh_step(&spec, &t, &x, &mut rng).unwrap();
                let r = mh_log_ratio(&spec, &t, &rec.x, &rec.y, &rec.proposal_mean).unwrap();
                assert!(r >= -1e-10, "{:?} gamma {gamma}: {r}", spec.kind);
                assert!(rec.accepted);
            }
        }
    }
}

#[test]
fn symmetric_rwm_ratio_is_density_difference() {
    let t = StudentTTarget::new(3.0).unwrap();
    let spec = ProposalSpec::rwm(Preconditioner::identity(1), 0.7);
    let (x, y) = (v(&[0.3]), v(&[-1.4]));
    let r = mh_log_ratio(&spec, &t, &x, &y, &x).unwrap();
    assert!((r - (t.log_density(&y) - t.log_density(&x))).abs() < 1e-15);
}

fn log_proposal(
    spec: &ProposalSpec,
    target: &dyn TargetModel,
    from: &DVector<f64>,
    to: &DVector<f64>,
) -> f64 {
    let s = PointState::evaluate(spec, target, from.clone()).unwrap();
    let m = proposal_mean(spec, &s);
    log_q(spec, &s, &m, to)
}

fn detailed_balance_gap(
    spec: &ProposalSpec,
    target: &dyn TargetModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let sx = PointState::evaluate(spec, target, x.clone()).unwrap();
    let sy = PointState::evaluate(spec, target, y.clone()).unwrap();
    let mx = proposal_mean(spec, &sx);
    let my = proposal_mean(spec, &sy);
    let axy = accept_prob(log_ratio_states(spec, &sx, &mx, &sy));
    let ayx = accept_prob(log_ratio_states(spec, &sy, &my, &sx));
    let lhs = target.log_density(x) + log_proposal(spec, target, x, y) + axy.ln();
    let rhs = target.log_density(y) + log_proposal(spec, target, y, x) + ayx.ln();
    (lhs - rhs).abs()
}

#[test]
fn detailed_balance_on_small_targets() {
    let mut rng = chain_rng(16);
    let mut z = DMatrix::from_fn(30, 3, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    z.column_mut(0).fill(1.0);
    let labels = DVector::from_fn(30, |i, _| (i % 3 == 0) as u8 as f64);
    let logit = make_logistic_regression_target(z, labels).unwrap();
    let p = Preconditioner::from_matrix(random_spd(3, &mut rng) * 0.3).unwrap();
    let mu = standard_normal_vector(3, &mut rng);
    let specs = vec![
        ProposalSpec::gi_rwm(mu, p.clone(), 0.6),
        ProposalSpec::gi_mala_const(p.clone(), 0.6),
        ProposalSpec::mala_const(p.clone(), 0.4),
        ProposalSpec::rwm(p.clone(), 0.4),
        ProposalSpec::pcn(p.clone(), 0.5),
    ];
    for spec in &specs {
        for _ in 0..20 {
            let x = standard_normal_vector(3, &mut rng) * 0.5;
            let y = standard_normal_vector(3, &mut rng) * 0.5;
            assert!(
                detailed_balance_gap(spec, &logit, &x, &y) < 1e-10,
                "{:?}",
                spec.kind
            );
        }
    }
    let mix = GaussianMixtureTarget::correlated_pair(1.0);
    for spec in [
        ProposalSpec::gi_mala_precond(0.8),
        ProposalSpec::mala_precond(0.5),
    ] {
        for _ in 0..20 {
            let x = standard_normal_vector(2, &mut rng);
            let y = standard_normal_vector(2, &mut rng);
            assert!(
                detailed_balance_gap(&spec, &mix, &x, &y) < 1e-10,
                "{:?}",
                spec.kind
            );
        }
    }
}

/// Standard normal truncated to `x ≤ 1`.
struct Truncated;

impl TargetModel for Truncated {
    fn dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        if x[0] > 1.0 {
            f64::NEG_INFINITY
        } else {
            -0.5 * x[0] * x[0]
        }
    }
    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        -x
    }
}

#[test]
fn zero_density_proposals_are_rejected() {
    let spec = ProposalSpec::rwm(Preconditioner::identity(1), 0.5);
    let mut k = GenericKernel::new(spec, &Truncated, v(&[0.5])).unwrap();
    let rec = k.step_with_noise(&v(&[3.0]), 0.0).unwrap();
    assert_eq!(rec.alpha, 0.0);
    assert!(!rec.accepted);
    assert_eq!(rec.next_state(), &rec.x);
    assert!(GenericKernel::new(
        ProposalSpec::rwm(Preconditioner::identity(1), 0.5),
        &Truncated,
        v(&[2.0])
    )
    .is_err());
}

#[test]
fn empirical_acceptance_matches_mean_alpha() {
    let t = StudentTTarget::new(2.0).unwrap();
    let spec = ProposalSpec::rwm(Preconditioner::identity(1), 2.0);
    let trace = run_chain(&spec, &t, v(&[0.0]), &RunOptions::fixed(0, 100_000), 17).unwrap();
    let acc: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.accepted as u8 as f64)
        .collect();
    let empirical = acc.iter().sum::<f64>() / acc.len() as f64;
    // Bernoulli(α) given α: the conditional variance bounds the standard error.
    let var: f64 = trace
        .records
        .iter()
        .map(|r| r.alpha * (1.0 - r.alpha))
        .sum::<f64>()
        / acc.len() as f64;
    let se = (var / acc.len() as f64).sqrt();
    assert!(
        (empirical - trace.mean_alpha()).abs() < 3.0 * se,
        "{empirical} vs {}",
        trace.mean_alpha()
    );
}

#[test]
fn adaptation_rule() {
    assert!((adapt_step_size(true, 0.7, 1.0, 5, true) - 0.7).abs() < 1e-15);
    assert!((adapt_step_size(false, 0.7, 0.0, 5, true) - 0.7).abs() < 1e-15);
    let mut g = 0.9;
    for t in 1..100 {
        let next = adapt_step_size(false, g, 0.8, t, true);
        assert!(next < g);
        g = next;
    }
    assert!(adapt_step_size(true, 1.99, 0.0, 1, true) < 2.0);
    assert!(adapt_step_size(true, 1.99, 0.0, 1, false) > 2.0);
    assert!(adapt_step_size(false, 1e-6, 1.0, 1, false) >= 1e-6);
}

#[test]
fn adaptation_reaches_target_rate() {
    // The matched preconditioner accepts every move, so a mismatched one is used to give
    // the acceptance rate something to respond to.
    let t = GaussianTarget::standard(10);
    let spec = ProposalSpec::gi_mala_const(Preconditioner::scaled_identity(10, 0.25).unwrap(), 0.5);
    let trace = run_chain(
        &spec,
        &t,
        DVector::zeros(10),
        &RunOptions::adaptive(5000, 5000),
        18,
    )
    .unwrap();
    let rate = trace.acceptance_rate();
    assert!((0.75..=0.85).contains(&rate), "adapted acceptance {rate}");
}

#[test]
fn fixed_runs_keep_step_size_and_are_deterministic() {
    let (t, mu, p) = gaussian_setup(3, 19);
    let spec = ProposalSpec::mala_const(p, 0.4);
    let a = run_chain(&spec, &t, mu.clone(), &RunOptions::fixed(0, 300), 20).unwrap();
    assert_eq!(a.step_size, 0.4);
    let b = run_chain(&spec, &t, mu.clone(), &RunOptions::fixed(0, 300), 20).unwrap();
    assert_eq!(a.records, b.records);
    assert!(a.is_chained());
    let c = run_chain(&spec, &t, mu, &RunOptions::adaptive(200, 300), 20).unwrap();
    assert!(c.is_chained());
    assert_eq!(c.len(), 300);
    assert_ne!(c.step_size, 0.4);
}

#[test]
fn unit_step_gimala_is_iid() {
    let (t, mu, p) = gaussian_setup(3, 21);
    let spec = ProposalSpec::gi_mala_const(p.clone(), 1.0);
    let n = 20_000;
    let trace = run_chain(&spec, &t, DVector::zeros(3), &RunOptions::fixed(0, n), 22).unwrap();
    let m = trace.sample_mean();
    for j in 0..3 {
        let se = (p.matrix()[(j, j)] / n as f64).sqrt();
        assert!((m[j] - mu[j]).abs() < 4.0 * se);
    }
}

#[test]
fn spec_validation() {
    let p = Preconditioner::identity(2);
    assert!(ProposalSpec::gi_mala_const(p.clone(), 2.0)
        .validate(2)
        .is_err());
    assert!(ProposalSpec::mala_const(p.clone(), 3.0).validate(2).is_ok());
    assert!(ProposalSpec::rwm(p.clone(), 0.5).validate(3).is_err());
    assert!("gi-mala-precond".parse::<ProposalKind>().is_ok());
    assert!("hmc".parse::<ProposalKind>().is_err());
    for k in ProposalKind::ALL {
        assert_eq!(k.name().parse::<ProposalKind>().unwrap(), k);
        if k.is_gaussian_invariant() {
            for gamma in [1e-6, 0.5, 1.0, 2.0 - 1e-6] {
                assert!(k.covariance_scale(gamma) > 0.0);
            }
        }
    }
}

#[test]
fn trace_round_trip() {
    let (t, mu, p) = gaussian_setup(2, 23);
    let spec = ProposalSpec::gi_mala_const(p, 0.7);
    let trace = run_chain(&spec, &t, mu, &RunOptions::adaptive(50, 40), 24).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&trace, &path).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back.records, trace.records);
    assert_eq!(back.step_size, trace.step_size);
    assert_eq!(back.seed, 24);
}
