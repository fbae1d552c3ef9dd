use nalgebra::{DMatrix, DVector};

use super::*;
use crate::linalg::random_spd;
use crate::rng::{chain_rng, standard_normal_vector};
use crate::samplers::{gi_scale, mh_log_ratio, GenericKernel, MhKernel, ProposalSpec};
use crate::targets::{
    make_latent_gaussian_target, LatentGaussianTarget, LikelihoodTerm, TargetModel,
};

fn logistic_lgm(d: usize, seed: u64) -> (LatentGaussianTarget, PriorEigen) {
    let mut rng = chain_rng(seed);
    let prior = random_spd(d, &mut rng) * 2.0;
    let labels = DVector::from_fn(d, |i, _| {
        (i * 7 + seed as usize).is_multiple_of(3) as u8 as f64
    });
    let t = make_latent_gaussian_target(prior, LikelihoodTerm::BinaryLogistic { labels }).unwrap();
    let e = PriorEigen::new(t.prior_covariance()).unwrap();
    (t, e)
}

/// The bracketed formula exactly as written, with its cancelling `1/δ` terms.
fn h_literal(
    x: &DVector<f64>,
    y: &DVector<f64>,
    c: &LgmStepCache,
    e: &PriorEigen,
    gamma: f64,
) -> f64 {
    let d = c.delta;
    let r = y - x - &c.grad_g * (gamma / d);
    let zeta = c.zeta();
    let quad: f64 = e
        .values()
        .iter()
        .zip(zeta.iter())
        .map(|(l, z)| z * z / (l + 1.0 / d))
        .sum();
    let logdet: f64 = e.values().iter().map(|l| (l * d + 1.0).ln()).sum();
    0.5 * d / gi_scale(gamma) * r.norm_squared() - 0.5 * logdet - 0.5 * gamma / (2.0 - gamma) * quad
}

#[test]
fn delta_examples() {
    let lik = LikelihoodTerm::BinaryLogistic {
        labels: DVector::from_vec(vec![1.0, 0.0, 1.0]),
    };
    assert!((compute_delta(&lik.curvature_diag(&DVector::zeros(3))).unwrap() - 0.25).abs() < 1e-15);
    let gr = LikelihoodTerm::GaussianRegression {
        observations: DVector::zeros(4),
        noise_var: 0.5,
    };
    let x = standard_normal_vector(4, &mut chain_rng(1));
    assert!((compute_delta(&gr.curvature_diag(&x)).unwrap() - 2.0).abs() < 1e-15);
    let cfg = CoxConfig::standard(64);
    let cox = LikelihoodTerm::PoissonCox {
        counts: DVector::zeros(4096),
        cell_area: cfg.cell_area(),
        offset: cfg.offset(),
    };
    let delta = compute_delta(&cox.curvature_diag(&DVector::zeros(4096))).unwrap();
    let expected = 126.0 / 4096.0 * (-1.91f64 / 2.0).exp();
    assert!((delta - expected).abs() < 1e-14);
    assert_eq!(compute_delta(&DVector::zeros(3)).unwrap(), DELTA_MIN);
    assert!(compute_delta(&DVector::from_vec(vec![f64::NAN])).is_err());
}

#[test]
fn cache_satisfies_zeta_identity() {
    let (t, e) = logistic_lgm(12, 2);
    let x = standard_normal_vector(12, &mut chain_rng(3));
    let c = lgm_cache(&t, &e, &x, &mut ProductCounter::default()).unwrap();
    let expected = e.vectors().tr_mul(&(&x + t.grad_g(&x) / c.delta));
    assert!((c.zeta() - expected).amax() < 1e-10);
    assert!(c.delta > 0.0);
}

#[test]
fn stable_h_matches_literal_formula() {
    let (t, e) = logistic_lgm(15, 4);
    let mut rng = chain_rng(5);
    for gamma in [0.2, 0.9, 1.6] {
        let x = standard_normal_vector(15, &mut rng);
        let y = standard_normal_vector(15, &mut rng);
        let c = lgm_cache(&t, &e, &x, &mut ProductCounter::default()).unwrap();
        let a = lgm_h(&x, &y, &c, &e, gamma);
        let b = h_literal(&x, &y, &c, &e, gamma);
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn zero_eigenvalue_adds_no_log_term() {
    let e = PriorEigen::from_parts(
        DMatrix::identity(3, 3),
        DVector::from_vec(vec![1.0, 2.0, 0.0]),
    )
    .unwrap();
    let c = LgmStepCache {
        delta: 0.3,
        xi: DVector::zeros(3),
        grad_g: DVector::zeros(3),
        g: 0.0,
        x_tilde: DVector::zeros(3),
    };
    let z = DVector::zeros(3);
    let h = lgm_h(&z, &z, &c, &e, 0.5);
    assert!((h + 0.5 * (1.3f64.ln() + 1.6f64.ln())).abs() < 1e-15);
}

#[test]
fn flat_likelihood_gives_pcn_like_moves() {
    let mut rng = chain_rng(6);
    let d = 8;
    let prior = random_spd(d, &mut rng);
    // g(x) = −‖x‖²/2 is absorbed entirely, leaving g̃ ≡ 0.
    let t = make_latent_gaussian_target(
        prior,
        LikelihoodTerm::GaussianRegression {
            observations: DVector::zeros(d),
            noise_var: 1.0,
        },
    )
    .unwrap();
    let e = PriorEigen::new(t.prior_covariance()).unwrap();
    let x = standard_normal_vector(d, &mut rng);
    let c = lgm_cache(&t, &e, &x, &mut ProductCounter::default()).unwrap();
    assert_eq!(c.delta, DELTA_MIN);
    assert!((c.zeta() - e.vectors().tr_mul(&x)).amax() < 1e-12);
    let gamma = 0.4;
    let eps = standard_normal_vector(d, &mut rng);
    let p = lgm_propose_with_noise(&x, &c, &e, gamma, &eps).unwrap();
    let pcn = &x * (1.0 - gamma)
        + e.vectors() * eps.zip_map(e.values(), |z, l| (gi_scale(gamma) * l).sqrt() * z);
    assert!((&p.y - pcn).amax() < 1e-9);
    let mut k = LgmKernel::new(&t, &e, LgmKind::GiMala, gamma, x).unwrap();
    for _ in 0..50 {
        assert!(k.step(&mut rng).unwrap().alpha > 1.0 - 1e-10);
    }
}

#[test]
fn conjugate_unit_step_is_exact_posterior_draw() {
    let mut rng = chain_rng(7);
    let d = 6;
    let prior = random_spd(d, &mut rng);
    let sigma2 = 0.5;
    let y_obs = standard_normal_vector(d, &mut rng);
    let t = make_latent_gaussian_target(
        prior.clone(),
        LikelihoodTerm::GaussianRegression {
            observations: y_obs.clone(),
            noise_var: sigma2,
        },
    )
    .unwrap();
    let e = PriorEigen::new(t.prior_covariance()).unwrap();
    let post_cov = (prior.try_inverse().unwrap() + DMatrix::identity(d, d) / sigma2)
        .try_inverse()
        .unwrap();
    let post_mean = &post_cov * &y_obs / sigma2;
    let x = standard_normal_vector(d, &mut rng) * 3.0;
    let c = lgm_cache(&t, &e, &x, &mut ProductCounter::default()).unwrap();
    let n = 10_000;
    let mut sum = DVector::zeros(d);
    for _ in 0..n {
        sum += lgm_propose(&x, &c, &e, 1.0, &mut rng).unwrap().y;
    }
    let mean = sum / n as f64;
    for j in 0..d {
        let se = (post_cov[(j, j)] / n as f64).sqrt();
        assert!((mean[j] - post_mean[j]).abs() < 3.0 * se, "component {j}");
    }
}

#[test]
fn conjugate_moves_are_always_accepted() {
    let mut rng = chain_rng(8);
    let d = 10;
    let t = make_latent_gaussian_target(
        random_spd(d, &mut rng),
        LikelihoodTerm::GaussianRegression {
            observations: standard_normal_vector(d, &mut rng),
            noise_var: 0.8,
        },
    )
    .unwrap();
    let e = PriorEigen::new(t.prior_covariance()).unwrap();
    for gamma in [0.3, 1.0, 1.8] {
        let mut k = LgmKernel::new(&t, &e, LgmKind::GiMala, gamma, DVector::zeros(d)).unwrap();
        for _ in 0..100 {
            let rec = k.step(&mut rng).unwrap();
            assert!(rec.alpha > 1.0 - 1e-9);
            assert!(rec.accepted);
        }
    }
}

#[test]
fn staying_put_is_accepted() {
    let (t, e) = logistic_lgm(9, 9);
    let x = standard_normal_vector(9, &mut chain_rng(10));
    let mut counter = ProductCounter::default();
    let c = lgm_cache(&t, &e, &x, &mut counter).unwrap();
    let p = LgmProposal {
        y: x.clone(),
        y_tilde: c.x_tilde.clone(),
        mean: x.clone(),
    };
    let (alpha, _) = lgm_accept_prob(&t, &e, &x, &c, &p, 0.7, &mut counter).unwrap();
    assert!((alpha - 1.0).abs() < 1e-12);
}

#[test]
fn fast_path_matches_dense_proposal_and_ratio() {
    let (t, e) = logistic_lgm(20, 11);
    let view = LgmDenseView {
        target: &t,
        eigen: &e,
    };
    let mut rng = chain_rng(12);
    for gamma in [0.3, 0.8, 1.4] {
        let x = standard_normal_vector(20, &mut rng);
        let eps = standard_normal_vector(20, &mut rng);
        let c = lgm_cache(&t, &e, &x, &mut ProductCounter::default()).unwrap();
        let fast = lgm_propose_with_noise(&x, &c, &e, gamma, &eps).unwrap();
        let a = view.preconditioner_at(&x).unwrap();
        let (y, m) = crate::samplers::gimala_propose_with_noise(
            &x,
            &t.grad_log_density(&x),
            &a,
            gamma,
            &eps,
        )
        .unwrap();
        assert!((&fast.mean - &m).amax() < 1e-8);
        assert!((&fast.y - &y).amax() < 1e-8);
        let (alpha, _) =
            lgm_accept_prob(&t, &e, &x, &c, &fast, gamma, &mut ProductCounter::default()).unwrap();
        let spec = ProposalSpec::gi_mala_precond(gamma);
        let dense = crate::samplers::accept_prob(mh_log_ratio(&spec, &view, &x, &y, &m).unwrap());
        assert!((alpha - dense).abs() < 1e-8, "{alpha} vs {dense}");
    }
}

#[test]
fn fast_chains_track_dense_chains() {
    let (t, e) = logistic_lgm(16, 13);
    let view = LgmDenseView {
        target: &t,
        eigen: &e,
    };
    for (kind, spec) in [
        (LgmKind::GiMala, ProposalSpec::gi_mala_precond(0.9)),
        (LgmKind::Mala, ProposalSpec::mala_precond(0.4)),
    ] {
        let mut rng = chain_rng(14);
        let x0 = DVector::zeros(16);
        let mut fast = LgmKernel::new(&t, &e, kind, spec.step_size, x0.clone()).unwrap();
        let mut dense = GenericKernel::new(spec, &view, x0).unwrap();
        let mut accepted = 0;
        for _ in 0..300 {
            let eps = standard_normal_vector(16, &mut rng);
            let u: f64 = rand::Rng::gen(&mut rng);
            let a = fast.step_with_noise(&eps, u).unwrap();
            let b = dense.step_with_noise(&eps, u).unwrap();
            assert!(
                (a.alpha - b.alpha).abs() < 1e-8,
                "{kind:?}: {} vs {}",
                a.alpha,
                b.alpha
            );
            assert_eq!(a.accepted, b.accepted);
            assert!((fast.current() - dense.current()).amax() < 1e-8);
            accepted += a.accepted as usize;
        }
        assert!(
            accepted > 30 && accepted < 300,
            "{kind:?}: {accepted} accepted"
        );
    }
}

#[test]
fn accepted_cache_equals_fresh_cache() {
    let (t, e) = logistic_lgm(14, 15);
    let mut rng = chain_rng(16);
    let mut k = LgmKernel::new(&t, &e, LgmKind::GiMala, 0.7, DVector::zeros(14)).unwrap();
    let mut checked = 0;
    for _ in 0..100 {
        if k.step(&mut rng).unwrap().accepted {
            let fresh = lgm_cache(&t, &e, k.current(), &mut ProductCounter::default()).unwrap();
            assert!((&k.cache().xi - &fresh.xi).amax() < 1e-10);
            assert!((&k.cache().x_tilde - &fresh.x_tilde).amax() < 1e-10);
            assert_eq!(k.cache().delta, fresh.delta);
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn two_products_per_iteration() {
    let (t, e) = logistic_lgm(10, 17);
    let mut rng = chain_rng(18);
    let mut k = LgmKernel::new(&t, &e, LgmKind::GiMala, 0.5, DVector::zeros(10)).unwrap();
    assert_eq!(
        k.counter(),
        ProductCounter {
            kernel: 0,
            init: 2,
            bookkeeping: 0
        }
    );
    for _ in 0..37 {
        k.step(&mut rng).unwrap();
    }
    assert_eq!(
        k.counter(),
        ProductCounter {
            kernel: 74,
            init: 2,
            bookkeeping: 37
        }
    );
}

#[test]
fn cox_simulation_is_reproducible() {
    let cfg = CoxConfig::standard(8);
    assert_eq!(cfg.dim(), 64);
    let e = PriorEigen::new(&cfg.prior().unwrap()).unwrap();
    let a = simulate_cox(cfg, &e, 3).unwrap();
    let b = simulate_cox(cfg, &e, 3).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.latent, b.latent);
    assert!(a.counts.iter().all(|c| *c >= 0.0 && c.fract() == 0.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cox.csv");
    a.write_csv(&path).unwrap();
    let back = CoxDataset::read_csv(&path, cfg).unwrap();
    assert_eq!(back.counts, a.counts);
    assert_eq!(back.latent, a.latent);
}
