use super::*;

fn quartic(sign: f64) -> Polynomial {
    Polynomial::monomial(sign, 4)
}

#[test]
fn polynomial_calculus() {
    let p = Polynomial::new(vec![1.0, -2.0, 0.0, 3.0, 0.0]);
    assert_eq!(p.degree(), Some(3));
    assert_eq!(p.eval(2.0), 1.0 - 4.0 + 24.0);
    assert_eq!(p.derivative().coefficients(), &[-2.0, 0.0, 9.0]);
    assert!(Polynomial::monomial(5.0, 0).derivative().is_zero());
}

#[test]
fn perturbation_validation() {
    assert!(validate_perturbation(&quartic(1.0), 0.0).is_ok());
    assert!(validate_perturbation(&quartic(1.0), 0.01).is_err());
    assert!(validate_perturbation(&quartic(-1.0), 0.01).is_ok());
    assert!(validate_perturbation(&Polynomial::monomial(-1.0, 5), 0.01).is_err());
    assert!(validate_perturbation(&Polynomial::monomial(-1.0, 2), 0.01).is_err());
    assert!(validate_perturbation(&quartic(-1.0), -0.1).is_err());
    assert!(validate_perturbation(&Polynomial::zero(), 0.3).is_ok());
}

#[test]
fn normaliser_matches_gaussian_and_midpoint_sum() {
    let z0 = log_normaliser(&quartic(1.0), 0.0).unwrap();
    assert!((z0 - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    let h = Polynomial::new(vec![0.0, 0.0, 0.0, 0.5, -1.0]);
    let n = 200_000;
    let dx = 2.0 * QUADRATURE_HALF_WIDTH / n as f64;
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let x = -QUADRATURE_HALF_WIDTH + (i as f64 + 0.5) * dx;
            -0.5 * x * x + 0.05 * h.eval(x)
        })
        .collect();
    let riemann = crate::special::log_sum_exp(&terms) + dx.ln();
    assert!((log_normaliser(&h, 0.05).unwrap() - riemann).abs() < 1e-9);
}

#[test]
fn k_of_quartic_under_standard_normal() {
    for sign in [1.0, -1.0] {
        let k = k_constant(&quartic(sign), 0.0).unwrap();
        assert!(!k.degenerate);
        assert!((k.value - 312f64.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn k_of_zero_perturbation_is_degenerate() {
    let k = k_constant(&Polynomial::zero(), 0.0).unwrap();
    assert!(k.degenerate);
    assert_eq!(k.value, 0.0);
}

#[test]
fn k_is_continuous_in_epsilon() {
    let k0 = k_constant(&quartic(-1.0), 0.0).unwrap().value;
    let k1 = k_constant(&quartic(-1.0), 0.001).unwrap().value;
    assert!((k1 - k0).abs() < 0.05 * k0);
    // A first-order expansion: E_ε[φ] ≈ E[φ] + ε Cov(φ, h) with φ = 24x⁴ + 240x².
    // Cov(φ, −x⁴) = −(24(105 − 9) + 240(15 − 3)) = −5184.
    let e = 1e-5;
    let k2 = k_constant(&quartic(-1.0), e).unwrap().value;
    let predicted = (312.0 - 5184.0 * e).sqrt();
    assert!((k2 - predicted).abs() < 1e-3);
}

#[test]
fn fisher_preconditioner_series() {
    let h = quartic(-1.0);
    assert!((fisher_preconditioner(&h, 0.0).unwrap() - 1.0).abs() < 1e-12);
    // E_f[1 − εh″] = 1 + 12ε E_f[x²] with E_f[x²] = 1 − 12ε + O(ε²), so the inverse is
    // 1 − 12ε + 288ε² + O(ε³).
    let e = 1e-4;
    let a = fisher_preconditioner(&h, e).unwrap();
    let series = 1.0 - 12.0 * e + 288.0 * e * e;
    assert!((a - series).abs() < 1e-8, "{a} vs {series}");
}

#[test]
fn objective_limits() {
    for d in [10, 1000] {
        let kappa = 2.0 / d as f64;
        assert!(speed_objective(1e-9, 0.05, d, kappa, 2.0, 0.001) < 1e-8);
        assert!(speed_objective(2.0 - 1e-9, 0.05, d, kappa, 2.0, 0.001) < 1e-8);
        let v = speed_objective(0.7, 0.0, d, kappa, 2.0, 0.001);
        assert!((v - (1.4 - 0.49) * 0.999).abs() < 1e-12);
    }
}

#[test]
fn gaussian_case_optimum_is_unit_step() {
    for d in [1, 10, 10_000] {
        let opt = optimize_gamma(0.0, d, 2.0 / d as f64, 2.0, 0.001).unwrap();
        assert!((opt.gamma - 1.0).abs() < 1e-5);
        assert_eq!(opt.acceptance, 1.0);
    }
}

#[test]
fn infeasible_slack_is_reported() {
    assert!(optimize_gamma(0.1, 10, 0.2, 2.0, 3.0).is_err());
}

#[test]
fn optimum_is_a_local_maximum() {
    for (eps, d) in [(0.02, 100), (0.08, 10_000), (0.05, 10)] {
        let kappa = 2.0 / d as f64;
        let opt = optimize_gamma(eps, d, kappa, 2.0, 0.001).unwrap();
        let f = |lg: f64| log_speed_objective(lg.exp(), eps, d, kappa, 2.0, 0.001);
        let (c, h) = (opt.gamma.ln(), 1e-3);
        assert!(f(c + h) - 2.0 * f(c) + f(c - h) < 0.0);
        assert!(f(c) >= f(c + h) && f(c) >= f(c - h));
    }
}

#[test]
fn curve_is_monotone_on_default_grid() {
    let curve = scaling_curve(
        &DEFAULT_EPSILONS,
        &DEFAULT_DIMS,
        Kappa::PerDimension(2.0),
        2.0,
        0.001,
    )
    .unwrap();
    assert_eq!(curve.points.len(), 40);
    for d in DEFAULT_DIMS {
        let row = curve.at_dim(d);
        assert!(
            row.windows(2).all(|w| w[1].acceptance < w[0].acceptance),
            "d={d}"
        );
        assert!(
            row.windows(2).all(|w| w[1].gamma_star < w[0].gamma_star),
            "d={d}"
        );
    }
    for &eps in &DEFAULT_EPSILONS[1..] {
        let col = curve.at_epsilon(eps);
        assert!(
            col.windows(2).all(|w| w[1].acceptance < w[0].acceptance),
            "ε={eps}"
        );
        assert!(
            col.windows(2).all(|w| w[1].gamma_star < w[0].gamma_star),
            "ε={eps}"
        );
    }
    for p in &curve.points {
        assert!(p.gamma_star > 0.0 && p.gamma_star < 2.0);
        assert!(p.acceptance > 0.0 && p.acceptance <= 1.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    curve.write_csv(&path).unwrap();
    assert_eq!(ScalingCurve::read_csv(&path).unwrap(), curve);
}

#[test]
fn empty_grid_is_rejected() {
    assert!(scaling_curve(&[], &DEFAULT_DIMS, Kappa::default(), 2.0, 0.001).is_err());
    assert!(scaling_curve(&[0.1], &[], Kappa::default(), 2.0, 0.001).is_err());
}

#[test]
fn target_gradient_is_consistent() {
    let t = PerturbedGaussianTarget::new(Polynomial::new(vec![0.0, 0.0, 0.0, 0.3, -1.0]), 0.05, 5)
        .unwrap();
    let x = DVector::from_vec(vec![0.3, -1.2, 0.8, 2.0, -0.1]);
    assert!(crate::targets::gradient_check(&t, &x) < 1e-6);
}

#[test]
fn gaussian_case_accepts_everything() {
    let spec = PerturbedGaussianSpec {
        h: quartic(-1.0),
        epsilon: 0.0,
        d: 20,
        kappa: Kappa::default(),
        m: 0.001,
    };
    for p in empirical_acceptance_curve(&spec, &[0.2, 1.0, 1.8], 500, 1).unwrap() {
        assert!(p.empirical > 1.0 - 1e-12);
        assert_eq!(p.predicted, 1.0);
    }
}

#[test]
fn empirical_acceptance_follows_limit_formula_qualitatively() {
    let gammas = [0.1, 0.3, 0.5];
    let run = |eps: f64| {
        let spec = PerturbedGaussianSpec {
            h: quartic(-1.0),
            epsilon: eps,
            d: 100,
            kappa: Kappa::default(),
            m: 0.001,
        };
        empirical_acceptance_curve(&spec, &gammas, 2000, 2).unwrap()
    };
    let (mild, strong) = (run(0.02), run(0.05));
    for c in [&mild, &strong] {
        assert!(c
            .windows(2)
            .all(|w| w[1].empirical < w[0].empirical && w[1].predicted < w[0].predicted));
        assert!(c.iter().all(|p| p.empirical > 0.0 && p.empirical < 1.0));
    }
    for (m, s) in mild.iter().zip(&strong) {
        assert!(s.empirical < m.empirical);
    }
    // The limit is accurate for small εγ^1.5√d and deteriorates as the perturbation grows.
    for p in &mild[..2] {
        assert!(
            (p.empirical - p.predicted).abs() < 0.02,
            "γ={}: {} vs {}",
            p.gamma,
            p.empirical,
            p.predicted
        );
    }
}

#[test]
fn spec_round_trips_through_json() {
    let spec = PerturbedGaussianSpec {
        h: Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, -1.0]),
        epsilon: 0.01,
        d: 10,
        kappa: Kappa::Fixed(0.2),
        m: 0.001,
    };
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(
        serde_json::from_str::<PerturbedGaussianSpec>(&text).unwrap(),
        spec
    );
    spec.validate().unwrap();
    let opt = spec.optimal_step().unwrap();
    assert!(opt.gamma > 0.0 && opt.gamma < 2.0);
}
