mod common;

use common::{gaussian, rng, spd, unit_symmetric};
use metaridge::model::{build_tridiagonal, sample_covariance};
use metaridge::risk::*;
use metaridge::spd::retract_second_order;
use metaridge::{SpdMatrix, SymmetricMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Square root through an explicit eigendecomposition, independent of the
/// library's routine.
fn eig_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

struct Instance {
    omega: SpdMatrix,
    sigma: SpdMatrix,
    sigma_hat: SymmetricMatrix,
    n: usize,
}

fn instance(seed: u64, p: usize, n: usize) -> Instance {
    let mut r = rng(seed);
    let omega = spd(p, 0.3, 4.0, &mut r);
    let sigma = spd(p, 0.3, 3.0, &mut r);
    let half = eig_sqrt(sigma.as_matrix());
    let x = gaussian(n, p, &mut r) * half;
    Instance { omega, sigma, sigma_hat: sample_covariance(&x), n }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bias_terms_combine(seed in 0u64..100_000, lambda in 0.05f64..5.0, sigma2 in 0.1f64..3.0) {
        let (p, n) = (7, 5);
        let inst = instance(seed, p, n);
        let r = oracle_risk_exact(&inst.omega, &inst.sigma, &inst.sigma_hat, sigma2, lambda, n).unwrap();
        let half = eig_sqrt(inst.omega.as_matrix());
        let lam = &half * inst.sigma.as_matrix() * &half;
        let lam_tilde = &half * inst.sigma_hat.as_matrix() * &half;
        let res = (lam_tilde + DMatrix::identity(p, p) * lambda).try_inverse().unwrap();
        let t = (lam * &res * &res).trace() / p as f64;
        let want = (lambda * lambda - lambda * p as f64 * sigma2 / n as f64) * t;
        prop_assert!((r.bias + r.variance_correction - want).abs() <= 1e-10 * want.abs().max(r.bias.abs()));
        prop_assert_eq!(r.noise, sigma2);
    }

    #[test]
    fn plugin_at_truth_is_oracle(seed in 0u64..100_000, lambda in 0.05f64..5.0, sigma2 in 0.1f64..3.0) {
        let inst = instance(seed, 6, 9);
        let o = oracle_risk_exact(&inst.omega, &inst.sigma, &inst.sigma_hat, sigma2, lambda, inst.n).unwrap();
        let q = plugin_risk_exact(&inst.omega, &inst.omega, &inst.sigma, &inst.sigma_hat, sigma2, lambda, inst.n).unwrap();
        prop_assert!(rel(q.bias, o.bias) < 1e-10);
        prop_assert!(rel(q.variance_correction, o.variance_correction) < 1e-10);
        prop_assert!(rel(q.variance, o.variance) < 1e-10);
    }

    #[test]
    fn both_plugin_forms_agree(seed in 0u64..100_000, lambda in 0.05f64..5.0) {
        let inst = instance(seed, 6, 4);
        let w = spd(6, 0.5, 2.0, &mut rng(seed + 1));
        let a = plugin_risk_exact(&inst.omega, &w, &inst.sigma, &inst.sigma_hat, 1.0, lambda, inst.n).unwrap();
        let b = plugin_risk_inverse_form(&inst.omega, &w, &inst.sigma, &inst.sigma_hat, 1.0, lambda, inst.n).unwrap();
        prop_assert!(rel(a.total, b.total) < 1e-9);
        prop_assert!(rel(a.bias, b.bias) < 1e-9);
    }

    #[test]
    fn companion_identities_round_trip(v in 0.01f64..10.0, vp in 0.01f64..10.0, lambda in 0.01f64..10.0, gamma in 0.1f64..10.0) {
        let (s, sp) = silverstein_convert(v, vp, lambda, gamma);
        let (v2, vp2) = silverstein_inverse(s, sp, lambda, gamma);
        prop_assert!((v2 - v).abs() <= 1e-12 * v.abs().max(1.0 / lambda));
        prop_assert!((vp2 - vp).abs() <= 1e-12 * vp.abs().max(1.0 / (lambda * lambda)));
    }
}

#[test]
fn huge_penalty_leaves_null_bias() {
    let inst = instance(5, 6, 4);
    let r = oracle_risk_exact(&inst.omega, &inst.sigma, &inst.sigma_hat, 1.0, 1e6, inst.n).unwrap();
    let want = (inst.sigma.as_matrix() * inst.omega.as_matrix()).trace() / 6.0;
    assert!(rel(r.bias, want) < 1e-4);
    assert!(r.variance.abs() < 1e-5 && r.variance_correction.abs() < 1e-5);
}

#[test]
fn true_weight_is_optimal_at_matched_penalty() {
    let (p, n, sigma2) = (16usize, 12usize, 1.0);
    let lambda = optimal_lambda_finite(p, n, sigma2, 1.0);
    let mut r = rng(201);
    let omega = spd(p, 0.5, 4.0, &mut r);
    let sigma = SpdMatrix::identity(p);
    let sigma_hat = sample_covariance(&gaussian(n, p, &mut r));
    let best = plugin_risk_exact(&omega, &omega, &sigma, &sigma_hat, sigma2, lambda, n).unwrap().total;
    for eps in [0.1, 0.5] {
        for _ in 0..100 {
            let q = retract_second_order(&omega, &unit_symmetric(p, &mut r).scaled(eps)).unwrap();
            let risk = plugin_risk_exact(&omega, &q, &sigma, &sigma_hat, sigma2, lambda, n).unwrap().total;
            assert!(best <= risk + 1e-10, "{best} > {risk}");
        }
    }
    let c = 1.7;
    let scaled = plugin_risk_exact(&omega, &omega.scaled(c).unwrap(), &sigma, &sigma_hat, sigma2, c * lambda, n).unwrap();
    assert!(rel(scaled.total, best) < 1e-10);

    let g = risk_weight_gradient(&omega, &omega, &sigma, &sigma_hat, sigma2, lambda, n).unwrap();
    assert!(g.frobenius_norm() < 1e-8, "{}", g.frobenius_norm());
}

#[test]
fn weight_gradient_matches_finite_differences() {
    let inst = instance(211, 5, 4);
    let (sigma2, lambda) = (0.8, 0.6);
    let q = spd(5, 0.5, 2.0, &mut rng(212));
    let g = risk_weight_gradient(&inst.omega, &q, &inst.sigma, &inst.sigma_hat, sigma2, lambda, inst.n).unwrap();
    let p_mat = q.inverse().into_matrix();
    let risk_at = |pm: &DMatrix<f64>| {
        let w = SpdMatrix::new(pm.clone()).unwrap().inverse();
        plugin_risk_exact(&inst.omega, &w, &inst.sigma, &inst.sigma_hat, sigma2, lambda, inst.n).unwrap().total
    };
    let h = 1e-6;
    for i in 0..5 {
        for j in i..5 {
            let mut e = DMatrix::zeros(5, 5);
            e[(i, j)] = h;
            e[(j, i)] = h;
            let fd = (risk_at(&(&p_mat + &e)) - risk_at(&(&p_mat - &e))) / (2.0 * h);
            let an = g.as_matrix()[(i, j)];
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "({i},{j}) {fd} vs {an}");
        }
    }
}

#[test]
fn transforms_are_positive_with_consistent_derivative() {
    let laws = [
        SpectralLaw::PointMass(1.0),
        SpectralLaw::PointMass(0.5),
        SpectralLaw::ShiftedArcsine { center: 16.0, halfwidth: 10.0 },
        SpectralLaw::PowerTransformedArcsine { center: 16.0, halfwidth: 10.0, kappa: 0.5 },
        SpectralLaw::EmpiricalEigs(vec![0.5, 1.0, 3.0, 7.0]),
    ];
    for law in &laws {
        for gamma in [0.5, 1.5, 3.0] {
            for lambda in [0.2, 1.0, 4.0] {
                let e = fixed_point_stieltjes(law, gamma, lambda, 10_000, 1e-14).unwrap();
                assert!(e.s > 0.0 && e.s_prime > 0.0 && e.v > 0.0, "{law:?} {gamma} {lambda}");
                let h = 1e-4 * lambda;
                let up = fixed_point_stieltjes(law, gamma, lambda + h, 10_000, 1e-14).unwrap();
                let down = fixed_point_stieltjes(law, gamma, lambda - h, 10_000, 1e-14).unwrap();
                let fd = -(up.s - down.s) / (2.0 * h);
                assert!(rel(e.s_prime, fd) < 1e-4, "{law:?} {gamma} {lambda}: {} vs {fd}", e.s_prime);
            }
        }
    }
}

#[test]
fn limiting_risk_falls_then_rises_around_optimum() {
    let (gamma, sigma2) = (2.0, 1.5);
    let law = SpectralLaw::ShiftedArcsine { center: 2.0, halfwidth: 1.0 };
    let risk = |lambda: f64| limiting_risk(&fixed_point_stieltjes(&law, gamma, lambda, 10_000, 1e-14).unwrap(), sigma2).unwrap();
    let star = optimal_lambda_asymptotic(gamma, sigma2);
    let grid: Vec<f64> = (1..=60).map(|k| 0.1 * 1.1f64.powi(k)).collect();
    let values: Vec<f64> = grid.iter().map(|&l| risk(l)).collect();
    for (w, v) in grid.windows(2).zip(values.windows(2)) {
        if w[1] <= star {
            assert!(v[1] < v[0], "not decreasing at {}", w[1]);
        } else if w[0] >= star {
            assert!(v[1] > v[0], "not increasing at {}", w[0]);
        }
    }
}

#[test]
fn risk_is_continuous_in_coefficient_covariance() {
    let inst = instance(221, 6, 4);
    let w = spd(6, 0.5, 2.0, &mut rng(222));
    let base = plugin_risk_exact(&inst.omega, &w, &inst.sigma, &inst.sigma_hat, 1.0, 0.7, inst.n).unwrap().total;
    let mut last = f64::INFINITY;
    for t in [1e-1, 1e-2, 1e-3, 1e-4] {
        let shifted = SpdMatrix::new(inst.omega.as_matrix() + DMatrix::identity(6, 6) * t).unwrap();
        let gap = (plugin_risk_exact(&shifted, &w, &inst.sigma, &inst.sigma_hat, 1.0, 0.7, inst.n).unwrap().total - base).abs();
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-3);
}

/// Nonzero eigenvalues of Λ̃ through the n×n companion XΩXᵀ/n, padded with zeros.
fn padded_spectrum(x: &DMatrix<f64>, omega_x: &DMatrix<f64>, p: usize) -> Vec<f64> {
    let n = x.nrows();
    let companion = (x * omega_x.transpose()) / n as f64;
    let mut eigs: Vec<f64> = companion.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    eigs.resize(p, 0.0);
    eigs
}

#[test]
fn empirical_transform_matches_fixed_point_at_large_dimension() {
    let (p, n, lambda) = (2000usize, 1000usize, 1.0);
    let gamma = p as f64 / n as f64;
    let mut r = rng(231);
    let x = gaussian(n, p, &mut r);
    let (s, _) = stieltjes_from_eigs(&padded_spectrum(&x, &x, p), lambda).unwrap();
    let limit = fixed_point_stieltjes(&SpectralLaw::PointMass(1.0), gamma, lambda, 10_000, 1e-14).unwrap();
    assert!((s - limit.s).abs() < 1e-2, "{s} vs {}", limit.s);

    let omega = build_tridiagonal(p, 16.0, 5.0).unwrap();
    let x_omega = &x * omega.as_matrix();
    let (s, _) = stieltjes_from_eigs(&padded_spectrum(&x, &x_omega, p), lambda).unwrap();
    let arcsine = SpectralLaw::ShiftedArcsine { center: 16.0, halfwidth: 10.0 };
    let limit = fixed_point_stieltjes(&arcsine, gamma, lambda, 10_000, 1e-14).unwrap();
    assert!((s - limit.s).abs() < 1e-2, "{s} vs {}", limit.s);
    assert!(limit.s > 0.0 && limit.v > 0.0);
}

#[test]
fn limiting_risk_tracks_exact_risk_at_large_dimension() {
    let (p, n, sigma2, lambda) = (2000usize, 1000usize, 1.5, 1.2);
    let gamma = p as f64 / n as f64;
    let x = gaussian(n, p, &mut rng(241));
    let identity = SpdMatrix::identity(p);
    let exact = oracle_risk_exact(&identity, &identity, &sample_covariance(&x), sigma2, lambda, n).unwrap().total;
    let limit = limiting_risk(&fixed_point_stieltjes(&SpectralLaw::PointMass(1.0), gamma, lambda, 10_000, 1e-14).unwrap(), sigma2).unwrap();
    assert!(rel(exact, limit) < 0.02, "{exact} vs {limit}");
    assert!(rel(limit, mp_law_risk(lambda, gamma, sigma2, 1.0)) < 1e-8);
}

#[test]
fn monte_carlo_risk_matches_conditional_risk() {
    let p = 8;
    let mut r = rng(251);
    let sigma = spd(p, 0.5, 2.0, &mut r);
    let beta = DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal));
    let beta_hat = &beta + DVector::from_fn(p, |_, _| 0.3 * r.sample::<f64, _>(StandardNormal));
    let want = conditional_risk(&beta_hat, &beta, &sigma, 0.7).unwrap();
    for (m, k) in [(100_000usize, 3.0), (200, 5.0)] {
        let est = empirical_risk_with_error(&beta_hat, &beta, &sigma, 0.7, m, &mut r).unwrap();
        assert!((est.mean - want).abs() < k * est.std_error, "m={m}: {} vs {want}", est.mean);
    }
    assert_eq!(conditional_risk(&beta, &beta, &sigma, 0.7).unwrap(), 0.7);
}
