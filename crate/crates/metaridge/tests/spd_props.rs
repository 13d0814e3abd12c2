mod common;

use common::{gaussian, rel_diff, rng, spd, unit_symmetric};
use metaridge::spd::*;
use metaridge::SymmetricMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sqrt_squares_back(seed in any::<u64>(), p in 1usize..12) {
        let q = spd(p, 0.1, 10.0, &mut rng(seed));
        let s = spd_sqrt(&q).unwrap();
        prop_assert!(rel_diff(&(s.as_matrix() * s.as_matrix()), q.as_matrix()) < 1e-10);
    }

    #[test]
    fn second_order_retraction_is_spd_over_wide_range(seed in any::<u64>(), p in 1usize..10, scale in 0.0f64..10.0) {
        let mut r = rng(seed);
        let q = spd(p, 0.5, 2.0, &mut r);
        let xi = unit_symmetric(p, &mut r).scaled(scale * q.frobenius_norm());
        prop_assert!(retract_second_order(&q, &xi).is_ok());
    }

    #[test]
    fn exp_retraction_is_spd_within_condition_range(seed in any::<u64>(), p in 1usize..10, scale in 0.0f64..1.0) {
        let mut r = rng(seed);
        let q = spd(p, 0.5, 2.0, &mut r);
        // ‖Q^{-1/2}ΞQ^{-1/2}‖ ≤ 12, so the condition number stays below 4e^{24} < 1e12
        let xi = unit_symmetric(p, &mut r).scaled(6.0 * scale);
        prop_assert!(retract_exp(&q, &xi).is_ok());
    }

    #[test]
    fn retraction_second_order_remainder_is_bounded(seed in any::<u64>(), p in 2usize..8) {
        let mut r = rng(seed);
        let q = spd(p, 0.5, 2.0, &mut r);
        let xi = unit_symmetric(p, &mut r);
        let ratio = |t: f64| {
            let out = retract_second_order(&q, &xi.scaled(t)).unwrap();
            (out.as_matrix() - q.as_matrix() - xi.as_matrix() * t).norm() / (t * t)
        };
        let (a, b, c) = (ratio(1e-2), ratio(1e-3), ratio(1e-4));
        prop_assert!((a - c).abs() <= 0.05 * c + 1e-6);
        prop_assert!((b - c).abs() <= 0.01 * c + 1e-6);
    }

    #[test]
    fn retractions_agree_to_third_order(seed in any::<u64>(), p in 2usize..8) {
        let mut r = rng(seed);
        let q = spd(p, 0.5, 2.0, &mut r);
        let xi = unit_symmetric(p, &mut r);
        let gap = |t: f64| {
            let a = retract_exp(&q, &xi.scaled(t)).unwrap();
            let b = retract_second_order(&q, &xi.scaled(t)).unwrap();
            (a.as_matrix() - b.as_matrix()).norm()
        };
        // halving t shrinks an O(t³) gap by about 8
        let shrink = gap(2e-2) / gap(1e-2);
        prop_assert!(shrink > 6.0 && shrink < 10.0, "shrink {}", shrink);
    }

    #[test]
    fn metric_is_positive(seed in any::<u64>(), p in 1usize..10) {
        let mut r = rng(seed);
        let q = spd(p, 0.1, 10.0, &mut r);
        let a = unit_symmetric(p, &mut r);
        prop_assert!(affine_metric(&q, &a, &a).unwrap() > 0.0);
    }

    #[test]
    fn metric_is_affine_invariant(seed in any::<u64>(), p in 1usize..8) {
        let mut r = rng(seed);
        let q = spd(p, 0.5, 2.0, &mut r);
        let a = unit_symmetric(p, &mut r);
        let b = unit_symmetric(p, &mut r);
        // a generic invertible map with singular values in [0.5, 3]
        let u = gaussian(p, p, &mut r).qr().q();
        let v = gaussian(p, p, &mut r).qr().q();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(p, |i, _| 0.5 + 2.5 * i as f64 / p as f64));
        let m = u * s * v.transpose();
        let push = |x: &DMatrix<f64>| symmetrize(&(&m * x * m.transpose()));
        let q2 = metaridge::SpdMatrix::new(push(q.as_matrix()).into_matrix()).unwrap();
        let lhs = affine_metric(&q2, &push(a.as_matrix()), &push(b.as_matrix())).unwrap();
        let rhs = affine_metric(&q, &a, &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-3));
    }

    #[test]
    fn geodesic_midpoint_is_symmetric(seed in any::<u64>(), p in 1usize..8) {
        let mut r = rng(seed);
        let a = spd(p, 0.2, 5.0, &mut r);
        let b = spd(p, 0.2, 5.0, &mut r);
        let ab = geodesic(&a, &b, 0.5).unwrap();
        let ba = geodesic(&b, &a, 0.5).unwrap();
        prop_assert!(rel_diff(ab.as_matrix(), ba.as_matrix()) < 1e-9);
    }

    #[test]
    fn geodesic_from_identity_is_matrix_power(seed in any::<u64>(), p in 1usize..8, t in 0.0f64..1.0) {
        let b = spd(p, 0.2, 5.0, &mut rng(seed));
        let g = geodesic(&metaridge::SpdMatrix::identity(p), &b, t).unwrap();
        prop_assert!(rel_diff(g.as_matrix(), b.pow(t).unwrap().as_matrix()) < 1e-10);
    }

    #[test]
    fn symmetrize_is_elementwise_average(seed in any::<u64>(), p in 1usize..8) {
        let m = gaussian(p, p, &mut rng(seed));
        let s = symmetrize(&m);
        for i in 0..p {
            for j in 0..p {
                prop_assert!((s.as_matrix()[(i, j)] - 0.5 * (m[(i, j)] + m[(j, i)])).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let q = metaridge::SpdMatrix::identity(2);
    let xi = SymmetricMatrix::identity(3);
    assert!(matches!(retract_second_order(&q, &xi), Err(metaridge::Error::DimensionMismatch(_))));
    assert!(matches!(retract_exp(&q, &xi), Err(metaridge::Error::DimensionMismatch(_))));
    assert!(matches!(affine_metric(&q, &xi, &xi), Err(metaridge::Error::DimensionMismatch(_))));
}
