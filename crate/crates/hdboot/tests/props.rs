use hdboot::bootstrap::{conditional_quantile, BootstrapDraws, BootstrapScheme};
use hdboot::gaussian::psd_factor;
use hdboot::lasso::{lasso_fit, soft_threshold, RegressionData};
use hdboot::stats::{ks_distance, CovMatrix};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_distance_is_a_bounded_metric(
        a in finite_vec(1..40),
        b in finite_vec(1..40),
        c in finite_vec(1..40),
    ) {
        let dab = ks_distance(&a, &b).unwrap();
        let dba = ks_distance(&b, &a).unwrap();
        let daa = ks_distance(&a, &a).unwrap();
        let dac = ks_distance(&a, &c).unwrap();
        let dcb = ks_distance(&c, &b).unwrap();
        prop_assert!(daa == 0.0);
        prop_assert!((dab - dba).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&dab));
        prop_assert!(dab <= dac + dcb + 1e-12, "triangle: {dab} > {dac} + {dcb}");
    }

    #[test]
    fn psd_factor_squares_back_to_the_input(
        p in 2usize..9,
        raw in prop::collection::vec(-3.0..3.0f64, 81),
        boost in 0.0..2.0f64,
    ) {
        let g = Array2::from_shape_fn((p, p), |(i, j)| raw[i * 9 + j]);
        let mut s = g.dot(&g.t());
        for i in 0..p {
            s[[i, i]] += boost;
        }
        // make the matrix exactly symmetric despite float products
        let s = (&s + &s.t()) / 2.0;
        let cov = CovMatrix::new(s.clone()).unwrap();
        let f = psd_factor(&cov).unwrap();
        prop_assert!(f.rank() <= p);
        let back = f.factor().dot(&f.factor().t());
        let scale = s.diag().iter().cloned().fold(1e-12, f64::max);
        for i in 0..p {
            for j in 0..p {
                prop_assert!(
                    (back[[i, j]] - s[[i, j]]).abs() <= 1e-8 * scale,
                    "({i},{j}): {} vs {}",
                    back[[i, j]],
                    s[[i, j]]
                );
            }
        }
        if boost > 0.01 {
            prop_assert_eq!(f.rank(), p, "strictly positive definite input has full rank");
        }
    }

    #[test]
    fn conditional_quantiles_are_monotone_order_statistics(
        values in finite_vec(1..200),
        l1 in 0.01..0.99f64,
        l2 in 0.01..0.99f64,
    ) {
        let draws =
            BootstrapDraws::from_scalars(values.clone(), BootstrapScheme::Empirical, 0).unwrap();
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        let qlo = conditional_quantile(&draws, lo).unwrap().value;
        let qhi = conditional_quantile(&draws, hi).unwrap().value;
        prop_assert!(qlo <= qhi);
        prop_assert!(values.contains(&qlo), "quantile must be a sample point");
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= qlo && qhi <= max);
        // the order statistic dominates at least ceil(level*b) sample points
        let b = values.len() as f64;
        let covered = values.iter().filter(|v| **v <= qlo).count() as f64;
        prop_assert!(covered + 1e-9 >= (lo * b).ceil().min(b).max(1.0));
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -100.0..100.0f64, t in 0.0..50.0f64) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!((z.abs() - s.abs() - t.min(z.abs())).abs() < 1e-12);
        prop_assert_eq!(soft_threshold(z, 0.0), z);
    }

    #[test]
    fn lasso_solutions_satisfy_the_kkt_conditions(
        n in 6usize..16,
        p in 1usize..6,
        seed_vals in prop::collection::vec(-2.0..2.0f64, 16 * 6 + 16),
        lambda in 0.02..2.0f64,
    ) {
        let x = Array2::from_shape_fn((n, p), |(i, j)| seed_vals[i * 6 + j]);
        let y = Array1::from_iter((0..n).map(|i| seed_vals[16 * 6 + i]));
        let d = RegressionData::new(y, x).unwrap();
        let fit = lasso_fit(&d, lambda, 1e-12, 200_000).unwrap();
        // objective n^-1 |y - Xb|^2 + lambda |b|_1: at a minimum the smooth
        // gradient g_j = -2/n x_j'(y - Xb) obeys |g_j| <= lambda, with
        // equality (and sign opposite to b_j) on the active set
        let resid = d.y() - &d.x().dot(&fit.beta);
        for j in 0..p {
            let g = -2.0 * d.x().column(j).dot(&resid) / n as f64;
            if fit.beta[j] != 0.0 {
                prop_assert!(
                    (g + lambda * fit.beta[j].signum()).abs() < 1e-6 * lambda.max(1.0),
                    "active coordinate {j}: gradient {g}, penalty {lambda}"
                );
            } else {
                prop_assert!(
                    g.abs() <= lambda * (1.0 + 1e-9) + 1e-9,
                    "inactive coordinate {j}: |{g}| > {lambda}"
                );
            }
        }
    }
}
