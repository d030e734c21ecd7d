use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use richex::analysis::loglog_slope;
use richex::experiments::{vandermonde_weights, ExperimentConfig};
use richex::extrapolation::{combine, richardson_weights, spectral_filter, spectral_filter_direct, MAX_ORDER};
use richex::smoothing::{dyadic_grid, simplex_projection, Penalty, PolyhedralFunction};
use richex::solvers::{running_average, tail_average};

fn vector(max_len: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-100.0..100.0f64, 1..=max_len).prop_map(DVector::from_vec)
}

proptest! {
    #[test]
    fn weights_satisfy_moment_identities(m in 0..=MAX_ORDER) {
        let w = richardson_weights(m).unwrap();
        prop_assert!(w.constraint_residuals().iter().all(|&r| r == 0));
        prop_assert_eq!(w.l1_norm(), (1i64 << (m + 1)) - 1);
    }

    #[test]
    fn weights_match_numeric_solve(m in 0usize..=12) {
        let w = richardson_weights(m).unwrap();
        let numeric = vandermonde_weights(m);
        let scale = w.l1_norm() as f64;
        prop_assert!((DVector::from_vec(w.to_f64()) - numeric).amax() <= 1e-12 * scale);
    }

    #[test]
    fn combining_equal_estimates_is_identity(m in 0usize..=10, x in vector(6)) {
        let w = richardson_weights(m).unwrap();
        let out = combine(&w, &vec![x.clone(); m + 1]).unwrap();
        prop_assert!((out - &x).amax() <= 1e-9 * x.amax().max(1.0) * w.l1_norm() as f64);
    }

    #[test]
    fn combining_cancels_low_order_polynomials(m in 1usize..=8, coeffs in prop::collection::vec(-5.0..5.0f64, 9)) {
        // estimates p(i) with deg p ≤ m combine to p(0)
        let w = richardson_weights(m).unwrap();
        let p = |t: f64| coeffs[..=m].iter().rev().fold(0.0, |acc, &c| acc * t + c);
        let estimates: Vec<DVector<f64>> = (1..=m + 1).map(|i| DVector::from_element(1, p(i as f64))).collect();
        let out = combine(&w, &estimates).unwrap()[0];
        let scale = (m as f64 + 1.0).powi(m as i32) * 5.0 * w.l1_norm() as f64;
        prop_assert!((out - coeffs[0]).abs() <= 1e-13 * scale, "{} vs {}", out, coeffs[0]);
    }

    #[test]
    fn spectral_filter_is_a_monotone_filter(m in 0usize..=8, e in -6.0..6.0f64) {
        let mu = 10f64.powf(e);
        let s = spectral_filter(mu, m).unwrap();
        prop_assert!(s > 0.0 && s <= 1.0);
        prop_assert!(spectral_filter(mu * 1.5, m).unwrap() >= s);
        prop_assert!(spectral_filter(mu, m + 1).unwrap() >= s);
        let direct = spectral_filter_direct(mu, m).unwrap();
        prop_assert!((direct - s).abs() <= 1e-10 * s);
    }

    #[test]
    fn tail_average_identity(seq in prop::collection::vec(vector(1), 2..60)) {
        let k = seq.len() - seq.len() % 2;
        let direct = tail_average(&seq[..k], k).unwrap();
        let identity = running_average(&seq, k).unwrap() * 2.0 - running_average(&seq, k / 2).unwrap();
        prop_assert!((direct - identity).amax() <= 1e-12 * 100.0);
    }

    #[test]
    fn slope_fit_recovers_power_laws(p in -4.0..4.0f64, c in 0.01..100.0f64) {
        let xs: Vec<f64> = (0..40).map(|i| 2f64.powf(i as f64 / 4.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
        let fit = loglog_slope(&xs, &ys, 0.5).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn simplex_projection_lands_on_the_simplex(v in vector(10)) {
        let p = simplex_projection(&v).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        let again = simplex_projection(&p).unwrap();
        prop_assert!((again - &p).amax() < 1e-12);
    }

    #[test]
    fn smoothing_brackets_the_max(
        rows in 1usize..6,
        entries in prop::collection::vec(-3.0..3.0f64, 30),
        x in prop::collection::vec(-3.0..3.0f64, 5),
        lambda in 1e-3..10.0f64,
    ) {
        let a = DMatrix::from_fn(rows, 5, |i, j| entries[i * 5 + j]);
        let g = PolyhedralFunction::new(a, DVector::zeros(rows)).unwrap();
        let x = DVector::from_vec(x);
        let exact = g.value(&x);
        for penalty in [Penalty::Quadratic, Penalty::Entropic] {
            let (lo, hi) = penalty.range(rows);
            let (smooth, _, eta) = g.smoothed(&x, lambda, penalty);
            prop_assert!((eta.sum() - 1.0).abs() < 1e-9);
            let gap = exact - smooth;
            let tol = 1e-9 * (1.0 + exact.abs());
            prop_assert!(gap >= lambda * lo - tol && gap <= lambda * hi + tol, "{:?}: gap {}", penalty, gap);
        }
    }

    #[test]
    fn dyadic_grid_is_geometric(lo in -20i32..0, span in 0i32..6, per in 1u32..6) {
        let g = dyadic_grid(lo, lo + span, per);
        prop_assert_eq!(g.len(), (span as u32 * per + 1) as usize);
        let ratio = 2f64.powf(1.0 / per as f64);
        prop_assert!(g.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
    }

    #[test]
    fn config_hash_ignores_key_order(seed in 0u64..1000, n in 10usize..1000) {
        let seed = seed.to_string();
        let n = n.to_string();
        let a = ExperimentConfig::from_pairs([("experiment", "acc-gd"), ("seed", seed.as_str()), ("d", n.as_str())]).unwrap();
        let b = ExperimentConfig::from_pairs([("d", n.as_str()), ("experiment", "acc-gd"), ("seed", seed.as_str())]).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
    }
}
