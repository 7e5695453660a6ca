use std::f64::consts::TAU;

use hftp::spectral::{bin_grid, dft, fdr_correct, full_dft, peak_test_curves, Complex64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn naive(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| Complex64::from_polar(v, -TAU * (k * t) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 2..=max_len)
}

proptest! {
    #[test]
    fn parseval(x in series(300)) {
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let spec: f64 = full_dft(&x).unwrap().iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
        prop_assert!((energy - spec).abs() <= 1e-6 * energy.max(1e-12), "{energy} vs {spec}");
    }

    #[test]
    fn linearity(pair in (2usize..200).prop_flat_map(|n| {
        (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n))
    }), a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let (x, y) = pair;
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (sx, sy, sm) = (dft(&x, 4.0).unwrap(), dft(&y, 4.0).unwrap(), dft(&mix, 4.0).unwrap());
        for k in 0..sm.coeffs().len() {
            let expect = sx.coeffs()[k] * a + sy.coeffs()[k] * b;
            prop_assert!((sm.coeffs()[k] - expect).norm() <= 1e-9, "bin {k}");
        }
    }

    #[test]
    fn matches_naive_oracle(x in series(64)) {
        let s = dft(&x, 1.0).unwrap();
        let full = naive(&x);
        prop_assert_eq!(s.coeffs().len(), x.len() / 2 + 1);
        for (k, c) in s.coeffs().iter().enumerate() {
            prop_assert!((c - full[k]).norm() <= 1e-9 * (1.0 + full[k].norm()));
        }
    }

    #[test]
    fn grid_is_k_rate_over_n(n in 2usize..500, rate in 0.5..1000.0f64) {
        let g = bin_grid(n, rate);
        prop_assert_eq!(g.len(), n / 2 + 1);
        for (k, f) in g.iter().enumerate() {
            prop_assert!((f - k as f64 * rate / n as f64).abs() <= 1e-12 * rate);
        }
    }

    #[test]
    fn fdr_never_exceeds_uncorrected(p in prop::collection::vec(0.0..=1.0f64, 0..200)) {
        let fdr = fdr_correct(&p);
        // BH admits p == q only at the top rank, so compare against p <= q
        let raw = p.iter().filter(|&&v| v <= 0.05).count();
        prop_assert!(fdr.iter().filter(|&&r| r).count() <= raw);
        for (r, v) in fdr.iter().zip(&p) {
            if *r {
                prop_assert!(*v <= 0.05);
            }
        }
    }
}

/// Kolmogorov–Smirnov distance between a sample and U(0, 1).
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max)
}

#[test]
fn peak_test_is_uniform_under_the_null() {
    let freqs = bin_grid(32, 8.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let p: Vec<f64> = (0..10_000)
        .map(|_| {
            let curves: Vec<Vec<f64>> = (0..5)
                .map(|_| freqs.iter().map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            peak_test_curves(&freqs, &curves, 1.0).unwrap().p_value
        })
        .collect();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    let d = ks_uniform(p);
    assert!(d < 0.05, "KS distance {d}");
}
