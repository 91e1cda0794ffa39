mod common;

use approx::assert_relative_eq;
use chainbound::chain::{Observable, StationaryMeasure};
use chainbound::quadrature::NormalRule;
use chainbound::transport::{
    check_te_direct, check_te_dual, default_direct_family, gaussian_relative_entropy, wasserstein1_1d, GaussianLaw,
    Witness,
};
use common::{normal_pdf, simpson};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

fn quantile_w1_oracle(sigma: f64) -> f64 {
    // ∫_0^1 |F^{-1}(u) - G^{-1}(u)| du = |σ - 1| ∫_0^1 |Φ^{-1}(u)| du, midpoint rule.
    let std = Normal::new(0.0, 1.0).unwrap();
    let n = 2_000_000;
    let sum: f64 = (0..n).map(|i| std.inverse_cdf((i as f64 + 0.5) / n as f64).abs()).sum();
    (sigma - 1.0).abs() * sum / n as f64
}

#[test]
fn wasserstein_of_scaled_gaussians() {
    let m = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut a: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut b: Vec<f64> = (0..m).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 2.0 * z }).collect();
    let batches = 20;
    let size = m / batches;
    let batch_values: Vec<f64> = (0..batches)
        .map(|k| {
            let mut ca = a[k * size..(k + 1) * size].to_vec();
            let mut cb = b[k * size..(k + 1) * size].to_vec();
            ca.sort_by(f64::total_cmp);
            cb.sort_by(f64::total_cmp);
            wasserstein1_1d(&ca, &cb).unwrap()
        })
        .collect();
    let bm = batch_values.iter().sum::<f64>() / batches as f64;
    let bvar = batch_values.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (bvar / batches as f64).sqrt();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let w1 = wasserstein1_1d(&a, &b).unwrap();
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    assert_relative_eq!(quantile_w1_oracle(2.0), exact, max_relative = 1e-4);
    assert!((w1 - exact).abs() < 3.0 * se, "w1 {w1}, se {se}");
}

fn kl_by_simpson(nu: GaussianLaw, mu: GaussianLaw) -> f64 {
    let sd = nu.variance.sqrt();
    let f = |x: f64| {
        let p = normal_pdf(x, nu.mean, nu.variance);
        if p == 0.0 {
            0.0
        } else {
            p * (p / normal_pdf(x, mu.mean, mu.variance)).ln()
        }
    };
    simpson(f, nu.mean - 14.0 * sd, nu.mean + 14.0 * sd, 100_000)
}

#[test]
fn relative_entropy_matches_quadrature() {
    let cases = [
        ((0.0, 2.0), (0.0, 1.0)),
        ((1.0, 1.0), (0.0, 1.0)),
        ((0.5, 0.5), (0.0, 4.0 / 3.0)),
        ((-2.0, 3.0), (1.0, 0.7)),
        ((0.0, 0.1), (0.3, 5.0)),
    ];
    for ((m1, v1), (m2, v2)) in cases {
        let nu = GaussianLaw::new(m1, v1).unwrap();
        let mu = GaussianLaw::new(m2, v2).unwrap();
        let closed = gaussian_relative_entropy(nu, mu);
        assert!((closed - kl_by_simpson(nu, mu)).abs() < 1e-6);
    }
}

#[test]
fn gaussian_moment_generating_function_saturates_dual_bound() {
    let rule = NormalRule::standard();
    let lhs = rule.expectation(f64::exp);
    assert_relative_eq!(lhs, 0.5f64.exp(), max_relative = 1e-12);

    let mu = StationaryMeasure::gaussian(0.0, 1.0).unwrap();
    let report = check_te_dual(&mu, 1.0, &[Observable::identity()], &[1.0], 400_000, 8).unwrap();
    let e = &report.dual_entries[0];
    assert_relative_eq!(e.bound, 0.5f64.exp(), max_relative = 1e-15);
    assert!((e.exponential_moment - e.bound).abs() < 4.0 * e.exponential_moment_se);
    assert!(report.passed());
}

#[test]
fn unit_constant_fails_for_wide_gaussian() {
    // Mean shifts of N(0, v) have W1 = |Δm| but sqrt(2 Ent) = |Δm| / sqrt(v),
    // so C = 1 is too small as soon as v > 1.
    let mu = StationaryMeasure::gaussian(0.0, 4.0 / 3.0).unwrap();
    let family = default_direct_family(&mu);
    let literal = check_te_direct(&mu, 1.0, &family, 200_000, 3).unwrap();
    assert!(!literal.passed());
    assert!(literal
        .witnesses
        .iter()
        .all(|w| matches!(w, Witness::Direct { nu, .. } if nu.mean != 0.0)));

    let scaled = check_te_direct(&mu, mu.variance, &family, 200_000, 3).unwrap();
    assert!(scaled.passed(), "{:?}", scaled.witnesses);
    for e in &scaled.direct_entries {
        assert!(e.margin + 3.0 * e.wasserstein1_se >= 0.0);
    }
}
