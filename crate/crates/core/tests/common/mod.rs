#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}

/// `He_n(z) / sqrt(n!)` from the explicit sum
/// `He_n(z) = n! Σ_m (-1)^m z^{n-2m} / (m! (n-2m)! 2^m)`.
pub fn hermite_explicit(n: usize, z: f64) -> f64 {
    let mut total = 0.0;
    let mut log_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    for m in 0..=n / 2 {
        let k = n - 2 * m;
        let log_coeff = log_fact[n] - log_fact[m] - log_fact[k] - m as f64 * 2f64.ln();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * log_coeff.exp() * z.powi(k as i32);
    }
    total / (0.5 * log_fact[n]).exp()
}
