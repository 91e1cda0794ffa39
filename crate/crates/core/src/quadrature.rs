//! Quadrature rules against the Gaussian weight.
//!
//! Two families are provided:
//!
//! * [`GaussHermite`]: the probabilists' Gauss–Hermite rule, exact for
//!   polynomials of degree `2n - 1` against the standard normal density.
//!   Nodes come from the symmetric Jacobi matrix (Golub–Welsch) solved by
//!   implicit QL, tracking only the first eigenvector component, so the
//!   cost is `O(n²)`.
//! * [`NormalRule`]: composite Gauss–Legendre on a truncated standard
//!   normal range, with optional panel breakpoints so that integrands with
//!   kinks (such as `|x|`) are integrated to near machine precision.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Probabilists' Gauss–Hermite rule; weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order", "quadrature order must be positive"));
        }
        let mut diag = vec![0.0; order];
        // off[i] couples i and i+1; the monic He recurrence gives sqrt(i+1).
        let mut off: Vec<f64> = (0..order)
            .map(|i| if i + 1 < order { ((i + 1) as f64).sqrt() } else { 0.0 })
            .collect();
        let mut first = vec![0.0; order];
        first[0] = 1.0;
        tridiagonal_ql(&mut diag, &mut off, &mut first)?;

        let mut pairs: Vec<(f64, f64)> = diag
            .into_iter()
            .zip(first)
            .map(|(x, v)| (x, v * v))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Symmetrize: the rule is exactly symmetric about zero.
        let n = pairs.len();
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let j = n - 1 - i;
            nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
            weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(Z)` for `Z ~ N(0, 1)`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
///
/// On return `diag` holds the eigenvalues and `first` the first row of the
/// accumulated rotation matrix (the first components of the eigenvectors).
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], first: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::QuadratureFailure(format!(
                    "QL iteration did not converge for eigenvalue {l}"
                )));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let fz = first[i + 1];
                first[i + 1] = s * first[i] + c * fz;
                first[i] = c * first[i] - s * fz;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Fills `out[k]` with the orthonormal Hermite polynomial `He_k(z)/sqrt(k!)`.
pub fn hermite_orthonormal(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = z;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = (z * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

const LEGENDRE_POINTS: usize = 12;

fn legendre_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(LEGENDRE_POINTS))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Composite Gauss–Legendre rule for `E f(Z)`, `Z ~ N(0, 1)`, truncated to
/// `[-half_width, half_width]`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalRule {
    pub const DEFAULT_HALF_WIDTH: f64 = 14.0;
    const PANEL_WIDTH: f64 = 0.25;

    /// Builds the rule with extra panel edges at `breakpoints` (in standard
    /// units). Breakpoints outside the range are ignored.
    pub fn new(half_width: f64, breakpoints: &[f64]) -> Self {
        let panels = (2.0 * half_width / Self::PANEL_WIDTH).ceil() as usize;
        let h = 2.0 * half_width / panels as f64;
        let mut edges: Vec<f64> = (0..=panels).map(|i| -half_width + i as f64 * h).collect();
        edges.extend(
            breakpoints
                .iter()
                .copied()
                .filter(|b| b.is_finite() && b.abs() < half_width),
        );
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-13);

        let gl = legendre_rule();
        let norm = 1.0 / (2.0 * PI).sqrt();
        let mut nodes = Vec::with_capacity(edges.len() * gl.len());
        let mut weights = Vec::with_capacity(edges.len() * gl.len());
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for &(t, w) in gl {
                let z = mid + half * t;
                nodes.push(z);
                weights.push(w * half * norm * (-0.5 * z * z).exp());
            }
        }
        Self { nodes, weights }
    }

    pub fn standard() -> Self {
        Self::new(Self::DEFAULT_HALF_WIDTH, &[])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            if w > 0.0 {
                acc += w * f(z);
            }
        }
        acc
    }
}

/// `E f(X)` for `X ~ N(mean, std²)`, with panel edges at the given kinks
/// (in the original `x` coordinates).
pub fn gaussian_expectation(mean: f64, std: f64, kinks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let z_kinks: Vec<f64> = kinks.iter().map(|k| (k - mean) / std).collect();
    NormalRule::new(NormalRule::DEFAULT_HALF_WIDTH, &z_kinks).expectation(|z| f(mean + std * z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn double_factorial_odd(k: usize) -> f64 {
        (1..=k).step_by(2).map(|v| v as f64).product()
    }

    #[test]
    fn hermite_rule_integrates_even_moments_exactly() {
        let rule = GaussHermite::new(20).unwrap();
        assert_abs_diff_eq!(rule.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        for k in 1..=19 {
            let m = rule.expectation(|z| z.powi(2 * k as i32));
            let exact = double_factorial_odd(2 * k - 1);
            assert!((m - exact).abs() <= 1e-11 * exact, "k={k}: {m} vs {exact}");
        }
        assert_abs_diff_eq!(rule.expectation(|z| z.powi(7)), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn hermite_rule_order_one_and_two() {
        let one = GaussHermite::new(1).unwrap();
        assert_eq!(one.nodes(), &[0.0]);
        assert_abs_diff_eq!(one.weights()[0], 1.0, epsilon = 1e-15);
        let two = GaussHermite::new(2).unwrap();
        assert_abs_diff_eq!(two.nodes()[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(two.weights()[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn large_order_rule_is_usable() {
        let rule = GaussHermite::new(256).unwrap();
        assert_abs_diff_eq!(rule.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rule.expectation(|z| z * z), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(rule.expectation(|z| (0.3 * z).cos()), (-0.045f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn orthonormal_hermite_gram_is_identity() {
        let k = 12;
        let rule = GaussHermite::new(2 * k).unwrap();
        let mut h = vec![0.0; k];
        let mut gram = vec![0.0; k * k];
        for (&z, &w) in rule.nodes().iter().zip(rule.weights()) {
            hermite_orthonormal(z, &mut h);
            for i in 0..k {
                for j in 0..k {
                    gram[i * k + j] += w * h[i] * h[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[i * k + j], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn normal_rule_handles_kinks() {
        let sigma = (4.0f64 / 3.0).sqrt();
        let got = gaussian_expectation(0.0, sigma, &[0.0], f64::abs);
        assert_abs_diff_eq!(got, sigma * (2.0 / PI).sqrt(), epsilon = 1e-13);
        let shifted = gaussian_expectation(0.7, 1.0, &[0.0], f64::abs);
        // folded normal mean
        let m: f64 = 0.7;
        let exact = (2.0 / PI).sqrt() * (-m * m / 2.0).exp()
            + m * (1.0 - 2.0 * statrs::function::erf::erfc(m / 2f64.sqrt()) / 2.0);
        assert_abs_diff_eq!(shifted, exact, epsilon = 1e-12);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let rule = gauss_legendre(12);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-14);
        let x22: f64 = rule.iter().map(|(x, w)| w * x.powi(22)).sum();
        assert_abs_diff_eq!(x22, 2.0 / 23.0, epsilon = 1e-14);
    }
}
