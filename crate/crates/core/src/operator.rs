//! Finite-dimensional approximations of the transfer operator
//! `(Pf)(x) = E[f(x_{k+1}) | x_k = x]`.
//!
//! Two discretizations are available:
//!
//! * **Hermite–Galerkin** for the linear-Gaussian chain: matrix entries
//!   `M[j][k] = <P h_k, h_j>` in the orthonormal Hermite basis of the
//!   stationary law, assembled with a two-dimensional Gauss–Hermite rule of
//!   order `4K` in both the state and the noise variable.
//! * **Ulam** for any chain with a sampler: cell-to-cell transition
//!   frequencies from stratified start points.
//!
//! On top of these sit the spectral report (eigenvalue moduli, gap, and
//! `‖Pⁿ - U‖₂`), a lower-bound probe of `‖P‖_{2→q}`, and the Galerkin
//! matrix of the Feynman–Kac composition `e^{s r} P`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::chain::{stationary_measure, ChainSpec, Observable};
use crate::error::{Error, Result};
use crate::quadrature::{hermite_orthonormal, GaussHermite, NormalRule};
use crate::sampler::trajectory_rng;

/// Largest dimension accepted by the dense routines.
pub const MAX_DIMENSION: usize = 512;

/// Tolerance of the basis orthonormality self-test.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Relative tail mass above which the Feynman–Kac truncation is flagged.
pub const TRUNCATION_TOL: f64 = 1e-4;

/// Row-sum tolerance for stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// Orthonormal Hermite polynomials of `N(0, stationary_std²)`; index 0
    /// is the constant function.
    HermiteStationary { alpha: f64, stationary_std: f64 },
    /// Indicator functions of the cells between consecutive breakpoints.
    UlamPartition { breakpoints: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinOperator {
    matrix: DMatrix<f64>,
    basis: Basis,
}

impl GalerkinOperator {
    /// Wraps a matrix after checking the invariants of its basis.
    pub fn from_matrix(matrix: DMatrix<f64>, basis: Basis) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("matrix", "must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix", "entries must be finite"));
        }
        match &basis {
            Basis::HermiteStationary { .. } => {
                if (matrix[(0, 0)] - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::invalid(
                        "matrix",
                        format!("Hermite basis requires M[0][0] = 1, got {}", matrix[(0, 0)]),
                    ));
                }
            }
            Basis::UlamPartition { breakpoints } => {
                if breakpoints.len() != matrix.nrows() + 1 {
                    return Err(Error::invalid("breakpoints", "need one more breakpoint than cells"));
                }
                for (i, row) in matrix.row_iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                        return Err(Error::invalid(
                            "matrix",
                            format!("row {i} is not a probability vector (sum {sum})"),
                        ));
                    }
                }
            }
        }
        Ok(Self { matrix, basis })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Writes the matrix row-major with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_matrix_csv(out, &self.matrix)
    }
}

pub fn write_matrix_csv<W: Write>(mut out: W, m: &DMatrix<f64>) -> io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn linear_gaussian_params(spec: &ChainSpec) -> Result<(f64, f64)> {
    match spec {
        ChainSpec::LinearGaussian1D { alpha, .. } => {
            let mu = stationary_measure(spec)?;
            Ok((*alpha, mu.std()))
        }
        ChainSpec::CustomKernel(_) => Err(Error::UnsupportedChain(
            "this routine needs the linear-Gaussian chain".into(),
        )),
    }
}

/// Evaluates the first `k` orthonormal Hermite polynomials at every node.
fn basis_table(nodes: &[f64], k: usize) -> DMatrix<f64> {
    let mut table = DMatrix::zeros(nodes.len(), k);
    let mut h = vec![0.0; k];
    for (i, &z) in nodes.iter().enumerate() {
        hermite_orthonormal(z, &mut h);
        for (j, &v) in h.iter().enumerate() {
            table[(i, j)] = v;
        }
    }
    table
}

/// Hermite–Galerkin matrix of `P` for the linear-Gaussian chain.
pub fn hermite_galerkin(spec: &ChainSpec, k: usize) -> Result<GalerkinOperator> {
    if k < 2 || k > MAX_DIMENSION {
        return Err(Error::invalid("K", format!("need 2 <= K <= {MAX_DIMENSION}, got {k}")));
    }
    let (alpha, stationary_std) = linear_gaussian_params(spec)?;
    let rule = GaussHermite::new(4 * k)?;
    let nodes = rule.nodes();
    let weights = rule.weights();
    let table = basis_table(nodes, k);

    let mut worst = 0.0f64;
    for a in 0..k {
        for b in 0..=a {
            let g: f64 = (0..nodes.len())
                .map(|i| weights[i] * table[(i, a)] * table[(i, b)])
                .sum();
            let want = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - want).abs());
        }
    }
    if !(worst <= ORTHONORMALITY_TOL) {
        return Err(Error::QuadratureFailure(format!(
            "Hermite Gram matrix deviates from identity by {worst:e}"
        )));
    }

    // In standard units the successor of z is alpha z + sqrt(1 - alpha²) ξ.
    let spread = (1.0 - alpha * alpha).sqrt();
    let inner: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&z| {
            let mut acc = vec![0.0; k];
            let mut h = vec![0.0; k];
            for (&xi, &w) in nodes.iter().zip(weights) {
                hermite_orthonormal(alpha * z + spread * xi, &mut h);
                for (a, hv) in acc.iter_mut().zip(&h) {
                    *a += w * hv;
                }
            }
            acc
        })
        .collect();

    let mut matrix = DMatrix::<f64>::zeros(k, k);
    for (i, ph) in inner.iter().enumerate() {
        let w = weights[i];
        for row in 0..k {
            let hw = w * table[(i, row)];
            for col in 0..k {
                matrix[(row, col)] += hw * ph[col];
            }
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure("non-finite Galerkin entry".into()));
    }
    GalerkinOperator::from_matrix(
        matrix,
        Basis::HermiteStationary {
            alpha,
            stationary_std,
        },
    )
}

/// Ulam matrix of `P` on the partition given by `breakpoints`.
///
/// Each cell contributes `samples_per_cell` start points, one successor
/// each. For the linear-Gaussian chain the start points sit at stratified
/// quantiles of the stationary law restricted to the cell, which makes the
/// matrix the `L²(μ)` projection estimate and allows unbounded end cells.
/// For custom kernels the cells must be bounded and start points are
/// evenly stratified. Successors leaving the partition are discarded and
/// rows renormalized.
pub fn ulam_discretize(
    spec: &ChainSpec,
    breakpoints: &[f64],
    samples_per_cell: usize,
    seed: u64,
) -> Result<GalerkinOperator> {
    if breakpoints.len() < 3 {
        return Err(Error::invalid("breakpoints", "need at least two cells"));
    }
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| b.is_nan()) {
        return Err(Error::invalid("breakpoints", "must be strictly increasing"));
    }
    if samples_per_cell == 0 {
        return Err(Error::invalid("samples_per_cell", "must be positive"));
    }
    let cells = breakpoints.len() - 1;
    if cells > MAX_DIMENSION {
        return Err(Error::invalid("breakpoints", format!("at most {MAX_DIMENSION} cells")));
    }
    let stationary = match spec {
        ChainSpec::LinearGaussian1D { .. } => {
            let mu = stationary_measure(spec)?;
            Some(Normal::new(mu.mean, mu.std()).map_err(|e| Error::invalid("stationary", e.to_string()))?)
        }
        ChainSpec::CustomKernel(_) => {
            if !breakpoints.iter().all(|b| b.is_finite()) {
                return Err(Error::invalid(
                    "breakpoints",
                    "custom kernels need bounded cells (no stationary law to stratify)",
                ));
            }
            None
        }
    };

    let rows: Vec<Vec<f64>> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let (a, b) = (breakpoints[cell], breakpoints[cell + 1]);
            let mut rng = trajectory_rng(seed, cell as u64);
            let mut counts = vec![0.0; cells];
            let (fa, fb) = match &stationary {
                Some(n) => (n.cdf(a), n.cdf(b)),
                None => (0.0, 0.0),
            };
            let use_quantiles = stationary.is_some() && fb - fa > 1e-300;
            for j in 0..samples_per_cell {
                let t = (j as f64 + 0.5) / samples_per_cell as f64;
                let x = if use_quantiles {
                    let u = fa + t * (fb - fa);
                    stationary.as_ref().unwrap().inverse_cdf(u).clamp(a, b)
                } else if a.is_finite() && b.is_finite() {
                    a + t * (b - a)
                } else {
                    return Err(Error::EmptyCell { cell });
                };
                let y = spec.step(x, &mut rng);
                if y >= breakpoints[0] && y < breakpoints[cells] {
                    let idx = breakpoints.partition_point(|&e| e <= y) - 1;
                    counts[idx.min(cells - 1)] += 1.0;
                }
            }
            let total: f64 = counts.iter().sum();
            if total == 0.0 {
                return Err(Error::EmptyCell { cell });
            }
            Ok(counts.into_iter().map(|c| c / total).collect())
        })
        .collect::<Result<_>>()?;

    let matrix = DMatrix::from_fn(cells, cells, |i, j| rows[i][j]);
    GalerkinOperator::from_matrix(
        matrix,
        Basis::UlamPartition {
            breakpoints: breakpoints.to_vec(),
        },
    )
}

/// Evenly spaced breakpoints over `mean ± half_width_sd · sd`, optionally
/// with unbounded end cells.
pub fn uniform_breakpoints(mean: f64, sd: f64, half_width_sd: f64, cells: usize, open_ends: bool) -> Vec<f64> {
    let lo = mean - half_width_sd * sd;
    let h = 2.0 * half_width_sd * sd / cells as f64;
    let mut b: Vec<f64> = (0..=cells).map(|i| lo + i as f64 * h).collect();
    if open_ends {
        b[0] = f64::NEG_INFINITY;
        b[cells] = f64::INFINITY;
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalue_moduli: Vec<f64>,
    pub spectral_gap: f64,
    pub power_convergence: Vec<(usize, f64)>,
    /// False when an eigenvalue other than the Perron root lies within
    /// `1e-6` of the unit circle.
    pub aperiodic: bool,
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> Result<f64> {
    let svd = nalgebra::SVD::try_new(m.clone(), false, false, 1e-15, 10_000)
        .ok_or_else(|| Error::EigensolveFailure("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Moduli of all eigenvalues, sorted descending.
pub fn eigenvalue_moduli(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::EigensolveFailure("Schur iteration did not converge".into()))?;
    let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|c| c.norm()).collect();
    if moduli.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigensolveFailure("non-finite eigenvalue".into()));
    }
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(moduli)
}

/// Stationary row vector of a stochastic matrix; uniform when the
/// invariant law is not unique.
fn stationary_vector(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let uniform = DVector::from_element(n, 1.0 / n as f64);
    let Some(mut pi) = a.lu().solve(&rhs) else {
        return uniform;
    };
    if pi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return uniform;
    }
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let s = pi.sum();
    if s <= 0.0 {
        return uniform;
    }
    pi / s
}

/// Eigenvalue moduli, gap and `‖Pⁿ - U‖₂` for `n = 1..=max_power`.
///
/// For the Hermite basis `U = e₀e₀ᵀ`. For Ulam matrices `U = 1πᵀ` with `π`
/// the stationary cell masses, and norms are taken in `L²(π)`.
pub fn spectral_report(op: &GalerkinOperator, max_power: usize) -> Result<SpectralReport> {
    let k = op.dim();
    if k > MAX_DIMENSION {
        return Err(Error::invalid("K", format!("dense eigensolve capped at {MAX_DIMENSION}")));
    }
    let moduli = eigenvalue_moduli(op.matrix())?;
    let second = moduli.get(1).copied().unwrap_or(0.0);
    let spectral_gap = (1.0 - second).clamp(0.0, 1.0);
    let aperiodic = moduli.iter().skip(1).all(|&m| m < 1.0 - 1e-6);

    let (projection, scale) = match op.basis() {
        Basis::HermiteStationary { .. } => {
            let mut u = DMatrix::zeros(k, k);
            u[(0, 0)] = 1.0;
            (u, None)
        }
        Basis::UlamPartition { .. } => {
            let pi = stationary_vector(op.matrix());
            let u = DMatrix::from_fn(k, k, |_, j| pi[j]);
            (u, Some(pi))
        }
    };
    let weighted_norm = |m: &DMatrix<f64>| -> Result<f64> {
        match &scale {
            None => operator_norm(m),
            Some(pi) => {
                let support: Vec<usize> = (0..k).filter(|&i| pi[i] > 1e-300).collect();
                let w = DMatrix::from_fn(support.len(), support.len(), |a, b| {
                    let (i, j) = (support[a], support[b]);
                    pi[i].sqrt() * m[(i, j)] / pi[j].sqrt()
                });
                operator_norm(&w)
            }
        }
    };

    let mut power = op.matrix().clone();
    let mut power_convergence = Vec::with_capacity(max_power);
    for n in 1..=max_power {
        if n > 1 {
            power = &power * op.matrix();
        }
        power_convergence.push((n, weighted_norm(&(&power - &projection))?));
    }
    Ok(SpectralReport {
        eigenvalue_moduli: moduli,
        spectral_gap,
        power_convergence,
        aperiodic,
    })
}

/// Highest polynomial degree used by [`hyperbound_probe`].
pub const PROBE_MAX_DEGREE: usize = 6;

/// Lower bound on `‖P‖_{2→q}` for the linear-Gaussian chain.
///
/// Evaluates `‖Pg‖_q` for the constant function and `n_test_functions`
/// random polynomials of degree at most six with unit `L²(μ)` norm, and
/// returns the largest value. Since `P1 = 1` the result is at least one.
pub fn hyperbound_probe(spec: &ChainSpec, q: f64, n_test_functions: usize, seed: u64) -> Result<f64> {
    if !(q > 2.0) {
        return Err(Error::InvalidExponent(format!("need q > 2, got {q}")));
    }
    let (alpha, _) = linear_gaussian_params(spec)?;
    let spread = (1.0 - alpha * alpha).sqrt();
    let deg = PROBE_MAX_DEGREE + 1;
    let inner_rule = GaussHermite::new(deg + 1)?;
    let outer = NormalRule::standard();

    // E_k(z) = (P h_k)(z), exact for degree <= 2 * (deg + 1) - 1.
    let images: Vec<[f64; PROBE_MAX_DEGREE + 1]> = outer
        .nodes()
        .iter()
        .map(|&z| {
            let mut acc = [0.0; PROBE_MAX_DEGREE + 1];
            let mut h = [0.0; PROBE_MAX_DEGREE + 1];
            for (&xi, &w) in inner_rule.nodes().iter().zip(inner_rule.weights()) {
                hermite_orthonormal(alpha * z + spread * xi, &mut h);
                for (a, hv) in acc.iter_mut().zip(&h) {
                    *a += w * hv;
                }
            }
            acc
        })
        .collect();

    let q_norm = |coeffs: &[f64; PROBE_MAX_DEGREE + 1]| -> f64 {
        let mut acc = 0.0;
        for (img, &w) in images.iter().zip(outer.weights()) {
            let pg: f64 = img.iter().zip(coeffs).map(|(a, c)| a * c).sum();
            acc += w * pg.abs().powf(q);
        }
        acc.powf(1.0 / q)
    };

    let mut constant = [0.0; PROBE_MAX_DEGREE + 1];
    constant[0] = 1.0;
    let mut best = q_norm(&constant);
    let mut rng = trajectory_rng(seed, 0);
    for _ in 0..n_test_functions {
        let degree = rng.gen_range(0..=PROBE_MAX_DEGREE);
        let mut coeffs = [0.0; PROBE_MAX_DEGREE + 1];
        for c in coeffs.iter_mut().take(degree + 1) {
            *c = rng.sample(StandardNormal);
        }
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        coeffs.iter_mut().for_each(|c| *c /= norm);
        best = best.max(q_norm(&coeffs));
    }
    Ok(best)
}

/// Galerkin matrix of `e^{s r} P` in the Hermite basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeynmanKacMatrix {
    pub matrix: DMatrix<f64>,
    /// Relative Frobenius mass of `e^{s r} P` outside the first `K` basis
    /// functions, estimated at size `2K`.
    pub tail_mass: f64,
    pub truncation_warning: bool,
}

impl FeynmanKacMatrix {
    /// `‖M^n‖₂^{1/n}`.
    pub fn power_norm_rate(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        let mut power = self.matrix.clone();
        for _ in 1..n {
            power = &power * &self.matrix;
        }
        Ok(operator_norm(&power)?.powf(1.0 / n as f64))
    }
}

/// Multiplication operator `f ↦ e^{s r} f` truncated to the first `rows`
/// Hermite functions (columns `0..cols`).
fn multiplication_block(stationary_std: f64, r: &Observable, s: f64, rows: usize, cols: usize) -> DMatrix<f64> {
    let half_width = 10.0 + 2.0 * (rows as f64).sqrt();
    let kinks: Vec<f64> = r.kinks().iter().map(|k| k / stationary_std).collect();
    let rule = NormalRule::new(half_width, &kinks);
    let mut block = DMatrix::zeros(rows, cols);
    let mut h = vec![0.0; rows];
    for (&z, &w) in rule.nodes().iter().zip(rule.weights()) {
        if w == 0.0 {
            continue;
        }
        let weight = w * (s * r.eval(stationary_std * z)).exp();
        hermite_orthonormal(z, &mut h);
        for j in 0..rows {
            let hj = weight * h[j];
            for k in 0..cols {
                block[(j, k)] += hj * h[k];
            }
        }
    }
    block
}

pub fn feynman_kac_matrix(op: &GalerkinOperator, r: &Observable, s: f64) -> Result<FeynmanKacMatrix> {
    let Basis::HermiteStationary { stationary_std, .. } = *op.basis() else {
        return Err(Error::UnsupportedChain(
            "Feynman–Kac matrix needs the Hermite basis".into(),
        ));
    };
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::invalid("s", format!("must be finite and non-negative, got {s}")));
    }
    if s == 0.0 {
        return Ok(FeynmanKacMatrix {
            matrix: op.matrix().clone(),
            tail_mass: 0.0,
            truncation_warning: false,
        });
    }
    let k = op.dim();
    let block = multiplication_block(stationary_std, r, s, 2 * k, k);
    if block.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure("multiplication operator overflowed".into()));
    }
    // Mass of e^{sr} P leaking outside the first K basis functions.
    let full = &block * op.matrix();
    let total = full.norm();
    let tail = full.rows(k, k).norm();
    let tail_mass = if total > 0.0 { tail / total } else { 0.0 };
    Ok(FeynmanKacMatrix {
        matrix: full.rows(0, k).into_owned(),
        tail_mass,
        truncation_warning: tail_mass > TRUNCATION_TOL,
    })
}
