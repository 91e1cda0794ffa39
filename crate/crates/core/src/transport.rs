//! Transport-entropy checks on Gaussian reference measures.
//!
//! `T1(C)` asks that `W1(μ, ν) ≤ sqrt(2 C Ent(ν‖μ))` for every `ν ≪ μ`;
//! its dual form bounds the exponential moments of Lipschitz functions,
//! `E_μ exp(λ(f - μf)) ≤ exp(λ² C ‖f‖²_L / 2)`. A finite test family can
//! only falsify either statement, so both checkers report per-element
//! margins, their Monte Carlo standard errors, and witnesses for
//! violations larger than three standard errors.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{BuiltinObservable, Observable, StationaryMeasure};
use crate::error::{Error, Result};
use crate::sampler::{trajectory_rng, CompensatedSum};

/// Violations must exceed this many standard errors to count.
pub const WITNESS_SIGMAS: f64 = 3.0;

const W1_BATCHES: usize = 20;

/// Exact empirical `W1` between two equally sized sorted samples, via the
/// monotone (quantile) coupling.
pub fn wasserstein1_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.len() != samples_b.len() {
        return Err(Error::LengthMismatch {
            left: samples_a.len(),
            right: samples_b.len(),
        });
    }
    if samples_a.is_empty() {
        return Err(Error::invalid("samples", "need at least one sample"));
    }
    let sorted = |s: &[f64]| s.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(samples_a) || !sorted(samples_b) {
        return Err(Error::invalid("samples", "must be sorted ascending"));
    }
    let mut acc = CompensatedSum::default();
    for (a, b) in samples_a.iter().zip(samples_b) {
        acc.add((a - b).abs());
    }
    Ok(acc.value() / samples_a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid("variance", format!("must be positive, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    fn draw(&self, n: usize, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = trajectory_rng(seed, stream);
        let sd = self.variance.sqrt();
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.mean + sd * z
            })
            .collect()
    }
}

impl From<&StationaryMeasure> for GaussianLaw {
    fn from(mu: &StationaryMeasure) -> Self {
        Self {
            mean: mu.mean,
            variance: mu.variance,
        }
    }
}

/// `Ent(ν‖μ)` in nats for two Gaussians.
pub fn gaussian_relative_entropy(nu: GaussianLaw, mu: GaussianLaw) -> f64 {
    let ratio = nu.variance / mu.variance;
    let dm = nu.mean - mu.mean;
    0.5 * (ratio + dm * dm / mu.variance - 1.0 - ratio.ln())
}

/// Mean shifts `±{0.5, 1, 2}` standard deviations and variance scalings
/// `{0.5, 2}` of `μ`.
pub fn default_direct_family(mu: &StationaryMeasure) -> Vec<GaussianLaw> {
    let sd = mu.std();
    let mut family = Vec::new();
    for shift in [0.5, 1.0, 2.0] {
        for sign in [-1.0, 1.0] {
            family.push(GaussianLaw {
                mean: mu.mean + sign * shift * sd,
                variance: mu.variance,
            });
        }
    }
    for scale in [0.5, 2.0] {
        family.push(GaussianLaw {
            mean: mu.mean,
            variance: scale * mu.variance,
        });
    }
    family
}

/// `x`, `|x|` and `tanh`-clipped `x`.
pub fn default_dual_observables() -> Vec<Observable> {
    vec![
        Observable::identity(),
        Observable::abs(),
        Observable::builtin(BuiltinObservable::ClippedLinear { scale: 1.0 }).expect("valid scale"),
    ]
}

pub const DEFAULT_LAMBDAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectEntry {
    pub nu: GaussianLaw,
    pub wasserstein1: f64,
    pub wasserstein1_se: f64,
    pub relative_entropy: f64,
    pub entropy_bound: f64,
    /// `entropy_bound - wasserstein1`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEntry {
    pub observable: String,
    pub lipschitz_seminorm: f64,
    pub lambda: f64,
    pub exponential_moment: f64,
    pub exponential_moment_se: f64,
    pub bound: f64,
    /// `bound - exponential_moment`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Direct { index: usize, nu: GaussianLaw, margin: f64, se: f64 },
    Dual { index: usize, observable: String, lambda: f64, margin: f64, se: f64 },
}

/// Outcome of a transport-entropy check.
///
/// `direct_margin` / `dual_margin` are the worst raw margins. The
/// `*_significant_margin` fields add three standard errors to each margin
/// before taking the minimum; they are negative exactly when `witnesses`
/// is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TECheckReport {
    pub c_claimed: f64,
    pub direct_margin: Option<f64>,
    pub direct_significant_margin: Option<f64>,
    pub direct_entries: Vec<DirectEntry>,
    pub dual_margin: Option<f64>,
    pub dual_significant_margin: Option<f64>,
    pub dual_entries: Vec<DualEntry>,
    pub witnesses: Vec<Witness>,
}

impl TECheckReport {
    fn empty(c: f64) -> Self {
        Self {
            c_claimed: c,
            direct_margin: None,
            direct_significant_margin: None,
            direct_entries: Vec::new(),
            dual_margin: None,
            dual_significant_margin: None,
            dual_entries: Vec::new(),
            witnesses: Vec::new(),
        }
    }

    /// Combines a direct-only and a dual-only report for the same constant.
    pub fn merge(mut self, other: TECheckReport) -> Self {
        if other.direct_margin.is_some() {
            self.direct_margin = other.direct_margin;
            self.direct_significant_margin = other.direct_significant_margin;
            self.direct_entries = other.direct_entries;
        }
        if other.dual_margin.is_some() {
            self.dual_margin = other.dual_margin;
            self.dual_significant_margin = other.dual_significant_margin;
            self.dual_entries = other.dual_entries;
        }
        self.witnesses.extend(other.witnesses);
        self
    }

    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("c", format!("must be positive, got {c}")))
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut acc = CompensatedSum::default();
    values.iter().for_each(|&v| acc.add(v));
    let mean = acc.value() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Direct check of `W1(μ, ν) ≤ sqrt(2 c Ent(ν‖μ))` over a Gaussian family.
///
/// `W1` is estimated from `samples` draws of each law; its standard error
/// comes from the spread of the estimate over 20 disjoint batches.
pub fn check_te_direct(
    mu: &StationaryMeasure,
    c: f64,
    family: &[GaussianLaw],
    samples: usize,
    seed: u64,
) -> Result<TECheckReport> {
    check_c(c)?;
    if samples < 2 * W1_BATCHES {
        return Err(Error::invalid("samples", format!("need at least {}", 2 * W1_BATCHES)));
    }
    let reference = GaussianLaw::from(mu);
    let entries: Vec<DirectEntry> = family
        .par_iter()
        .enumerate()
        .map(|(i, nu)| {
            let mut a = reference.draw(samples, seed, 2 * i as u64);
            let mut b = nu.draw(samples, seed, 2 * i as u64 + 1);
            let batch = samples / W1_BATCHES;
            let mut batch_values = Vec::with_capacity(W1_BATCHES);
            for k in 0..W1_BATCHES {
                let mut ca = a[k * batch..(k + 1) * batch].to_vec();
                let mut cb = b[k * batch..(k + 1) * batch].to_vec();
                ca.sort_by(f64::total_cmp);
                cb.sort_by(f64::total_cmp);
                batch_values.push(wasserstein1_1d(&ca, &cb)?);
            }
            let (_, batch_se) = mean_and_se(&batch_values);
            // Batch spread scales like 1/sqrt(batch); rescale to the full sample.
            let se = batch_se * (batch as f64 * W1_BATCHES as f64 / samples as f64).sqrt();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let w1 = wasserstein1_1d(&a, &b)?;
            let ent = gaussian_relative_entropy(*nu, reference);
            let bound = (2.0 * c * ent).sqrt();
            Ok(DirectEntry {
                nu: *nu,
                wasserstein1: w1,
                wasserstein1_se: se,
                relative_entropy: ent,
                entropy_bound: bound,
                margin: bound - w1,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = TECheckReport::empty(c);
    report.direct_margin = entries.iter().map(|e| e.margin).reduce(f64::min);
    report.direct_significant_margin = entries
        .iter()
        .map(|e| e.margin + WITNESS_SIGMAS * e.wasserstein1_se)
        .reduce(f64::min);
    for (i, e) in entries.iter().enumerate() {
        if e.margin + WITNESS_SIGMAS * e.wasserstein1_se < 0.0 {
            report.witnesses.push(Witness::Direct {
                index: i,
                nu: e.nu,
                margin: e.margin,
                se: e.wasserstein1_se,
            });
        }
    }
    report.direct_entries = entries;
    Ok(report)
}

/// Dual check of `E_μ exp(λ(f - μf)) ≤ exp(λ² c ‖f‖²_L / 2)` for every
/// `(f, λ)` pair, with `μf` computed by quadrature.
pub fn check_te_dual(
    mu: &StationaryMeasure,
    c: f64,
    observables: &[Observable],
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<TECheckReport> {
    check_c(c)?;
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2"));
    }
    let draws = GaussianLaw::from(mu).draw(samples, seed, 0);
    let pairs: Vec<(usize, f64)> = (0..observables.len())
        .flat_map(|o| lambdas.iter().map(move |&l| (o, l)))
        .collect();
    let entries: Vec<DualEntry> = pairs
        .par_iter()
        .map(|&(o, lambda)| {
            let f = &observables[o];
            let center = mu.expectation(f);
            let values: Vec<f64> = draws.iter().map(|&x| (lambda * (f.eval(x) - center)).exp()).collect();
            let (moment, se) = mean_and_se(&values);
            if !(moment.is_finite() && se.is_finite()) {
                return Err(Error::MomentOverflow { lambda });
            }
            let l = f.lipschitz_seminorm();
            let bound = (0.5 * lambda * lambda * c * l * l).exp();
            Ok(DualEntry {
                observable: f.label().to_string(),
                lipschitz_seminorm: l,
                lambda,
                exponential_moment: moment,
                exponential_moment_se: se,
                bound,
                margin: bound - moment,
            })
        })
        .collect::<Result<_>>()?;

    // Quadrature rounding can put a constant observable a few ulps off.
    let slack = |e: &DualEntry| WITNESS_SIGMAS * e.exponential_moment_se + 1e-12 * e.bound;
    let mut report = TECheckReport::empty(c);
    report.dual_margin = entries.iter().map(|e| e.margin).reduce(f64::min);
    report.dual_significant_margin = entries.iter().map(|e| e.margin + slack(e)).reduce(f64::min);
    for (i, e) in entries.iter().enumerate() {
        if e.margin + slack(e) < 0.0 {
            report.witnesses.push(Witness::Dual {
                index: i,
                observable: e.observable.clone(),
                lambda: e.lambda,
                margin: e.margin,
                se: e.exponential_moment_se,
            });
        }
    }
    report.dual_entries = entries;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn law(m: f64, v: f64) -> GaussianLaw {
        GaussianLaw::new(m, v).unwrap()
    }

    #[test]
    fn wasserstein_simple_cases() {
        let a = [-1.0, 0.0, 2.5];
        assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
        assert_abs_diff_eq!(wasserstein1_1d(&a, &shifted).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(
            wasserstein1_1d(&a, &a[..2]),
            Err(Error::LengthMismatch { left: 3, right: 2 })
        );
        assert!(wasserstein1_1d(&[1.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn relative_entropy_simple_cases() {
        assert_eq!(gaussian_relative_entropy(law(0.3, 2.0), law(0.3, 2.0)), 0.0);
        assert_abs_diff_eq!(gaussian_relative_entropy(law(1.0, 1.0), law(0.0, 1.0)), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn direct_check_with_inflated_or_vanishing_constant() {
        let mu = StationaryMeasure::gaussian(0.0, 4.0 / 3.0).unwrap();
        let family = default_direct_family(&mu);
        let loose = check_te_direct(&mu, 1e6, &family, 4000, 1).unwrap();
        assert!(loose.passed());
        assert!(loose.direct_margin.unwrap() > 0.0);

        let tight = check_te_direct(&mu, 1e-9, &family, 4000, 1).unwrap();
        assert!(!tight.passed());
        assert!(tight.direct_significant_margin.unwrap() < 0.0);
    }

    #[test]
    fn dual_check_trivial_cases() {
        let mu = StationaryMeasure::gaussian(0.0, 4.0 / 3.0).unwrap();
        let zero = check_te_dual(&mu, 1.0, &[Observable::identity()], &[0.0], 1000, 3).unwrap();
        assert_eq!(zero.dual_entries[0].exponential_moment, 1.0);
        assert_eq!(zero.dual_entries[0].bound, 1.0);
        assert_eq!(zero.dual_margin, Some(0.0));
        assert!(zero.passed());

        let constant = check_te_dual(&mu, 1.0, &[Observable::constant(2.5)], &[1.0, 3.0], 1000, 3).unwrap();
        assert!(constant.passed());
        for e in &constant.dual_entries {
            assert_eq!(e.bound, 1.0);
            assert_abs_diff_eq!(e.exponential_moment, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dual_overflow_is_reported() {
        let mu = StationaryMeasure::gaussian(0.0, 1.0).unwrap();
        let err = check_te_dual(&mu, 1.0, &[Observable::identity()], &[1000.0], 10_000, 3).unwrap_err();
        assert!(matches!(err, Error::MomentOverflow { .. }));
    }

    #[test]
    fn merged_report_keeps_both_parts() {
        let mu = StationaryMeasure::gaussian(0.0, 1.0).unwrap();
        let direct = check_te_direct(&mu, 1.0, &default_direct_family(&mu), 2000, 2).unwrap();
        let dual = check_te_dual(&mu, 1.0, &default_dual_observables(), &[0.5], 2000, 2).unwrap();
        let both = direct.merge(dual);
        assert!(both.direct_margin.is_some() && both.dual_margin.is_some());
        assert_eq!(both.dual_entries.len(), 3);
        assert_eq!(both.direct_entries.len(), 8);
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(
            raw in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..60)
        ) {
            let mut a: Vec<f64> = raw.iter().map(|t| t.0).collect();
            let mut b: Vec<f64> = raw.iter().map(|t| t.1).collect();
            let mut c: Vec<f64> = raw.iter().map(|t| t.2).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            c.sort_by(f64::total_cmp);
            let ab = wasserstein1_1d(&a, &b).unwrap();
            let ba = wasserstein1_1d(&b, &a).unwrap();
            let bc = wasserstein1_1d(&b, &c).unwrap();
            let ac = wasserstein1_1d(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn relative_entropy_is_nonnegative(m1 in -5.0f64..5.0, v1 in 0.01f64..10.0, m2 in -5.0f64..5.0, v2 in 0.01f64..10.0) {
            let e = gaussian_relative_entropy(law(m1, v1), law(m2, v2));
            prop_assert!(e >= -1e-15);
            if m1 == m2 && v1 == v2 {
                prop_assert_eq!(e, 0.0);
            }
        }
    }
}
