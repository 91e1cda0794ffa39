//! Monte Carlo validation of tail certificates on the linear-Gaussian chain.
//!
//! For every `(observable, initial law, ε, N)` cell the empirical one-sided
//! tail is compared against the hypercontractive tail certificate and the
//! Feynman–Kac Chernoff certificate, both evaluated at the largest `p` for
//! which the Gaussian hyperbound certifies `‖P‖_{2→p} ≤ 1`. Trajectories are
//! started from `β` without burn-in, since that is the law the certificates
//! are stated for.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    chernoff_fk_bound, find_hypercontractive_p, gaussian_hyperbound_value, hypercontractive_tail_cor11,
    sample_complexity_thm10, CertificateInputs, ConcentrationCertificate, Theorem,
};
use crate::chain::{stationary_measure, BuiltinObservable, ChainSpec, InitialDistribution, Observable};
use crate::error::{Error, Result};
use crate::sampler::{prefix_averages, TailEstimate, TrajectoryConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub alpha: f64,
    pub noise_std: f64,
    pub observables: Vec<BuiltinObservable>,
    pub initials: Vec<InitialDistribution>,
    pub epsilons: Vec<f64>,
    pub horizons: Vec<usize>,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Overrides the transport-entropy constant of the stationary law.
    pub te_constant: Option<f64>,
    /// `δ` used for the sample-complexity readings.
    pub delta: f64,
    /// Accuracy levels `n` for the sample-complexity readings.
    pub sample_complexity_levels: Vec<u64>,
}

impl ValidationGrid {
    /// `α = 0.5`, `r ∈ {x, |x|}`, `β ∈ {μ, N(0, 0.5)}`, `ε ∈ {0.1, 0.2, 0.3}`,
    /// `N ∈ {500, 2000, 8000}`, 10⁴ trajectories.
    pub fn reference(seed: u64) -> Self {
        Self {
            alpha: 0.5,
            noise_std: 1.0,
            observables: vec![BuiltinObservable::Identity, BuiltinObservable::Abs],
            initials: vec![
                InitialDistribution::Stationary,
                InitialDistribution::Gaussian {
                    mean: 0.0,
                    variance: 0.5,
                },
            ],
            epsilons: vec![0.1, 0.2, 0.3],
            horizons: vec![500, 2000, 8000],
            n_trajectories: 10_000,
            seed,
            te_constant: None,
            delta: 0.5,
            sample_complexity_levels: vec![1],
        }
    }

    fn check(&self) -> Result<()> {
        if self.observables.is_empty() || self.initials.is_empty() || self.epsilons.is_empty() {
            return Err(Error::invalid("grid", "observables, initials and epsilons must be non-empty"));
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::invalid("epsilons", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        let mut h = self.horizons.clone();
        h.sort_unstable();
        h.dedup();
        if h != self.horizons || h.first() == Some(&0) || h.is_empty() {
            return Err(Error::invalid("horizons", "must be positive and strictly increasing"));
        }
        Ok(())
    }
}

/// A certificate next to the empirical tail it should dominate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub certificate: ConcentrationCertificate,
    /// Valid and below 1, so it makes a falsifiable claim.
    pub applicable: bool,
    /// Certificate value ≥ upper Wilson limit of the empirical tail.
    pub exceeds_wilson_upper: bool,
    /// Certificate value < lower Wilson limit: violated beyond MC error.
    pub violated: bool,
}

impl CertificateCheck {
    fn new(certificate: ConcentrationCertificate, tail: &TailEstimate) -> Self {
        let applicable = certificate.valid && certificate.value < 1.0;
        let (lo, hi) = tail.wilson_interval;
        Self {
            exceeds_wilson_upper: certificate.value >= hi,
            violated: applicable && certificate.value < lo,
            applicable,
            certificate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCell {
    pub observable: String,
    pub initial: InitialDistribution,
    pub epsilon: f64,
    pub n_steps: usize,
    pub tail: TailEstimate,
    pub checks: Vec<CertificateCheck>,
}

/// Minimal `N` at accuracy level `n`, and the empirical tail at that `N`
/// under both readings of the confidence statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityCheck {
    pub observable: String,
    pub initial: InitialDistribution,
    pub certificate: ConcentrationCertificate,
    pub n_steps_used: usize,
    pub tail: Option<TailEstimate>,
    /// Upper Wilson limit of the one-sided tail is below `1 - δ`.
    pub literal_reading_holds: Option<bool>,
    /// Upper Wilson limit of the one-sided tail is at most `δ`.
    pub conventional_reading_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub grid: ValidationGrid,
    pub p_used: f64,
    pub hyper_norm: f64,
    pub te_constant: f64,
    pub cells: Vec<ValidationCell>,
    pub sample_complexity: Vec<SampleComplexityCheck>,
    pub n_applicable: usize,
    pub n_exceeding_wilson_upper: usize,
    pub n_violated: usize,
}

impl ValidationReport {
    pub fn has_violation(&self) -> bool {
        self.n_violated > 0
    }

    /// Applicable certificates that do not clear the upper Wilson limit.
    pub fn below_wilson_upper(&self) -> impl Iterator<Item = (&ValidationCell, &CertificateCheck)> {
        self.cells
            .iter()
            .flat_map(|c| c.checks.iter().map(move |k| (c, k)))
            .filter(|(_, k)| k.applicable && !k.exceeds_wilson_upper)
    }
}

fn certify_or_fail(theorem: Theorem, result: Result<ConcentrationCertificate>) -> Result<ConcentrationCertificate> {
    match result {
        Ok(c) => Ok(c),
        Err(e) if e.is_numerical_failure() => Err(e),
        Err(e) => Ok(ConcentrationCertificate::failed(theorem, CertificateInputs::default(), &e)),
    }
}

/// Precondition label for tail bounds that assume `‖P‖_{2→p} ≤ 1`.
pub const HYPERCONTRACTIVE: &str = "closed-form bound on ‖P‖_{2→p} is at most 1";

pub fn run_validation(grid: &ValidationGrid) -> Result<ValidationReport> {
    grid.check()?;
    let spec = ChainSpec::linear_gaussian(grid.alpha, grid.noise_std)?;
    let mut mu = stationary_measure(&spec)?;
    if let Some(c) = grid.te_constant {
        mu = mu.with_te_constant(c)?;
    }
    let c = mu.te_constant.ok_or(Error::UnknownTEConstant)?;
    let p = find_hypercontractive_p(grid.alpha).ok_or_else(|| {
        Error::UnsupportedChain(format!("no hypercontractive exponent certified for alpha = {}", grid.alpha))
    })?;
    let hyper_norm = gaussian_hyperbound_value(grid.alpha, p)?;
    let observables: Vec<Observable> = grid
        .observables
        .iter()
        .map(|&k| Observable::builtin(k))
        .collect::<Result<_>>()?;
    let targets: Vec<f64> = observables.iter().map(|r| mu.expectation(r)).collect();
    let n_max = *grid.horizons.last().expect("checked non-empty");

    let mut cells = Vec::new();
    for (bi, beta) in grid.initials.iter().enumerate() {
        let cfg = TrajectoryConfig::new(n_max, grid.n_trajectories, grid.seed.wrapping_add(bi as u64), 0)?;
        let prefix = prefix_averages(&spec, beta, &observables, &cfg, &grid.horizons)?;
        for (oi, r) in observables.iter().enumerate() {
            for (hi, &n_steps) in grid.horizons.iter().enumerate() {
                let deviations: Vec<f64> = prefix.column(hi, oi).iter().map(|a| a - targets[oi]).collect();
                for &eps in &grid.epsilons {
                    let tail = TailEstimate::from_deviations(&deviations, eps);
                    let n = n_steps as u64;
                    let cor11 = certify_or_fail(
                        Theorem::HypercontractiveTail,
                        hypercontractive_tail_cor11(&mu, r, beta, p, n, eps, Some(grid.delta)),
                    )?
                    .with_precondition(HYPERCONTRACTIVE, hyper_norm <= 1.0);
                    let chernoff = certify_or_fail(
                        Theorem::ChernoffFK,
                        chernoff_fk_bound(&mu, r, beta, p, hyper_norm, n, eps),
                    )?;
                    cells.push(ValidationCell {
                        observable: r.label().to_string(),
                        initial: *beta,
                        epsilon: eps,
                        n_steps,
                        checks: vec![CertificateCheck::new(cor11, &tail), CertificateCheck::new(chernoff, &tail)],
                        tail,
                    });
                }
            }
        }
    }

    let mut sample_complexity = Vec::new();
    for (bi, beta) in grid.initials.iter().enumerate() {
        for r in &observables {
            for &level in &grid.sample_complexity_levels {
                let cert = certify_or_fail(
                    Theorem::HyperboundedSampleComplexity,
                    sample_complexity_thm10(&mu, r, beta, p, hyper_norm, level, grid.delta),
                )?;
                let mut check = SampleComplexityCheck {
                    observable: r.label().to_string(),
                    initial: *beta,
                    n_steps_used: 0,
                    tail: None,
                    literal_reading_holds: None,
                    conventional_reading_holds: None,
                    certificate: cert,
                };
                if check.certificate.valid && check.certificate.value.is_finite() {
                    let n_steps = (check.certificate.value.ceil() as usize).max(1);
                    let eps = check.certificate.epsilon_n.expect("set on success");
                    let seed = grid.seed.wrapping_add(1000 + bi as u64);
                    let cfg = TrajectoryConfig::new(n_steps, grid.n_trajectories, seed, 0)?;
                    let avg = prefix_averages(&spec, beta, std::slice::from_ref(r), &cfg, &[n_steps])?;
                    let target = mu.expectation(r);
                    let devs: Vec<f64> = avg.column(0, 0).iter().map(|a| a - target).collect();
                    let tail = TailEstimate::from_deviations(&devs, eps);
                    check.n_steps_used = n_steps;
                    check.literal_reading_holds = Some(tail.wilson_interval.1 < 1.0 - grid.delta);
                    check.conventional_reading_holds = Some(tail.wilson_interval.1 <= grid.delta);
                    check.tail = Some(tail);
                }
                sample_complexity.push(check);
            }
        }
    }

    let all_checks = || cells.iter().flat_map(|c| c.checks.iter());
    let n_applicable = all_checks().filter(|k| k.applicable).count();
    let n_exceeding_wilson_upper = all_checks().filter(|k| k.applicable && k.exceeds_wilson_upper).count();
    let n_violated = all_checks().filter(|k| k.violated).count();
    Ok(ValidationReport {
        grid: grid.clone(),
        p_used: p,
        hyper_norm,
        te_constant: c,
        cells,
        sample_complexity,
        n_applicable,
        n_exceeding_wilson_upper,
        n_violated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> ValidationGrid {
        ValidationGrid {
            epsilons: vec![0.3, 1.0],
            horizons: vec![50, 200],
            n_trajectories: 400,
            ..ValidationGrid::reference(11)
        }
    }

    #[test]
    fn small_grid_has_no_violations() {
        let report = run_validation(&small_grid()).unwrap();
        assert_eq!(report.cells.len(), 2 * 2 * 2 * 2);
        assert!(!report.has_violation());
        assert!(report.p_used > 3.4 && report.p_used < 3.5);
        assert!(report.hyper_norm <= 1.0);
        for cell in &report.cells {
            for check in &cell.checks {
                assert!(check.certificate.valid);
            }
        }
        assert_eq!(report.sample_complexity.len(), 4);
    }

    #[test]
    fn validation_is_deterministic() {
        let a = run_validation(&small_grid()).unwrap();
        let b = run_validation(&small_grid()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn dirac_start_yields_invalid_certificates() {
        let grid = ValidationGrid {
            initials: vec![InitialDistribution::Dirac { point: 0.0 }],
            sample_complexity_levels: vec![],
            ..small_grid()
        };
        let report = run_validation(&grid).unwrap();
        assert_eq!(report.n_applicable, 0);
        assert!(report.cells.iter().all(|c| c.checks.iter().all(|k| !k.certificate.valid)));
    }

    #[test]
    fn rejects_bad_grids() {
        let bad = ValidationGrid {
            horizons: vec![200, 50],
            ..small_grid()
        };
        assert!(run_validation(&bad).is_err());
        let bad = ValidationGrid {
            alpha: 0.95,
            ..small_grid()
        };
        assert!(matches!(run_validation(&bad), Err(Error::UnsupportedChain(_))));
    }
}
