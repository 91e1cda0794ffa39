//! Certified concentration bounds.
//!
//! Every bound is returned as a [`ConcentrationCertificate`] that records
//! the theorem used, all input constants, the raw value, a clamped value for
//! tail probabilities, and the list of preconditions that were checked.
//! Unmet preconditions are reported as errors by the constructors; callers
//! that prefer a vacuous certificate can use [`ConcentrationCertificate::failed`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chain::{try_density_ratio_l2, InitialDistribution, Observable, StationaryMeasure};
use crate::error::{Error, Result};
use crate::serde_float;

/// Upper end of the search range of [`find_hypercontractive_p`].
pub const P_MAX: f64 = 64.0;

/// Bisection tolerance of [`find_hypercontractive_p`].
pub const P_TOLERANCE: f64 = 1e-9;

/// Agreement required between the closed-form and searched infimum.
pub const INFIMUM_AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    MultOpNorm,
    ChernoffFK,
    HyperboundedSampleComplexity,
    HypercontractiveTail,
    GaussianHyperbound,
}

impl Theorem {
    pub fn name(self) -> &'static str {
        match self {
            Theorem::MultOpNorm => "MultOpNorm",
            Theorem::ChernoffFK => "ChernoffFK",
            Theorem::HyperboundedSampleComplexity => "HyperboundedSampleComplexity",
            Theorem::HypercontractiveTail => "HypercontractiveTail",
            Theorem::GaussianHyperbound => "GaussianHyperbound",
        }
    }

    /// Whether the value is a probability (and therefore clamped to 1).
    pub fn is_tail_probability(self) -> bool {
        matches!(self, Theorem::ChernoffFK | Theorem::HypercontractiveTail)
    }
}

/// All constants a certificate depends on; absent ones are `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    #[serde(with = "serde_float::option")]
    pub p: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub q: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub te_constant: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub lipschitz_seminorm: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub observable_mean: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub density_ratio_l2: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub hyper_norm: Option<f64>,
    pub n: Option<u64>,
    #[serde(with = "serde_float::option")]
    pub epsilon: Option<f64>,
    #[serde(with = "serde_float::option")]
    pub delta: Option<f64>,
    pub n_steps: Option<u64>,
    #[serde(with = "serde_float::option")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub condition: String,
    pub holds: bool,
}

impl Precondition {
    fn new(condition: impl Into<String>, holds: bool) -> Self {
        Self {
            condition: condition.into(),
            holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCertificate {
    pub theorem: Theorem,
    pub inputs: CertificateInputs,
    #[serde(with = "serde_float")]
    pub value: f64,
    /// `min(value, 1)` for tail probabilities.
    #[serde(with = "serde_float::option")]
    pub value_clamped: Option<f64>,
    pub valid: bool,
    pub precondition_report: Vec<Precondition>,
    /// `vacuous` for tail bounds ≥ 1, `hypercontractive` for operator norms ≤ 1.
    pub flags: Vec<String>,
    /// Minimiser `s*` of the Chernoff exponent.
    #[serde(with = "serde_float::option")]
    pub s_star: Option<f64>,
    /// Minimal `N` from the same tail formula at the supplied `δ`.
    #[serde(with = "serde_float::option")]
    pub min_n_companion: Option<f64>,
    /// Minimal `N` when the target is read as `probability ≤ δ`.
    #[serde(with = "serde_float::option")]
    pub min_n_conventional: Option<f64>,
    /// Accuracy `ε(n) = sqrt(C) ‖r‖_L / n`.
    #[serde(with = "serde_float::option")]
    pub epsilon_n: Option<f64>,
}

impl ConcentrationCertificate {
    fn new(theorem: Theorem, inputs: CertificateInputs, value: f64, preconditions: Vec<Precondition>) -> Self {
        let valid = preconditions.iter().all(|c| c.holds);
        let mut flags = Vec::new();
        let value_clamped = if theorem.is_tail_probability() {
            if value >= 1.0 {
                flags.push("vacuous".to_string());
            }
            Some(value.min(1.0))
        } else {
            None
        };
        Self {
            theorem,
            inputs,
            value,
            value_clamped,
            valid,
            precondition_report: preconditions,
            flags,
            s_star: None,
            min_n_companion: None,
            min_n_conventional: None,
            epsilon_n: None,
        }
    }

    /// A certificate with `valid = false` recording why it could not be computed.
    pub fn failed(theorem: Theorem, inputs: CertificateInputs, error: &Error) -> Self {
        let mut cert = Self::new(theorem, inputs, f64::NAN, vec![Precondition::new(error.to_string(), false)]);
        if theorem.is_tail_probability() {
            cert.value_clamped = Some(1.0);
            cert.flags = vec!["vacuous".to_string()];
        }
        cert
    }

    /// Appends a precondition checked by the caller and updates `valid`.
    pub fn with_precondition(mut self, condition: impl Into<String>, holds: bool) -> Self {
        self.precondition_report.push(Precondition::new(condition, holds));
        self.valid &= holds;
        self
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub const CSV_HEADER: &'static str = "theorem,valid,value,value_clamped,p,q,te_constant,lipschitz_seminorm,\
observable_mean,density_ratio_l2,hyper_norm,n,epsilon,delta,n_steps,alpha,flags";

    /// One CSV row matching [`Self::CSV_HEADER`]; absent fields are empty.
    pub fn csv_row(&self) -> String {
        fn float(out: &mut String, v: Option<f64>) {
            out.push(',');
            if let Some(v) = v {
                write!(out, "{v:.16e}").unwrap();
            }
        }
        fn int(out: &mut String, v: Option<u64>) {
            out.push(',');
            if let Some(v) = v {
                write!(out, "{v}").unwrap();
            }
        }
        let i = &self.inputs;
        let mut out = format!("{},{}", self.theorem.name(), self.valid);
        float(&mut out, Some(self.value));
        float(&mut out, self.value_clamped);
        float(&mut out, i.p);
        float(&mut out, i.q);
        float(&mut out, i.te_constant);
        float(&mut out, i.lipschitz_seminorm);
        float(&mut out, i.observable_mean);
        float(&mut out, i.density_ratio_l2);
        float(&mut out, i.hyper_norm);
        int(&mut out, i.n);
        float(&mut out, i.epsilon);
        float(&mut out, i.delta);
        int(&mut out, i.n_steps);
        float(&mut out, i.alpha);
        out.push(',');
        out.push_str(&self.flags.join(";"));
        out
    }
}

fn check_exponent(name: &str, p: f64) -> Result<()> {
    if p.is_nan() || p <= 2.0 {
        Err(Error::InvalidExponent(format!("{name} = {p} must exceed 2")))
    } else {
        Ok(())
    }
}

/// `2p / (p - 2)`, with the `p → ∞` limit 2.
fn conjugate_factor(p: f64) -> f64 {
    if p.is_infinite() {
        2.0
    } else {
        2.0 * p / (p - 2.0)
    }
}

fn te_constant(mu: &StationaryMeasure) -> Result<f64> {
    mu.te_constant.ok_or(Error::UnknownTEConstant)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

/// Norm bound for multiplication by `e^r` from `L^p(μ)` to `L²(μ)`:
/// `exp(μ(r) + (2p/(p-2)) C ‖r‖²_L / 2)`.
pub fn mult_op_norm_bound(mu: &StationaryMeasure, r: &Observable, p: f64) -> Result<ConcentrationCertificate> {
    check_exponent("p", p)?;
    let c = te_constant(mu)?;
    let l = r.lipschitz_seminorm();
    let mean = mu.expectation(r);
    if !mean.is_finite() {
        return Err(Error::QuadratureFailure(format!("μ(r) evaluated to {mean}")));
    }
    let value = (mean + conjugate_factor(p) * c * l * l / 2.0).exp();
    let inputs = CertificateInputs {
        p: Some(p),
        te_constant: Some(c),
        lipschitz_seminorm: Some(l),
        observable_mean: Some(mean),
        ..Default::default()
    };
    let pre = vec![
        Precondition::new("p > 2", true),
        Precondition::new("transport-entropy constant known", true),
        Precondition::new("Lipschitz seminorm finite", l.is_finite()),
    ];
    Ok(ConcentrationCertificate::new(Theorem::MultOpNorm, inputs, value, pre))
}

/// Bound on `‖e^{s r} P‖_{2→2}` obtained by composing the multiplication
/// bound for `s r` with `‖P‖_{2→p} ≤ hyper_norm`.
pub fn feynman_kac_norm_bound(mu: &StationaryMeasure, r: &Observable, p: f64, hyper_norm: f64, s: f64) -> Result<f64> {
    positive("hyper_norm", hyper_norm)?;
    let cert = mult_op_norm_bound(mu, &r.scaled(s), p)?;
    Ok(hyper_norm * cert.value)
}

/// Per-step decay `ε² (p - 2) / (4 p C ‖r‖²_L)` of the optimised Chernoff
/// exponent. A constant observable never deviates, so its rate is infinite
/// for `ε > 0`.
fn tail_rate(p: f64, c: f64, l: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return 0.0;
    }
    if l == 0.0 {
        return f64::INFINITY;
    }
    let ratio = if p.is_infinite() { 1.0 } else { (p - 2.0) / p };
    epsilon * epsilon * ratio / (4.0 * c * l * l)
}

/// `inf_s [ (2p/(p-2)) s² C ‖r‖²_L / 2 - s ε ]` in closed form, with its minimiser.
pub fn chernoff_infimum_closed_form(p: f64, c: f64, lipschitz: f64, epsilon: f64) -> (f64, f64) {
    let a = conjugate_factor(p) * c * lipschitz * lipschitz / 2.0;
    if a == 0.0 {
        return if epsilon == 0.0 { (0.0, 0.0) } else { (f64::INFINITY, f64::NEG_INFINITY) };
    }
    (epsilon / (2.0 * a), -tail_rate(p, c, lipschitz, epsilon))
}

/// The same infimum by golden-section search over `s ≥ 0`.
pub fn chernoff_infimum_search(p: f64, c: f64, lipschitz: f64, epsilon: f64) -> (f64, f64) {
    let a = conjugate_factor(p) * c * lipschitz * lipschitz / 2.0;
    let f = |s: f64| a * s * s - s * epsilon;
    let mut hi = 1.0;
    while f(hi) <= f(hi / 2.0) && hi < 1e12 {
        hi *= 2.0;
    }
    let (mut lo, mut hi) = (0.0, hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let s = 0.5 * (lo + hi);
    (s, f(s))
}

fn tail_inputs(mu: &StationaryMeasure, r: &Observable, ratio: f64, p: f64, c: f64) -> CertificateInputs {
    CertificateInputs {
        p: Some(p),
        te_constant: Some(c),
        lipschitz_seminorm: Some(r.lipschitz_seminorm()),
        observable_mean: Some(mu.expectation(r)),
        density_ratio_l2: Some(ratio),
        ..Default::default()
    }
}

/// Feynman–Kac Chernoff bound on `P_β((1/N) Σ r(x_i) - μ(r) ≥ ε)`:
/// `‖dβ/dμ‖₂ · exp(N (ln hyper_norm - ε² (p-2) / (4 p C ‖r‖²_L)))`.
pub fn chernoff_fk_bound(
    mu: &StationaryMeasure,
    r: &Observable,
    beta: &InitialDistribution,
    p: f64,
    hyper_norm: f64,
    n_steps: u64,
    epsilon: f64,
) -> Result<ConcentrationCertificate> {
    check_exponent("p", p)?;
    positive("hyper_norm", hyper_norm)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid("epsilon", format!("must be non-negative, got {epsilon}")));
    }
    let c = te_constant(mu)?;
    let ratio = try_density_ratio_l2(beta, mu)?;
    let l = r.lipschitz_seminorm();

    let (s_star, infimum) = chernoff_infimum_closed_form(p, c, l, epsilon);
    let agree = if infimum.is_finite() {
        let (_, searched) = chernoff_infimum_search(p, c, l, epsilon);
        (searched - infimum).abs() <= INFIMUM_AGREEMENT_TOL * infimum.abs().max(1.0)
    } else {
        true
    };
    let per_step = hyper_norm.ln() - tail_rate(p, c, l, epsilon);
    let value = if n_steps == 0 { ratio } else { ratio * (n_steps as f64 * per_step).exp() };

    let mut inputs = tail_inputs(mu, r, ratio, p, c);
    inputs.hyper_norm = Some(hyper_norm);
    inputs.n_steps = Some(n_steps);
    inputs.epsilon = Some(epsilon);
    let pre = vec![
        Precondition::new("p > 2", true),
        Precondition::new("epsilon >= 0", true),
        Precondition::new("density ratio finite", true),
        Precondition::new("closed-form infimum matches golden-section search", agree),
    ];
    let mut cert = ConcentrationCertificate::new(Theorem::ChernoffFK, inputs, value, pre);
    cert.s_star = Some(s_star);
    Ok(cert)
}

/// Minimal `N` such that the hyperbounded estimate holds with accuracy
/// `ε(n) = sqrt(C) ‖r‖_L / n`:
/// `ln(‖dβ/dμ‖₂ / (1-δ)) · 4 n² q / ((q-2) - 4 n² q ln hyper_norm)`.
///
/// The conventional reading (`≤ δ`) replaces `1-δ` by `δ` and is reported
/// in `min_n_conventional`.
pub fn sample_complexity_thm10(
    mu: &StationaryMeasure,
    r: &Observable,
    beta: &InitialDistribution,
    q: f64,
    hyper_norm: f64,
    n: u64,
    delta: f64,
) -> Result<ConcentrationCertificate> {
    check_exponent("q", q)?;
    if !q.is_finite() {
        return Err(Error::InvalidExponent("q must be finite".into()));
    }
    positive("hyper_norm", hyper_norm)?;
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let c = te_constant(mu)?;
    let ratio = try_density_ratio_l2(beta, mu)?;

    let threshold = (0.5 * (0.5 - 1.0 / q)).exp();
    if hyper_norm >= threshold {
        return Err(Error::NormConditionViolated {
            norm: hyper_norm,
            threshold,
        });
    }
    let n2q4 = 4.0 * (n as f64) * (n as f64) * q;
    let denominator = (q - 2.0) - n2q4 * hyper_norm.ln();
    if denominator <= 0.0 {
        return Err(Error::NegativeDenominator { denominator, n });
    }
    let value = (ratio / (1.0 - delta)).ln() * n2q4 / denominator;

    let l = r.lipschitz_seminorm();
    let mut inputs = tail_inputs(mu, r, ratio, q, c);
    inputs.p = None;
    inputs.q = Some(q);
    inputs.hyper_norm = Some(hyper_norm);
    inputs.n = Some(n);
    inputs.delta = Some(delta);
    let pre = vec![
        Precondition::new("q > 2", true),
        Precondition::new("n >= 1", true),
        Precondition::new("delta in (0, 1)", true),
        Precondition::new("density ratio finite", true),
        Precondition::new(format!("hyper_norm < {threshold}"), true),
        Precondition::new("denominator positive", true),
    ];
    let mut cert = ConcentrationCertificate::new(Theorem::HyperboundedSampleComplexity, inputs, value, pre);
    cert.min_n_conventional = Some((ratio / delta).ln() * n2q4 / denominator);
    cert.epsilon_n = Some(c.sqrt() * l / n as f64);
    Ok(cert)
}

/// Tail bound for a hypercontractive chain:
/// `‖dβ/dμ‖₂ · exp(-N ε² (p-2) / (4 C ‖r‖²_L p))`.
///
/// With `delta` supplied, also reports the companion minimal `N`,
/// `ln(‖dβ/dμ‖₂ / (1-δ)) · 4 C ‖r‖²_L p / (ε² (p-2))`.
pub fn hypercontractive_tail_cor11(
    mu: &StationaryMeasure,
    r: &Observable,
    beta: &InitialDistribution,
    p: f64,
    n_steps: u64,
    epsilon: f64,
    delta: Option<f64>,
) -> Result<ConcentrationCertificate> {
    check_exponent("p", p)?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if let Some(d) = delta {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {d}")));
        }
    }
    let c = te_constant(mu)?;
    let ratio = try_density_ratio_l2(beta, mu)?;
    let rate = tail_rate(p, c, r.lipschitz_seminorm(), epsilon);
    let value = if n_steps == 0 { ratio } else { ratio * (-(n_steps as f64) * rate).exp() };

    let mut inputs = tail_inputs(mu, r, ratio, p, c);
    inputs.n_steps = Some(n_steps);
    inputs.epsilon = Some(epsilon);
    inputs.delta = delta;
    let pre = vec![
        Precondition::new("p > 2", true),
        Precondition::new("epsilon > 0", true),
        Precondition::new("density ratio finite", true),
    ];
    let mut cert = ConcentrationCertificate::new(Theorem::HypercontractiveTail, inputs, value, pre);
    cert.min_n_companion = delta.map(|d| (ratio / (1.0 - d)).ln() / rate);
    Ok(cert)
}

/// Closed-form upper bound on `‖P‖_{2→p}` for the linear-Gaussian chain,
/// valid for `2 < p < 1 + 1/α²`.
pub fn gaussian_hyperbound_value(alpha: f64, p: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha.abs() < 1.0) {
        return Err(Error::invalid("alpha", format!("|alpha| must be below 1, got {alpha}")));
    }
    check_exponent("p", p)?;
    let a2 = alpha * alpha;
    let limit = if a2 == 0.0 { f64::INFINITY } else { 1.0 + 1.0 / a2 };
    if p >= limit || !p.is_finite() {
        return Err(Error::OutsideValidityRegion { p, limit });
    }
    let x = 1.0 - a2 * p / (1.0 + a2);
    Ok((1.0 - a2 * a2).powf(-0.25) * x.powf(-1.0 / (2.0 * p)) * (-(2.0 / p) * x).exp())
}

pub fn gaussian_hyperbound(alpha: f64, p: f64) -> Result<ConcentrationCertificate> {
    let value = gaussian_hyperbound_value(alpha, p)?;
    let inputs = CertificateInputs {
        p: Some(p),
        alpha: Some(alpha),
        ..Default::default()
    };
    let pre = vec![
        Precondition::new("|alpha| < 1", true),
        Precondition::new("p > 2", true),
        Precondition::new("p < 1 + 1/alpha^2", true),
    ];
    let mut cert = ConcentrationCertificate::new(Theorem::GaussianHyperbound, inputs, value, pre);
    if value <= 1.0 {
        cert.flags.push("hypercontractive".to_string());
    }
    Ok(cert)
}

/// Largest `p` in `(2, min(1 + 1/α², P_MAX)]` at which the Gaussian
/// hyperbound is at most 1, to within [`P_TOLERANCE`]. `None` when no such
/// `p` exists or `|α| ≥ 1`.
pub fn find_hypercontractive_p(alpha: f64) -> Option<f64> {
    if !(alpha.is_finite() && alpha.abs() < 1.0) {
        return None;
    }
    let a2 = alpha * alpha;
    let limit = if a2 == 0.0 { f64::INFINITY } else { 1.0 + 1.0 / a2 };
    let ok = |p: f64| gaussian_hyperbound_value(alpha, p).map(|v| v <= 1.0).unwrap_or(false);
    if limit > P_MAX && ok(P_MAX) {
        return Some(P_MAX);
    }
    let upper = limit.min(P_MAX);
    const GRID: usize = 4096;
    let grid = |i: usize| 2.0 + (upper - 2.0) * i as f64 / (GRID + 1) as f64;
    let last_ok = (1..=GRID).rev().find(|&i| ok(grid(i)))?;
    let (mut lo, mut hi) = (grid(last_ok), grid(last_ok + 1));
    while hi - lo > P_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}
