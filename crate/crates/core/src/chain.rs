//! Chain models, stationary measures, observables and initial laws.
//!
//! The reference model is the scalar linear-Gaussian recursion
//! `x_{k+1} = alpha * x_k + noise_std * w_k` with `w_k ~ N(0, 1)` iid,
//! whose stationary law is `N(0, noise_std² / (1 - alpha²))`. Arbitrary
//! one-dimensional kernels can be plugged in through [`TransitionKernel`].

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gaussian_expectation;

/// A one-dimensional Markov transition kernel supplied by the caller.
pub trait TransitionKernel: Send + Sync {
    /// Draws `x_{k+1}` given `x_k = x`.
    fn sample(&self, x: f64, rng: &mut dyn RngCore) -> f64;

    /// Transition density `p(x, y)` with respect to Lebesgue measure.
    fn density(&self, x: f64, y: f64) -> f64;
}

#[derive(Clone)]
pub enum ChainSpec {
    LinearGaussian1D { alpha: f64, noise_std: f64 },
    CustomKernel(Arc<dyn TransitionKernel>),
}

impl fmt::Debug for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainSpec::LinearGaussian1D { alpha, noise_std } => f
                .debug_struct("LinearGaussian1D")
                .field("alpha", alpha)
                .field("noise_std", noise_std)
                .finish(),
            ChainSpec::CustomKernel(_) => f.write_str("CustomKernel(..)"),
        }
    }
}

impl ChainSpec {
    /// Smallest admitted distance between `|alpha|` and the unit circle.
    /// Closer values make `1 - alpha²` lose all significant digits.
    pub const STABILITY_MARGIN: f64 = 1e-12;

    /// The AR(1) chain. Requires `|alpha| < 1` (up to
    /// [`Self::STABILITY_MARGIN`]) and `noise_std > 0`.
    pub fn linear_gaussian(alpha: f64, noise_std: f64) -> Result<Self> {
        if !(alpha.is_finite() && 1.0 - alpha.abs() > Self::STABILITY_MARGIN) {
            return Err(Error::invalid(
                "alpha",
                format!("stability requires |alpha| < 1, got {alpha}"),
            ));
        }
        if !(noise_std.is_finite() && noise_std > 0.0) {
            return Err(Error::invalid(
                "noise_std",
                format!("must be positive, got {noise_std}"),
            ));
        }
        Ok(ChainSpec::LinearGaussian1D { alpha, noise_std })
    }

    pub fn custom(kernel: Arc<dyn TransitionKernel>) -> Self {
        ChainSpec::CustomKernel(kernel)
    }

    /// The autoregressive coefficient, when the chain is linear-Gaussian.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ChainSpec::LinearGaussian1D { alpha, .. } => Some(*alpha),
            ChainSpec::CustomKernel(_) => None,
        }
    }

    pub fn noise_std(&self) -> Option<f64> {
        match self {
            ChainSpec::LinearGaussian1D { noise_std, .. } => Some(*noise_std),
            ChainSpec::CustomKernel(_) => None,
        }
    }

    /// One transition from `x`.
    #[inline]
    pub fn step(&self, x: f64, rng: &mut dyn RngCore) -> f64 {
        match self {
            ChainSpec::LinearGaussian1D { alpha, noise_std } => {
                let w: f64 = StandardNormal.sample(rng);
                alpha * x + noise_std * w
            }
            ChainSpec::CustomKernel(k) => k.sample(x, rng),
        }
    }

    /// Transition density `p(x, y)`.
    pub fn transition_density(&self, x: f64, y: f64) -> f64 {
        match self {
            ChainSpec::LinearGaussian1D { alpha, noise_std } => {
                normal_pdf(y, alpha * x, noise_std * noise_std)
            }
            ChainSpec::CustomKernel(k) => k.density(x, y),
        }
    }
}

pub(crate) fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// A Gaussian stationary law together with its transport-entropy constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeasure {
    pub mean: f64,
    pub variance: f64,
    /// Constant `C` of the `T1(C)` inequality under the Euclidean metric.
    /// `None` when unknown.
    pub te_constant: Option<f64>,
}

impl StationaryMeasure {
    /// A Gaussian law. Its transport-entropy constant defaults to its
    /// variance, the sharp value for `N(m, v)` under the Euclidean metric.
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid("variance", format!("must be positive, got {variance}")));
        }
        Ok(Self {
            mean,
            variance,
            te_constant: Some(variance),
        })
    }

    /// Overrides the transport-entropy constant (e.g. to force `C = 1`).
    pub fn with_te_constant(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("te_constant", format!("must be positive, got {c}")));
        }
        self.te_constant = Some(c);
        Ok(self)
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `μ(f)` by quadrature; `kinks` lists points where `f` is not smooth.
    pub fn expectation_with_kinks(&self, kinks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        gaussian_expectation(self.mean, self.std(), kinks, f)
    }

    /// `μ(r)` for an observable.
    pub fn expectation(&self, r: &Observable) -> f64 {
        self.expectation_with_kinks(r.kinks(), |x| r.eval(x))
    }
}

/// Stationary law of the chain; only the linear-Gaussian chain has one in
/// closed form.
pub fn stationary_measure(spec: &ChainSpec) -> Result<StationaryMeasure> {
    match spec {
        ChainSpec::LinearGaussian1D { alpha, noise_std } => {
            StationaryMeasure::gaussian(0.0, noise_std * noise_std / (1.0 - alpha * alpha))
        }
        ChainSpec::CustomKernel(_) => Err(Error::UnsupportedChain(
            "custom kernels have no closed-form stationary measure".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
}

/// Observables with a known Lipschitz constant that the config format can name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinObservable {
    Identity,
    Abs,
    /// `scale * tanh(x / scale)`: linear near zero, saturating at `±scale`.
    ClippedLinear { scale: f64 },
}

/// A reward / observable `r` together with its Lipschitz seminorm.
#[derive(Clone)]
pub struct Observable {
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
    metric: Metric,
    kinks: Vec<f64>,
    label: String,
    builtin: Option<BuiltinObservable>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("label", &self.label)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Observable {
    pub fn custom(
        label: impl Into<String>,
        lipschitz: f64,
        func: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::invalid(
                "lipschitz_seminorm",
                format!("must be finite and non-negative, got {lipschitz}"),
            ));
        }
        Ok(Self {
            func: Arc::new(func),
            lipschitz,
            metric: Metric::Euclidean,
            kinks: Vec::new(),
            label: label.into(),
            builtin: None,
        })
    }

    /// Declares points where the function is not differentiable, so that
    /// quadrature panels are split there.
    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn builtin(kind: BuiltinObservable) -> Result<Self> {
        let obs = match kind {
            BuiltinObservable::Identity => Self::custom("identity", 1.0, |x| x)?,
            BuiltinObservable::Abs => Self::custom("abs", 1.0, f64::abs)?.with_kinks(vec![0.0]),
            BuiltinObservable::ClippedLinear { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::invalid("scale", format!("must be positive, got {scale}")));
                }
                Self::custom("clipped_linear", 1.0, move |x| scale * (x / scale).tanh())?
            }
        };
        Ok(Self {
            builtin: Some(kind),
            ..obs
        })
    }

    pub fn identity() -> Self {
        Self::builtin(BuiltinObservable::Identity).expect("identity is valid")
    }

    pub fn abs() -> Self {
        Self::builtin(BuiltinObservable::Abs).expect("abs is valid")
    }

    pub fn constant(c: f64) -> Self {
        Self::custom("constant", 0.0, move |_| c).expect("zero seminorm is valid")
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }

    pub fn lipschitz_seminorm(&self) -> f64 {
        self.lipschitz
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn builtin_kind(&self) -> Option<BuiltinObservable> {
        self.builtin
    }

    /// `s * r` with seminorm `|s| * ‖r‖_L`.
    pub fn scaled(&self, s: f64) -> Self {
        let inner = Arc::clone(&self.func);
        Self {
            func: Arc::new(move |x| s * inner(x)),
            lipschitz: s.abs() * self.lipschitz,
            metric: self.metric,
            kinks: self.kinks.clone(),
            label: format!("{}*{}", s, self.label),
            builtin: None,
        }
    }
}

/// Law of `x_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDistribution {
    Stationary,
    Gaussian { mean: f64, variance: f64 },
    Dirac { point: f64 },
}

impl InitialDistribution {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid(
                "variance",
                format!("initial variance must be positive, got {variance}"),
            ));
        }
        Ok(InitialDistribution::Gaussian { mean, variance })
    }

    pub fn label(&self) -> String {
        match self {
            InitialDistribution::Stationary => "stationary".into(),
            InitialDistribution::Gaussian { mean, variance } => format!("N({mean},{variance})"),
            InitialDistribution::Dirac { point } => format!("dirac({point})"),
        }
    }

    /// Draws `x_0`. `stationary` is required for [`InitialDistribution::Stationary`].
    pub fn sample(&self, stationary: Option<&StationaryMeasure>, rng: &mut dyn RngCore) -> Result<f64> {
        match *self {
            InitialDistribution::Stationary => {
                let mu = stationary.ok_or_else(|| {
                    Error::UnsupportedChain("stationary start needs a known stationary measure".into())
                })?;
                let z: f64 = StandardNormal.sample(rng);
                Ok(mu.mean + mu.std() * z)
            }
            InitialDistribution::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                Ok(mean + variance.sqrt() * z)
            }
            InitialDistribution::Dirac { point } => Ok(point),
        }
    }
}

/// `‖dβ/dμ‖_{L²(μ)}`.
///
/// For Gaussian `β = N(m_b, v_b)` and `μ = N(m, v)` the chi-square integral
/// converges iff `2 v - v_b > 0`, and then
/// `∫(dβ/dμ)² dμ = v / sqrt(v_b (2v - v_b)) · exp((m_b - m)² / (2v - v_b))`.
/// A Dirac start is singular with respect to `μ` and returns `+∞`.
pub fn density_ratio_l2(beta: &InitialDistribution, mu: &StationaryMeasure) -> f64 {
    match *beta {
        InitialDistribution::Stationary => 1.0,
        InitialDistribution::Gaussian { mean, variance } => {
            let gap = 2.0 * mu.variance - variance;
            if gap <= 0.0 {
                return f64::INFINITY;
            }
            let dm = mean - mu.mean;
            let chi2_plus_one = mu.variance / (variance * gap).sqrt() * (dm * dm / gap).exp();
            chi2_plus_one.sqrt()
        }
        InitialDistribution::Dirac { .. } => f64::INFINITY,
    }
}

/// Like [`density_ratio_l2`] but reports divergence as an error.
pub fn try_density_ratio_l2(beta: &InitialDistribution, mu: &StationaryMeasure) -> Result<f64> {
    let ratio = density_ratio_l2(beta, mu);
    if ratio.is_finite() {
        Ok(ratio)
    } else {
        Err(Error::DivergentRatio(format!(
            "initial law {} has no square-integrable density against N({}, {})",
            beta.label(),
            mu.mean,
            mu.variance
        )))
    }
}
