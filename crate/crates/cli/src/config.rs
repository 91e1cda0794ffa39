//! Experiment configuration files.

use std::path::Path;

use chainbound::chain::{BuiltinObservable, ChainSpec, InitialDistribution, Observable, StationaryMeasure};
use chainbound::{stationary_measure, Error as CoreError};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chain: ChainConfig,
    pub observable: BuiltinObservable,
    #[serde(default = "stationary")]
    pub initial: InitialDistribution,
    pub seed: u64,
    /// Overrides the transport-entropy constant of the stationary law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub te_constant: Option<f64>,
    pub task: TaskConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn stationary() -> InitialDistribution {
    InitialDistribution::Stationary
}

fn default_output_dir() -> String {
    "reports".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ChainConfig {
    LinearGaussian1D {
        alpha: f64,
        #[serde(default = "one")]
        noise_std: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Certify(CertifyTask),
    Simulate(SimulateTask),
    Spectral(SpectralTask),
    Validate(ValidateTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Certify(_) => "certify",
            TaskConfig::Simulate(_) => "simulate",
            TaskConfig::Spectral(_) => "spectral",
            TaskConfig::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyTask {
    /// Exponents for the multiplication, Chernoff and tail bounds. Empty
    /// means the largest hypercontractive exponent of the chain.
    #[serde(default)]
    pub p_grid: Vec<f64>,
    /// Exponents for the sample-complexity bound; empty means `p_grid`.
    #[serde(default)]
    pub q_grid: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub n_steps: Vec<u64>,
    #[serde(default = "default_levels")]
    pub n_levels: Vec<u64>,
    pub delta: f64,
    /// Assumed `‖P‖_{2→p}`; by default the Gaussian closed form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper_norm: Option<f64>,
}

fn default_levels() -> Vec<u64> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    pub n_steps: usize,
    pub n_trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralTask {
    pub k: usize,
    #[serde(default = "default_max_power")]
    pub max_power: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ulam_cells: Option<usize>,
    #[serde(default = "default_ulam_samples")]
    pub ulam_samples_per_cell: usize,
    #[serde(default = "default_ulam_half_width")]
    pub ulam_half_width_sd: f64,
    #[serde(default)]
    pub probe_q: Vec<f64>,
    #[serde(default = "default_probe_functions")]
    pub probe_functions: usize,
}

fn default_max_power() -> usize {
    20
}

fn default_ulam_samples() -> usize {
    10_000
}

fn default_ulam_half_width() -> f64 {
    6.0
}

fn default_probe_functions() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateTask {
    /// Observables to validate; empty means the top-level observable.
    #[serde(default)]
    pub observables: Vec<BuiltinObservable>,
    /// Initial laws to validate; empty means the top-level initial law.
    #[serde(default)]
    pub initials: Vec<InitialDistribution>,
    pub epsilons: Vec<f64>,
    pub horizons: Vec<usize>,
    pub n_trajectories: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_levels")]
    pub sample_complexity_levels: Vec<u64>,
}

fn default_delta() -> f64 {
    0.5
}

/// Library objects built from a checked configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ChainSpec,
    pub alpha: f64,
    pub noise_std: f64,
    pub mu: StationaryMeasure,
    pub observable: Observable,
}

fn field(path: &str, err: CoreError) -> CliError {
    CliError::Config {
        field: path.to_string(),
        message: err.to_string(),
    }
}

fn require(path: &str, ok: bool, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config {
            field: path.to_string(),
            message: message.to_string(),
        })
    }
}

fn positive_all(path: &str, values: &[f64]) -> Result<(), CliError> {
    for (i, v) in values.iter().enumerate() {
        require(&format!("{path}[{i}]"), v.is_finite() && *v > 0.0, "must be positive and finite")?;
    }
    Ok(())
}

fn exponents(path: &str, values: &[f64]) -> Result<(), CliError> {
    for (i, v) in values.iter().enumerate() {
        require(&format!("{path}[{i}]"), *v > 2.0 && v.is_finite(), "exponent must be finite and exceed 2")?;
    }
    Ok(())
}

fn probability(path: &str, v: f64) -> Result<(), CliError> {
    require(path, v > 0.0 && v < 1.0, "must lie in (0, 1)")
}

fn check_initial(path: &str, beta: &InitialDistribution) -> Result<(), CliError> {
    match *beta {
        InitialDistribution::Gaussian { mean, variance } => {
            require(&format!("{path}.mean"), mean.is_finite(), "must be finite")?;
            InitialDistribution::gaussian(mean, variance).map_err(|e| field(&format!("{path}.variance"), e))?;
        }
        InitialDistribution::Dirac { point } => require(&format!("{path}.point"), point.is_finite(), "must be finite")?,
        InitialDistribution::Stationary => {}
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads and strictly parses a config file. Parse errors name the
    /// offending field path.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            field: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                field: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    /// Checks every numeric range and builds the library objects.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let ChainConfig::LinearGaussian1D { alpha, noise_std } = self.chain;
        let spec = ChainSpec::linear_gaussian(alpha, noise_std).map_err(|e| match &e {
            CoreError::InvalidParameter { name, .. } => field(&format!("chain.{name}"), e.clone()),
            _ => field("chain", e.clone()),
        })?;
        let mut mu = stationary_measure(&spec).map_err(|e| field("chain", e))?;
        if let Some(c) = self.te_constant {
            mu = mu.with_te_constant(c).map_err(|e| field("te_constant", e))?;
        }
        let observable = Observable::builtin(self.observable).map_err(|e| field("observable.scale", e))?;
        check_initial("initial", &self.initial)?;

        match &self.task {
            TaskConfig::Certify(t) => {
                exponents("task.p_grid", &t.p_grid)?;
                exponents("task.q_grid", &t.q_grid)?;
                positive_all("task.epsilons", &t.epsilons)?;
                require("task.epsilons", !t.epsilons.is_empty(), "must not be empty")?;
                require("task.n_steps", !t.n_steps.is_empty(), "must not be empty")?;
                for (i, n) in t.n_levels.iter().enumerate() {
                    require(&format!("task.n_levels[{i}]"), *n >= 1, "must be at least 1")?;
                }
                probability("task.delta", t.delta)?;
                if let Some(h) = t.hyper_norm {
                    require("task.hyper_norm", h.is_finite() && h > 0.0, "must be positive and finite")?;
                }
            }
            TaskConfig::Simulate(t) => {
                require("task.n_steps", t.n_steps >= 1, "must be at least 1")?;
                require("task.n_trajectories", t.n_trajectories >= 1, "must be at least 1")?;
                if let Some(b) = t.burn_in {
                    require("task.burn_in", b <= chainbound::sampler::MAX_BURN_IN, "exceeds the burn-in cap")?;
                }
                for (i, e) in t.epsilons.iter().enumerate() {
                    require(&format!("task.epsilons[{i}]"), !e.is_nan(), "must be a number")?;
                }
            }
            TaskConfig::Spectral(t) => {
                let max = chainbound::operator::MAX_DIMENSION;
                require("task.k", t.k >= 1 && t.k <= max, "must lie in 1..=512")?;
                require("task.max_power", t.max_power >= 1, "must be at least 1")?;
                if let Some(c) = t.ulam_cells {
                    require("task.ulam_cells", (2..=max).contains(&c), "must lie in 2..=512")?;
                }
                require("task.ulam_samples_per_cell", t.ulam_samples_per_cell >= 1, "must be at least 1")?;
                require(
                    "task.ulam_half_width_sd",
                    t.ulam_half_width_sd.is_finite() && t.ulam_half_width_sd > 0.0,
                    "must be positive",
                )?;
                exponents("task.probe_q", &t.probe_q)?;
            }
            TaskConfig::Validate(t) => {
                for (i, o) in t.observables.iter().enumerate() {
                    Observable::builtin(*o).map_err(|e| field(&format!("task.observables[{i}].scale"), e))?;
                }
                for (i, b) in t.initials.iter().enumerate() {
                    check_initial(&format!("task.initials[{i}]"), b)?;
                }
                require("task.epsilons", !t.epsilons.is_empty(), "must not be empty")?;
                positive_all("task.epsilons", &t.epsilons)?;
                require(
                    "task.horizons",
                    !t.horizons.is_empty() && t.horizons[0] > 0 && t.horizons.windows(2).all(|w| w[0] < w[1]),
                    "must be positive and strictly increasing",
                )?;
                require("task.n_trajectories", t.n_trajectories >= 1, "must be at least 1")?;
                probability("task.delta", t.delta)?;
                for (i, n) in t.sample_complexity_levels.iter().enumerate() {
                    require(&format!("task.sample_complexity_levels[{i}]"), *n >= 1, "must be at least 1")?;
                }
            }
        }
        Ok(Resolved {
            spec,
            alpha,
            noise_std,
            mu,
            observable,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "chain": {"kind": "LinearGaussian1D", "alpha": 0.5},
        "observable": {"name": "identity"},
        "seed": 1,
        "task": {"kind": "simulate", "n_steps": 10, "n_trajectories": 2}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.initial, InitialDistribution::Stationary);
        assert_eq!(cfg.output_dir, "reports");
        assert_eq!(cfg.chain, ChainConfig::LinearGaussian1D { alpha: 0.5, noise_std: 1.0 });
        let r = cfg.resolve().unwrap();
        assert!((r.mu.variance - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_fields_are_rejected_with_their_path() {
        let text = BASE.replace("\"n_trajectories\": 2", "\"n_trajectories\": 2, \"bogus\": 1");
        match ExperimentConfig::parse(&text) {
            Err(CliError::Config { message, .. }) => assert!(message.contains("bogus"), "{message}"),
            other => panic!("{other:?}"),
        }
        let text = BASE.replace("\"seed\": 1", "\"seed\": 1, \"extra\": true");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn alpha_out_of_range_names_the_field() {
        let cfg = ExperimentConfig::parse(&BASE.replace("0.5", "1.5")).unwrap();
        match cfg.resolve() {
            Err(CliError::Config { field, message }) => {
                assert_eq!(field, "chain.alpha");
                assert!(message.contains("|alpha| < 1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn task_ranges_are_checked() {
        let text = r#"{
            "chain": {"kind": "LinearGaussian1D", "alpha": 0.5},
            "observable": {"name": "abs"},
            "seed": 1,
            "task": {"kind": "certify", "p_grid": [1.5], "epsilons": [0.1], "n_steps": [10], "delta": 0.5}
        }"#;
        match ExperimentConfig::parse(text).unwrap().resolve() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "task.p_grid[0]"),
            other => panic!("{other:?}"),
        }
    }
}
