//! Certified concentration bounds for Markov chains, with Monte Carlo and
//! transfer-operator cross-checks on the linear-Gaussian AR(1) chain
//! `x_{k+1} = α x_k + σ w_k`.
//!
//! - [`chain`]: chain models, stationary laws, observables, initial laws.
//! - [`sampler`]: seeded trajectories and empirical tail estimates.
//! - [`operator`]: Hermite–Galerkin and Ulam discretisations of `P`.
//! - [`transport`]: transport-entropy checks.
//! - [`bounds`]: the concentration certificates.
//! - [`validation`]: certificates against simulation on a parameter grid.

pub mod bounds;
pub mod chain;
pub mod error;
pub mod operator;
pub mod quadrature;
pub mod sampler;
pub mod serde_float;
pub mod transport;
pub mod validation;

pub use bounds::{
    chernoff_fk_bound, find_hypercontractive_p, gaussian_hyperbound, hypercontractive_tail_cor11, mult_op_norm_bound,
    sample_complexity_thm10, CertificateInputs, ConcentrationCertificate, Precondition, Theorem,
};
pub use chain::{
    density_ratio_l2, stationary_measure, BuiltinObservable, ChainSpec, InitialDistribution, Metric, Observable,
    StationaryMeasure, TransitionKernel,
};
pub use error::{Error, Result};
pub use operator::{hermite_galerkin, hyperbound_probe, spectral_report, ulam_discretize, GalerkinOperator, SpectralReport};
pub use sampler::{estimate_tail, simulate_trajectory, wilson_interval, TailEstimate, TrajectoryConfig};
pub use transport::{check_te_direct, check_te_dual, gaussian_relative_entropy, wasserstein1_1d, TECheckReport};
pub use validation::{run_validation, ValidationGrid, ValidationReport};
