//! Seeded trajectory simulation and Monte Carlo tail estimation.
//!
//! Every trajectory owns an independent ChaCha8 stream selected by
//! `(seed, trajectory_index)`: the seed fixes the key and the index selects
//! the stream, so trajectories can be generated in any order and on any
//! number of workers with bit-identical results. Reductions only ever
//! combine per-trajectory values in index order.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{stationary_measure, ChainSpec, InitialDistribution, Observable, StationaryMeasure};
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Sanity cap on burn-in length.
pub const MAX_BURN_IN: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl TrajectoryConfig {
    pub fn new(n_steps: usize, n_trajectories: usize, seed: u64, burn_in: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        if n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories", "must be at least 1"));
        }
        if burn_in > MAX_BURN_IN {
            return Err(Error::invalid(
                "burn_in",
                format!("{burn_in} exceeds the cap of {MAX_BURN_IN}"),
            ));
        }
        Ok(Self {
            n_steps,
            n_trajectories,
            seed,
            burn_in,
        })
    }

    /// Uses [`default_burn_in`] for the given chain and initial law.
    pub fn with_default_burn_in(
        spec: &ChainSpec,
        beta: &InitialDistribution,
        n_steps: usize,
        n_trajectories: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::new(n_steps, n_trajectories, seed, default_burn_in(spec, beta))
    }
}

/// Zero for a stationary start, otherwise ten relaxation times
/// `⌈1 / (1 - |alpha|)⌉`. Custom kernels get no burn-in.
pub fn default_burn_in(spec: &ChainSpec, beta: &InitialDistribution) -> usize {
    if matches!(beta, InitialDistribution::Stationary) {
        return 0;
    }
    match spec.alpha() {
        Some(alpha) => {
            let relax = (1.0 / (1.0 - alpha.abs())).ceil();
            ((10.0 * relax) as usize).min(MAX_BURN_IN)
        }
        None => 0,
    }
}

/// The RNG stream for one trajectory.
pub fn trajectory_rng(seed: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory_index);
    rng
}

fn stationary_if_needed(spec: &ChainSpec, beta: &InitialDistribution) -> Result<Option<StationaryMeasure>> {
    match beta {
        InitialDistribution::Stationary => stationary_measure(spec).map(Some),
        _ => Ok(None),
    }
}

/// Runs one trajectory, calling `visit(k, x_k)` for the `n_steps` recorded
/// states after burn-in.
fn run_chain(
    spec: &ChainSpec,
    beta: &InitialDistribution,
    stationary: Option<&StationaryMeasure>,
    cfg: &TrajectoryConfig,
    trajectory_index: usize,
    mut visit: impl FnMut(usize, f64),
) -> Result<()> {
    let mut rng = trajectory_rng(cfg.seed, trajectory_index as u64);
    let mut x = beta.sample(stationary, &mut rng)?;
    for _ in 0..cfg.burn_in {
        x = spec.step(x, &mut rng);
    }
    for k in 0..cfg.n_steps {
        if k > 0 {
            x = spec.step(x, &mut rng);
        }
        visit(k, x);
    }
    Ok(())
}

/// `x_0, …, x_{N-1}` of trajectory `trajectory_index`.
pub fn simulate_trajectory(
    spec: &ChainSpec,
    beta: &InitialDistribution,
    cfg: &TrajectoryConfig,
    trajectory_index: usize,
) -> Result<Vec<f64>> {
    if trajectory_index >= cfg.n_trajectories {
        return Err(Error::invalid(
            "trajectory_index",
            format!("{trajectory_index} >= n_trajectories {}", cfg.n_trajectories),
        ));
    }
    let stationary = stationary_if_needed(spec, beta)?;
    let mut out = Vec::with_capacity(cfg.n_steps);
    run_chain(spec, beta, stationary.as_ref(), cfg, trajectory_index, |_, x| out.push(x))?;
    Ok(out)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// `(1/N) Σ r(x_i)`.
pub fn empirical_average(trajectory: &[f64], r: &Observable) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut acc = CompensatedSum::default();
    for &x in trajectory {
        acc.add(r.eval(x));
    }
    Ok(acc.value() / trajectory.len() as f64)
}

/// 95% Wilson score interval for `successes` out of `n` trials.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    wilson_interval_z(successes, n, Z_95)
}

pub fn wilson_interval_z(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = (center - half).clamp(0.0, p);
    let high = (center + half).clamp(p, 1.0);
    (low, high)
}

/// Empirical tail of the deviation `(1/N) Σ r(x_i) - μ(r)`.
///
/// The one-sided event is `deviation ≥ ε`; the two-sided event
/// `|deviation| > ε` is reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub epsilon: f64,
    pub empirical_probability: f64,
    pub wilson_interval: (f64, f64),
    pub two_sided_probability: f64,
    pub two_sided_wilson_interval: (f64, f64),
    pub n_trajectories: usize,
}

impl TailEstimate {
    pub fn from_deviations(deviations: &[f64], epsilon: f64) -> Self {
        let n = deviations.len();
        let one = deviations.iter().filter(|&&d| d >= epsilon).count();
        let two = deviations.iter().filter(|&&d| d.abs() > epsilon).count();
        let nf = n.max(1) as f64;
        Self {
            epsilon,
            empirical_probability: one as f64 / nf,
            wilson_interval: wilson_interval(one, n),
            two_sided_probability: two as f64 / nf,
            two_sided_wilson_interval: wilson_interval(two, n),
            n_trajectories: n,
        }
    }
}

/// One row of the per-trajectory summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub trajectory_index: usize,
    pub empirical_average: f64,
    pub deviation: f64,
}

/// Per-trajectory averages and deviations from `μ(r)`, in index order.
pub fn summarize_trajectories(
    spec: &ChainSpec,
    beta: &InitialDistribution,
    r: &Observable,
    cfg: &TrajectoryConfig,
) -> Result<Vec<TrajectorySummary>> {
    let mu = stationary_measure(spec)?;
    let target = mu.expectation(r);
    let stationary = stationary_if_needed(spec, beta)?;
    (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut acc = CompensatedSum::default();
            run_chain(spec, beta, stationary.as_ref(), cfg, i, |_, x| acc.add(r.eval(x)))?;
            let avg = acc.value() / cfg.n_steps as f64;
            Ok(TrajectorySummary {
                trajectory_index: i,
                empirical_average: avg,
                deviation: avg - target,
            })
        })
        .collect()
}

/// Monte Carlo estimate of `P_β((1/N) Σ r(x_i) - μ(r) ≥ ε)`.
pub fn estimate_tail(
    spec: &ChainSpec,
    beta: &InitialDistribution,
    r: &Observable,
    cfg: &TrajectoryConfig,
    epsilon: f64,
) -> Result<TailEstimate> {
    let summaries = summarize_trajectories(spec, beta, r, cfg)?;
    let deviations: Vec<f64> = summaries.iter().map(|s| s.deviation).collect();
    Ok(TailEstimate::from_deviations(&deviations, epsilon))
}

/// Running averages of several observables recorded at increasing horizons.
#[derive(Debug, Clone)]
pub struct PrefixAverages {
    pub horizons: Vec<usize>,
    pub n_observables: usize,
    pub n_trajectories: usize,
    data: Vec<f64>,
}

impl PrefixAverages {
    /// Average of observable `obs` over the first `horizons[h]` states of
    /// trajectory `traj`.
    pub fn get(&self, traj: usize, h: usize, obs: usize) -> f64 {
        self.data[(traj * self.horizons.len() + h) * self.n_observables + obs]
    }

    pub fn column(&self, h: usize, obs: usize) -> Vec<f64> {
        (0..self.n_trajectories).map(|t| self.get(t, h, obs)).collect()
    }
}

/// Simulates `cfg.n_trajectories` paths once and records prefix averages of
/// every observable at each horizon. `horizons` must be increasing and end
/// at `cfg.n_steps`.
pub fn prefix_averages(
    spec: &ChainSpec,
    beta: &InitialDistribution,
    observables: &[Observable],
    cfg: &TrajectoryConfig,
    horizons: &[usize],
) -> Result<PrefixAverages> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::invalid("horizons", "must be positive and strictly increasing"));
    }
    if *horizons.last().unwrap() != cfg.n_steps {
        return Err(Error::invalid("horizons", "last horizon must equal n_steps"));
    }
    let stationary = stationary_if_needed(spec, beta)?;
    let n_obs = observables.len();
    let rows: Vec<Vec<f64>> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![CompensatedSum::default(); n_obs];
            let mut row = Vec::with_capacity(horizons.len() * n_obs);
            let mut next = 0;
            run_chain(spec, beta, stationary.as_ref(), cfg, i, |k, x| {
                for (s, r) in sums.iter_mut().zip(observables) {
                    s.add(r.eval(x));
                }
                if k + 1 == horizons[next] {
                    let n = horizons[next] as f64;
                    row.extend(sums.iter().map(|s| s.value() / n));
                    next += 1;
                }
            })?;
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(PrefixAverages {
        horizons: horizons.to_vec(),
        n_observables: n_obs,
        n_trajectories: cfg.n_trajectories,
        data: rows.concat(),
    })
}

/// Sample autocorrelations at lags `0..=max_lag` (biased estimator, common
/// denominator `n · var`).
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    (0..=max_lag.min(n - 1))
        .map(|m| {
            let cm: f64 = centered[..n - m]
                .iter()
                .zip(&centered[m..])
                .map(|(a, b)| a * b)
                .sum();
            cm / c0
        })
        .collect()
}

/// Writes `trajectory_index,empirical_average,deviation` rows.
pub fn write_summary_csv<W: Write>(mut out: W, rows: &[TrajectorySummary]) -> io::Result<()> {
    writeln!(out, "trajectory_index,empirical_average,deviation")?;
    for row in rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e}",
            row.trajectory_index, row.empirical_average, row.deviation
        )?;
    }
    Ok(())
}
