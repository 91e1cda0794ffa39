//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit
//! if any criterion failed. Tolerances are fixed here and never loosened.

mod common;

use std::ffi::OsStr;
use std::f64::consts::PI;

use chainbound::bounds::{find_hypercontractive_p, gaussian_hyperbound_value, mult_op_norm_bound, sample_complexity_thm10};
use chainbound::chain::{stationary_measure, ChainSpec, InitialDistribution, Observable, StationaryMeasure};
use chainbound::operator::{hermite_galerkin, hyperbound_probe, spectral_report};
use chainbound::sampler::{autocorrelation, simulate_trajectory, summarize_trajectories, TrajectoryConfig};
use chainbound::transport::{
    check_te_direct, check_te_dual, default_direct_family, gaussian_relative_entropy, wasserstein1_1d, GaussianLaw,
};
use chainbound::validation::{run_validation, ValidationGrid};
use chainbound::Error;
use common::{config_path, dir_contents, hermite, normal_pdf, run_cli, simpson};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn spec(alpha: f64) -> ChainSpec {
    ChainSpec::linear_gaussian(alpha, 1.0).unwrap()
}

/// Stationary law: sampler marginals and the Hermite fixed point.
fn stationary_law() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut fixed_point_err: f64 = 0.0;
    for (i, alpha) in [0.3, 0.5, 0.9].into_iter().enumerate() {
        // Each draw is the state after 50 steps from a stationary start,
        // so it exercises the transition and not only the initial sampler.
        let cfg = TrajectoryConfig::new(1, 1_000_000, 100 + i as u64, 50).unwrap();
        let rows = summarize_trajectories(&spec(alpha), &InitialDistribution::Stationary, &Observable::identity(), &cfg).unwrap();
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.empirical_average).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.empirical_average - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 1.0 / (1.0 - alpha * alpha);
        worst = worst.max((var / target - 1.0).abs());

        let m = hermite_galerkin(&spec(alpha), 16).unwrap().matrix().clone();
        for k in 0..16 {
            let e = if k == 0 { 1.0 } else { 0.0 };
            fixed_point_err = fixed_point_err.max((m[(0, k)] - e).abs()).max((m[(k, 0)] - e).abs());
        }
    }
    outcome(
        worst <= 0.01 && fixed_point_err < 1e-10,
        format!("max relative variance error {worst:.2e} (tol 1e-2); Hermite fixed-point error {fixed_point_err:.1e}"),
    )
}

/// Spectral gap and correlation decay at alpha = 0.5.
fn spectral_gap() -> Outcome {
    let alpha: f64 = 0.5;
    let op = hermite_galerkin(&spec(alpha), 16).unwrap();
    let m = op.matrix();
    let mut diag_err: f64 = 0.0;
    let mut off: f64 = 0.0;
    for j in 0..16 {
        for k in 0..16 {
            if j == k {
                diag_err = diag_err.max((m[(j, k)] - alpha.powi(k as i32)).abs());
            } else {
                off = off.max(m[(j, k)].abs());
            }
        }
    }
    let rep = spectral_report(&op, 20).unwrap();
    let power_err = rep
        .power_convergence
        .iter()
        .map(|&(n, v)| (v - alpha.powi(n as i32)).abs())
        .fold(0.0, f64::max);

    let n = 200_000;
    let cfg = TrajectoryConfig::new(n, 1, 17, 0).unwrap();
    let traj = simulate_trajectory(&spec(alpha), &InitialDistribution::Stationary, &cfg, 0).unwrap();
    let rho = autocorrelation(&traj, 10);
    let mut worst_z: f64 = 0.0;
    for (lag, &r) in rho.iter().enumerate().skip(1) {
        // Bartlett variance of the lag-m sample autocorrelation of an AR(1).
        let a2m = alpha.powi(2 * lag as i32);
        let var = ((1.0 + alpha * alpha) * (1.0 - a2m) / (1.0 - alpha * alpha) - 2.0 * lag as f64 * a2m) / n as f64;
        worst_z = worst_z.max((r - alpha.powi(lag as i32)).abs() / var.sqrt());
    }
    outcome(
        diag_err <= 1e-6 && off < 1e-8 && power_err <= 1e-6 && worst_z <= 5.0 && rep.power_convergence.len() == 20,
        format!(
            "diag err {diag_err:.1e}, max off-diag {off:.1e}, ||P^n-U|| err {power_err:.1e}, worst autocorrelation {worst_z:.2} SE"
        ),
    )
}

/// Dual transport-entropy form saturates at c = v.
fn te_dual_saturation() -> Outcome {
    let v = 4.0 / 3.0;
    let mu = StationaryMeasure::gaussian(0.0, v).unwrap();
    let id = [Observable::identity()];
    let tight = check_te_dual(&mu, v, &id, &[0.5, 1.0], 1_000_000, 31).unwrap();
    let ratios: Vec<f64> = tight.dual_entries.iter().map(|e| e.exponential_moment / e.bound).collect();
    let in_band = ratios.iter().all(|r| (0.99..=1.01).contains(r));

    let family = default_direct_family(&mu);
    let lambdas = [0.5, 1.0];
    let half = check_te_dual(&mu, v / 2.0, &id, &lambdas, 1_000_000, 32)
        .unwrap()
        .merge(check_te_direct(&mu, v / 2.0, &family, 200_000, 33).unwrap());
    let double = check_te_dual(&mu, 2.0 * v, &id, &lambdas, 1_000_000, 34)
        .unwrap()
        .merge(check_te_direct(&mu, 2.0 * v, &family, 200_000, 35).unwrap());
    outcome(
        in_band && !half.witnesses.is_empty() && double.witnesses.is_empty(),
        format!(
            "ratios {:?}; witnesses at v/2: {}; at 2v: {}",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
            half.witnesses.len(),
            double.witnesses.len()
        ),
    )
}

/// Multiplication-operator certificate dominates quadrature ratios.
fn mult_op_norm() -> Outcome {
    let mu = stationary_measure(&spec(0.5)).unwrap();
    let v = mu.variance;
    let sd = v.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pass = true;
    let mut details = Vec::new();
    for p in [3.0, 4.0] {
        let cert = mult_op_norm_bound(&mu, &Observable::identity(), p).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let degree = rng.gen_range(0..=6);
            let coeffs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = |x: f64| -> f64 { coeffs.iter().enumerate().map(|(k, c)| c * hermite(k, x / sd)).sum() };
            let (lo, hi) = (-14.0 * sd, 14.0 * sd);
            let num = simpson(|x| normal_pdf(x, 0.0, v) * (2.0 * x).exp() * g(x).powi(2), lo, hi, 20_000);
            let den = simpson(|x| normal_pdf(x, 0.0, v) * g(x).abs().powf(p), lo, hi, 20_000);
            worst = worst.max(num.sqrt() / den.powf(1.0 / p));
        }
        pass &= worst < cert.value;
        details.push(format!("p={p}: max ratio {worst:.4} vs certificate {:.4}", cert.value));
    }
    outcome(pass, details.join("; "))
}

/// Probe lower bound against the closed-form hyperbound inside (2, 1 + 1/alpha^2).
fn gaussian_hyperbound() -> Outcome {
    let mut failures = Vec::new();
    let mut points = 0;
    let mut boundary_err: f64 = 0.0;
    let mut boundary_found = true;
    for alpha in [0.3, 0.5] {
        let limit = 1.0 + 1.0 / (alpha * alpha);
        for i in 1..=7 {
            let p = 2.0 + (limit - 2.0) * i as f64 / 8.0;
            let probe = hyperbound_probe(&spec(alpha), p, 100, 9).unwrap();
            let closed = gaussian_hyperbound_value(alpha, p).unwrap();
            points += 1;
            if probe > closed + 1e-9 {
                failures.push(format!("a={alpha} p={p:.3}: probe {probe:.4} > {closed:.4}"));
            }
        }
        match find_hypercontractive_p(alpha) {
            Some(p) => boundary_err = boundary_err.max((gaussian_hyperbound_value(alpha, p).unwrap() - 1.0).abs()),
            None => boundary_found = false,
        }
    }
    let pass = failures.is_empty() && boundary_found && boundary_err <= 1e-6;
    let mut detail = format!(
        "{}/{points} grid points ordered; boundary |bound-1| {boundary_err:.1e}",
        points - failures.len()
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; violations: {}", failures.join(", ")));
    }
    outcome(pass, detail)
}

/// Tail certificates against simulated tails on the reference grid.
fn tail_soundness() -> Outcome {
    let report = run_validation(&ValidationGrid::reference(2024)).unwrap();
    let below: Vec<String> = report
        .below_wilson_upper()
        .map(|(cell, check)| {
            format!(
                "{}/{}/eps={}/N={}/{}: {:.2e} <= {:.2e}",
                cell.observable,
                cell.initial.label(),
                cell.epsilon,
                cell.n_steps,
                check.certificate.theorem.name(),
                check.certificate.value,
                cell.tail.wilson_interval.1
            )
        })
        .collect();
    let mut detail = format!(
        "{} applicable, {} clear the Wilson upper limit, {} below it, {} violated beyond MC error",
        report.n_applicable,
        report.n_exceeding_wilson_upper,
        below.len(),
        report.n_violated
    );
    if !below.is_empty() {
        detail.push_str(&format!("; below: {}", below.join(", ")));
    }
    outcome(below.is_empty(), detail)
}

/// Sample-complexity arithmetic on the hand-derived instance.
fn sample_complexity_arithmetic() -> Outcome {
    let mu = stationary_measure(&spec(0.5)).unwrap();
    let h = (1.0f64 / 16.0).exp();
    let st = InitialDistribution::Stationary;
    let cert = sample_complexity_thm10(&mu, &Observable::identity(), &st, 4.0, h, 1, 0.5).unwrap();
    let expected = 16.0 * 2f64.ln();
    let err = (cert.value - expected).abs();
    let negative = matches!(
        sample_complexity_thm10(&mu, &Observable::identity(), &st, 4.0, h, 2, 0.5),
        Err(Error::NegativeDenominator { n: 2, .. })
    );
    outcome(
        err <= 1e-9 && negative,
        format!("N = {:.12} (error {err:.1e}); NegativeDenominator at n=2: {negative}", cert.value),
    )
}

/// W1 and Gaussian relative entropy against oracles.
fn transport_oracles() -> Outcome {
    let m = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        })
        .collect();
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let batches = 20;
    let size = m / batches;
    let vals: Vec<f64> = (0..batches)
        .map(|k| wasserstein1_1d(&sorted(&a[k * size..(k + 1) * size]), &sorted(&b[k * size..(k + 1) * size])).unwrap())
        .collect();
    let bm = vals.iter().sum::<f64>() / batches as f64;
    let se = (vals.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
    let w1 = wasserstein1_1d(&sorted(&a), &sorted(&b)).unwrap();
    let exact = (2.0 / PI).sqrt();
    let z = (w1 - exact).abs() / se;

    let cases = [(0.0, 2.0, 0.0, 1.0), (1.0, 1.0, 0.0, 1.0), (0.5, 0.25, -1.0, 3.0), (-2.0, 4.0, 1.0, 0.5), (3.0, 1.5, 3.0, 1.5)];
    let mut kl_err: f64 = 0.0;
    for (m1, v1, m2, v2) in cases {
        let nu = GaussianLaw::new(m1, v1).unwrap();
        let mu = GaussianLaw::new(m2, v2).unwrap();
        let sd = v1.sqrt();
        let oracle = simpson(
            |x| normal_pdf(x, m1, v1) * (log_pdf(x, m1, v1) - log_pdf(x, m2, v2)),
            m1 - 16.0 * sd,
            m1 + 16.0 * sd,
            20_000,
        );
        kl_err = kl_err.max((gaussian_relative_entropy(nu, mu) - oracle).abs());
    }
    outcome(
        z <= 3.0 && kl_err <= 1e-6,
        format!("W1 {w1:.5} vs {exact:.5} ({z:.2} SE, SE {se:.1e}); max KL error {kl_err:.1e}"),
    )
}

fn log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / variance - 0.5 * (2.0 * PI * variance).ln()
}

/// Reports are byte-identical across thread counts.
fn determinism() -> Outcome {
    let mut mismatches = Vec::new();
    for name in ["certify.json", "simulate.json", "spectral.json", "validate.json"] {
        let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
        for (dir, threads) in dirs.iter().zip(["1", "4"]) {
            let cfg = config_path(name);
            let (code, _) = run_cli(&[
                OsStr::new("--config"),
                cfg.as_os_str(),
                OsStr::new("--output-dir"),
                dir.path().as_os_str(),
                OsStr::new("--threads"),
                OsStr::new(threads),
            ]);
            if code != 0 {
                mismatches.push(format!("{name} exited {code} with {threads} threads"));
            }
        }
        let one = dir_contents(dirs[0].path());
        if one.len() != 2 || one != dir_contents(dirs[1].path()) {
            mismatches.push(format!("{name} differs"));
        }
    }
    let detail = if mismatches.is_empty() {
        "4 configs, --threads 1 vs 4: JSON and CSV byte-identical".to_string()
    } else {
        mismatches.join(", ")
    };
    outcome(mismatches.is_empty(), detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("stationary law", stationary_law),
        ("spectral gap and correlation decay", spectral_gap),
        ("transport-entropy dual saturation", te_dual_saturation),
        ("multiplication-operator norm", mult_op_norm),
        ("Gaussian hyperbound consistency", gaussian_hyperbound),
        ("Chernoff / corollary soundness", tail_soundness),
        ("sample-complexity arithmetic", sample_complexity_arithmetic),
        ("Wasserstein / entropy oracles", transport_oracles),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
