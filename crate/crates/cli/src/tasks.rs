//! The four pipelines. Each returns a JSON results object, a CSV body and
//! a summary table; none of them touches the filesystem.

use std::fmt::Write as _;

use chainbound::bounds::{
    chernoff_fk_bound, find_hypercontractive_p, gaussian_hyperbound, gaussian_hyperbound_value,
    hypercontractive_tail_cor11, mult_op_norm_bound, sample_complexity_thm10, CertificateInputs,
    ConcentrationCertificate, Theorem,
};
use chainbound::chain::{density_ratio_l2, InitialDistribution};
use chainbound::operator::{
    hermite_galerkin, hyperbound_probe, spectral_report, ulam_discretize, uniform_breakpoints, write_matrix_csv,
};
use chainbound::sampler::{default_burn_in, summarize_trajectories, write_summary_csv, TailEstimate, TrajectoryConfig};
use chainbound::transport::{
    check_te_direct, check_te_dual, default_direct_family, default_dual_observables, TECheckReport, DEFAULT_LAMBDAS,
};
use chainbound::validation::{run_validation, ValidationGrid, HYPERCONTRACTIVE};
use serde_json::{json, Value};

use crate::config::{CertifyTask, ExperimentConfig, Resolved, SimulateTask, SpectralTask, TaskConfig, ValidateTask};
use crate::error::CliError;

pub struct TaskOutput {
    pub results: Value,
    pub csv: String,
    pub table: Vec<Vec<String>>,
    /// A certificate was violated beyond Monte Carlo error.
    pub violation: bool,
}

pub fn run_task(cfg: &ExperimentConfig, resolved: &Resolved) -> Result<TaskOutput, CliError> {
    match &cfg.task {
        TaskConfig::Certify(t) => certify(cfg, resolved, t),
        TaskConfig::Simulate(t) => simulate(cfg, resolved, t),
        TaskConfig::Spectral(t) => spectral(cfg, resolved, t),
        TaskConfig::Validate(t) => validate(cfg, resolved, t),
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        format!("{v}")
    }
}

/// Keeps the certificate on success, turns unmet preconditions into an
/// invalid certificate, and propagates numerical failures.
fn certificate(
    theorem: Theorem,
    inputs: CertificateInputs,
    result: chainbound::Result<ConcentrationCertificate>,
) -> Result<ConcentrationCertificate, CliError> {
    match result {
        Ok(c) => Ok(c),
        Err(e) if e.is_numerical_failure() => Err(e.into()),
        Err(e) => Ok(ConcentrationCertificate::failed(theorem, inputs, &e)),
    }
}

/// Samples per law or observable in the transport-entropy checks.
pub const TE_SAMPLES: usize = 100_000;

fn te_check(mu: &chainbound::chain::StationaryMeasure, c: f64, seed: u64) -> Result<TECheckReport, CliError> {
    let direct = check_te_direct(mu, c, &default_direct_family(mu), TE_SAMPLES, seed)?;
    let dual = check_te_dual(mu, c, &default_dual_observables(), &DEFAULT_LAMBDAS, TE_SAMPLES, seed)?;
    Ok(direct.merge(dual))
}

fn certify(cfg: &ExperimentConfig, res: &Resolved, t: &CertifyTask) -> Result<TaskOutput, CliError> {
    let mu = &res.mu;
    let r = &res.observable;
    let beta = &cfg.initial;
    let p_star = find_hypercontractive_p(res.alpha);
    let p_grid: Vec<f64> = if t.p_grid.is_empty() { p_star.into_iter().collect() } else { t.p_grid.clone() };
    let q_grid = if t.q_grid.is_empty() { p_grid.clone() } else { t.q_grid.clone() };
    let base = CertificateInputs {
        te_constant: mu.te_constant,
        lipschitz_seminorm: Some(r.lipschitz_seminorm()),
        density_ratio_l2: Some(density_ratio_l2(beta, mu)),
        alpha: Some(res.alpha),
        ..Default::default()
    };
    let norm_for = |p: f64| t.hyper_norm.map(Ok).unwrap_or_else(|| gaussian_hyperbound_value(res.alpha, p));

    let mut certs = Vec::new();
    for &p in &p_grid {
        let inputs = CertificateInputs { p: Some(p), ..base.clone() };
        certs.push(certificate(Theorem::MultOpNorm, inputs.clone(), mult_op_norm_bound(mu, r, p))?);
        certs.push(certificate(Theorem::GaussianHyperbound, inputs.clone(), gaussian_hyperbound(res.alpha, p))?);
        let norm = norm_for(p);
        for &n in &t.n_steps {
            for &eps in &t.epsilons {
                let tail_inputs = CertificateInputs {
                    n_steps: Some(n),
                    epsilon: Some(eps),
                    ..inputs.clone()
                };
                let chernoff = match norm.clone() {
                    Ok(h) => chernoff_fk_bound(mu, r, beta, p, h, n, eps),
                    Err(e) => Err(e),
                };
                certs.push(certificate(
                    Theorem::ChernoffFK,
                    CertificateInputs { hyper_norm: norm.clone().ok(), ..tail_inputs.clone() },
                    chernoff,
                )?);
                let cor = certificate(
                    Theorem::HypercontractiveTail,
                    CertificateInputs { delta: Some(t.delta), ..tail_inputs },
                    hypercontractive_tail_cor11(mu, r, beta, p, n, eps, Some(t.delta)),
                )?;
                let hyper = matches!(norm, Ok(h) if h <= 1.0);
                certs.push(if cor.valid { cor.with_precondition(HYPERCONTRACTIVE, hyper) } else { cor });
            }
        }
    }
    for &q in &q_grid {
        let norm = norm_for(q);
        for &n in &t.n_levels {
            let inputs = CertificateInputs {
                q: Some(q),
                n: Some(n),
                delta: Some(t.delta),
                hyper_norm: norm.clone().ok(),
                ..base.clone()
            };
            let result = match norm.clone() {
                Ok(h) => sample_complexity_thm10(mu, r, beta, q, h, n, t.delta),
                Err(e) => Err(e),
            };
            certs.push(certificate(Theorem::HyperboundedSampleComplexity, inputs, result)?);
        }
    }

    let mut csv = String::new();
    writeln!(csv, "{}", ConcentrationCertificate::CSV_HEADER).unwrap();
    let mut table = vec![vec![
        "theorem".to_string(),
        "p/q".into(),
        "N/n".into(),
        "epsilon".into(),
        "value".into(),
        "valid".into(),
        "flags".into(),
    ]];
    for c in &certs {
        writeln!(csv, "{}", c.csv_row()).unwrap();
        let i = &c.inputs;
        table.push(vec![
            c.theorem.name().into(),
            i.p.or(i.q).map(fmt).unwrap_or_default(),
            i.n_steps.or(i.n).map(|v| v.to_string()).unwrap_or_default(),
            i.epsilon.map(fmt).unwrap_or_default(),
            fmt(c.value),
            c.valid.to_string(),
            c.flags.join(";"),
        ]);
    }
    let te = match mu.te_constant {
        Some(c) => Some(te_check(mu, c, cfg.seed)?),
        None => None,
    };
    let unit = te_check(mu, 1.0, cfg.seed)?;
    if !unit.passed() {
        println!("unit transport-entropy constant refuted: {} witnesses", unit.witnesses.len());
    }
    Ok(TaskOutput {
        results: json!({
            "hypercontractive_p": p_star,
            "certificates": certs,
            "te_check": te,
            "unit_te_constant": {
                "refuted": !unit.passed(),
                "report": unit,
            },
        }),
        csv,
        table,
        violation: false,
    })
}

fn simulate(cfg: &ExperimentConfig, res: &Resolved, t: &SimulateTask) -> Result<TaskOutput, CliError> {
    let burn_in = t.burn_in.unwrap_or_else(|| default_burn_in(&res.spec, &cfg.initial));
    let tcfg = TrajectoryConfig::new(t.n_steps, t.n_trajectories, cfg.seed, burn_in)?;
    let rows = summarize_trajectories(&res.spec, &cfg.initial, &res.observable, &tcfg)?;
    let deviations: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    let n = deviations.len() as f64;
    let mean_dev = deviations.iter().sum::<f64>() / n;
    let sd = if deviations.len() > 1 {
        (deviations.iter().map(|d| (d - mean_dev).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let tails: Vec<TailEstimate> = t.epsilons.iter().map(|&e| TailEstimate::from_deviations(&deviations, e)).collect();

    let mut csv = Vec::new();
    write_summary_csv(&mut csv, &rows)?;
    let mut table = vec![vec!["epsilon".to_string(), "P(dev>=eps)".into(), "wilson_lo".into(), "wilson_hi".into(), "P(|dev|>eps)".into()]];
    for tail in &tails {
        table.push(vec![
            fmt(tail.epsilon),
            fmt(tail.empirical_probability),
            fmt(tail.wilson_interval.0),
            fmt(tail.wilson_interval.1),
            fmt(tail.two_sided_probability),
        ]);
    }
    Ok(TaskOutput {
        results: json!({
            "burn_in": burn_in,
            "stationary_mean_of_observable": res.mu.expectation(&res.observable),
            "mean_deviation": mean_dev,
            "deviation_std": sd,
            "tails": tails,
        }),
        csv: String::from_utf8(csv).expect("ascii csv"),
        table,
        violation: false,
    })
}

fn spectral(cfg: &ExperimentConfig, res: &Resolved, t: &SpectralTask) -> Result<TaskOutput, CliError> {
    let op = hermite_galerkin(&res.spec, t.k)?;
    let hermite = spectral_report(&op, t.max_power)?;
    let mut table = vec![vec!["operator".to_string(), "dim".into(), "spectral_gap".into(), "second_modulus".into(), "aperiodic".into()]];
    let second = |m: &[f64]| m.get(1).copied().unwrap_or(0.0);
    table.push(vec![
        "hermite".into(),
        t.k.to_string(),
        fmt(hermite.spectral_gap),
        fmt(second(&hermite.eigenvalue_moduli)),
        hermite.aperiodic.to_string(),
    ]);

    let ulam = match t.ulam_cells {
        Some(cells) => {
            let b = uniform_breakpoints(res.mu.mean, res.mu.std(), t.ulam_half_width_sd, cells, false);
            let u = ulam_discretize(&res.spec, &b, t.ulam_samples_per_cell, cfg.seed)?;
            let rep = spectral_report(&u, t.max_power)?;
            table.push(vec![
                "ulam".into(),
                cells.to_string(),
                fmt(rep.spectral_gap),
                fmt(second(&rep.eigenvalue_moduli)),
                rep.aperiodic.to_string(),
            ]);
            Some(rep)
        }
        None => None,
    };

    let mut probes = Vec::new();
    for &q in &t.probe_q {
        let probe = hyperbound_probe(&res.spec, q, t.probe_functions, cfg.seed)?;
        let closed = gaussian_hyperbound_value(res.alpha, q).ok();
        probes.push(json!({
            "q": q,
            "probe_lower_bound": probe,
            "closed_form_upper_bound": closed,
            "ordered": closed.map(|c| probe <= c + 1e-9),
        }));
    }

    let mut csv = Vec::new();
    write_matrix_csv(&mut csv, op.matrix())?;
    Ok(TaskOutput {
        results: json!({
            "hermite": { "k": t.k, "report": hermite },
            "ulam": ulam,
            "probes": probes,
        }),
        csv: String::from_utf8(csv).expect("ascii csv"),
        table,
        violation: false,
    })
}

fn validate(cfg: &ExperimentConfig, res: &Resolved, t: &ValidateTask) -> Result<TaskOutput, CliError> {
    let grid = ValidationGrid {
        alpha: res.alpha,
        noise_std: res.noise_std,
        observables: if t.observables.is_empty() { vec![cfg.observable] } else { t.observables.clone() },
        initials: if t.initials.is_empty() { vec![cfg.initial] } else { t.initials.clone() },
        epsilons: t.epsilons.clone(),
        horizons: t.horizons.clone(),
        n_trajectories: t.n_trajectories,
        seed: cfg.seed,
        te_constant: res.mu.te_constant,
        delta: t.delta,
        sample_complexity_levels: t.sample_complexity_levels.clone(),
    };
    let report = run_validation(&grid)?;

    let mut csv = String::from(
        "observable,initial,epsilon,n_steps,empirical_probability,wilson_lo,wilson_hi,two_sided_probability,\
theorem,valid,value,applicable,exceeds_wilson_upper,violated\n",
    );
    let mut table = vec![vec![
        "observable".to_string(),
        "initial".into(),
        "eps".into(),
        "N".into(),
        "P_hat".into(),
        "wilson_hi".into(),
        "theorem".into(),
        "bound".into(),
        "status".into(),
    ]];
    for cell in &report.cells {
        for check in &cell.checks {
            let c = &check.certificate;
            writeln!(
                csv,
                "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{},{},{}",
                cell.observable,
                label(&cell.initial),
                cell.epsilon,
                cell.n_steps,
                cell.tail.empirical_probability,
                cell.tail.wilson_interval.0,
                cell.tail.wilson_interval.1,
                cell.tail.two_sided_probability,
                c.theorem.name(),
                c.valid,
                c.value,
                check.applicable,
                check.exceeds_wilson_upper,
                check.violated
            )
            .unwrap();
            let status = if check.violated {
                "VIOLATED"
            } else if !check.applicable {
                "vacuous"
            } else if check.exceeds_wilson_upper {
                "ok"
            } else {
                "within-MC-error"
            };
            table.push(vec![
                cell.observable.clone(),
                label(&cell.initial),
                fmt(cell.epsilon),
                cell.n_steps.to_string(),
                fmt(cell.tail.empirical_probability),
                fmt(cell.tail.wilson_interval.1),
                c.theorem.name().into(),
                fmt(c.value),
                status.into(),
            ]);
        }
    }
    Ok(TaskOutput {
        violation: report.has_violation(),
        results: serde_json::to_value(&report)?,
        csv,
        table,
    })
}

fn label(beta: &InitialDistribution) -> String {
    beta.label().replace(',', ";")
}
