//! Batch front end: load a JSON experiment config, run one task, write
//! JSON and CSV reports.
//!
//! Exit codes: 0 success, 1 invalid config or arguments, 2 runtime
//! numerical failure, 3 a certificate violated beyond Monte Carlo error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::Parser;
use serde_json::json;

pub mod config;
pub mod error;
pub mod tasks;

pub use config::ExperimentConfig;
pub use error::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "chainbound", version, about = "Certified concentration bounds for Markov chains")]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,

    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,

    /// Forces the transport-entropy constant (e.g. 1).
    #[arg(long)]
    pub force_te_constant: Option<f64>,
}

/// Paths of the files written by a run.
#[derive(Debug, Clone)]
pub struct Written {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub violation: bool,
}

/// Runs a parsed invocation. The report embeds the resolved config; the
/// output location and thread count are left out because they do not
/// affect results.
pub fn execute(args: &Args) -> Result<Written, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(c) = args.force_te_constant {
        cfg.te_constant = Some(c);
    }
    let resolved = cfg.resolve()?;
    cfg.te_constant = resolved.mu.te_constant;

    if args.threads == Some(0) {
        return Err(CliError::Config {
            field: "--threads".into(),
            message: "must be at least 1".into(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()?;
    let output = pool.install(|| tasks::run_task(&cfg, &resolved))?;

    let dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let mut embedded = serde_json::to_value(&cfg)?;
    if let Some(obj) = embedded.as_object_mut() {
        obj.remove("output_dir");
    }
    let report = json!({
        "task": cfg.task.name(),
        "config": embedded,
        "results": output.results,
    });
    let stem = format!(
        "{}_{}_{}",
        cfg.task.name(),
        cfg.seed,
        chrono::Local::now().format("%Y-%m-%d")
    );
    fs::create_dir_all(&dir)?;
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&json_path, text)?;
    fs::write(&csv_path, &output.csv)?;

    print_table(&output.table);
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    if output.violation {
        println!("certificate violated beyond Monte Carlo error");
    }
    Ok(Written {
        json: json_path,
        csv: csv_path,
        violation: output.violation,
    })
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&args) {
        Ok(w) if w.violation => EXIT_VIOLATION,
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_table(rows: &[Vec<String>]) {
    let Some(first) = rows.first() else { return };
    let widths: Vec<usize> = (0..first.len())
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, String::len)).max().unwrap_or(0))
        .collect();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        println!("{}", line.join("  ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            println!("{}", rule.join("  "));
        }
    }
}
