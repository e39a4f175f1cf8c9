//! Command-line front end: configuration loading, experiment dispatch, and
//! deterministic report emission.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sklab::config::{ExperimentConfig, ExperimentKind};
use sklab::lab::run_experiment;
use sklab::report::{emit_report, Report, ReportFormat};

#[derive(Parser)]
#[command(
    name = "sklab",
    version,
    about = "Numerical laboratory for subordinate killed Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect Laplace exponents: scaling windows, scale profile, densities.
    Bf(RunArgs),
    /// Quadrature checks: comparison-lemma sweeps, assembled kernels,
    /// boundary profiles.
    Verify(RunArgs),
    /// Monte Carlo experiments: exit times, harmonic ratios, occupation,
    /// boundary construction.
    Mc(RunArgs),
    /// Re-render an existing report.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the report and CSV sidecars.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count (default also honors SKLAB_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Existing report (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "structured-text")]
    format: Format,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    StructuredText,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::StructuredText => ReportFormat::StructuredText,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

fn kind_allowed(cmd: &str, kind: &ExperimentKind) -> bool {
    match cmd {
        "bf" => matches!(kind, ExperimentKind::ExponentInspect {}),
        "verify" => matches!(
            kind,
            ExperimentKind::VerifyLemma { .. }
                | ExperimentKind::AssembledGreen { .. }
                | ExperimentKind::JumpPhase { .. }
                | ExperimentKind::ExitTimeQuad { .. }
                | ExperimentKind::KillingDensity { .. }
                | ExperimentKind::CounterexampleQuad { .. }
        ),
        "mc" => matches!(
            kind,
            ExperimentKind::McSurvival { .. }
                | ExperimentKind::McLifetime { .. }
                | ExperimentKind::McGreenOccupation { .. }
                | ExperimentKind::McRatio { .. }
                | ExperimentKind::McCounterexample { .. }
        ),
        _ => false,
    }
}

fn run(cmd_name: &str, args: &RunArgs) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    } else if config.workers == 0 {
        if let Ok(env_workers) = std::env::var("SKLAB_WORKERS") {
            config.workers = env_workers
                .parse()
                .context("SKLAB_WORKERS must be an integer")?;
        }
    }
    if !kind_allowed(cmd_name, &config.experiment) {
        bail!(
            "experiment kind is not served by `{cmd_name}`; \
             use `bf` for exponent inspection, `verify` for quadrature checks, `mc` for simulations"
        );
    }

    let report = run_experiment(config)?;
    emit_report(&report, ReportFormat::StructuredText, &args.out)?;
    emit_report(&report, ReportFormat::Csv, &args.out)?;

    for check in &report.checks {
        let status = if check.pass { "PASS" } else { "FAIL" };
        let mut vals: Vec<String> = check
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        vals.truncate(6);
        println!("{status} {} [{}]", check.name, vals.join(", "));
    }
    println!(
        "report written to {} ({} checks, {})",
        args.out.display(),
        report.checks.len(),
        if report.all_pass() { "all pass" } else { "FAILURES" }
    );
    Ok(report.all_pass())
}

fn rerender(args: &ReportArgs) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading report {}", args.input.display()))?;
    let report = Report::from_json(&text)?;
    let written = emit_report(&report, args.format.into(), &args.out)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Bf(args) => run("bf", args),
        Cmd::Verify(args) => run("verify", args),
        Cmd::Mc(args) => run("mc", args),
        Cmd::Report(args) => rerender(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
