use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use alrisk::harness::config::{ExperimentConfig, ExperimentKind, OutputFormat};
use alrisk::harness::experiments::run_experiment;
use alrisk::harness::oracle_check::{run_oracle_check, OracleReport};
use alrisk::harness::results::{import_results, to_csv, to_json, ResultSet};
use alrisk::Error;

/// Unbiased risk estimation for pool-based active learning.
#[derive(Parser)]
#[command(name = "alrisk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bias of the naive, PURE and LURE estimators for a fixed model.
    Bias(RunArgs),
    /// Held-out risk of models trained on each estimator's objective.
    Train(RunArgs),
    /// Overfitting bias of trained models next to the estimators' active learning bias.
    Ofb(RunArgs),
    /// Exhaustive enumeration checks on randomized tiny pools.
    Oracle(RunArgs),
    /// Estimator error as the pool grows with M.
    Sweep(RunArgs),
    /// Convert a saved result file between CSV and JSON.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; taken from the config or the file extension when absent.
    #[arg(long)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct ExportArgs {
    /// Result file written by a previous run.
    input: PathBuf,
    /// Destination file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Destination format; taken from the file extension when absent.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Format of the input; taken from its extension when absent.
    #[arg(long)]
    input_format: Option<OutputFormat>,
}

fn load_config(kind: ExperimentKind, args: &RunArgs) -> alrisk::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for '{}', not '{}'",
            cfg.experiment.as_str(),
            kind.as_str()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.root_seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = Some(workers);
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    if let Some(format) = args.format {
        cfg.format = Some(format);
    }
    cfg.resolved()
}

fn output_format(explicit: Option<OutputFormat>, out: Option<&Path>) -> OutputFormat {
    explicit
        .or_else(|| out.and_then(OutputFormat::from_path))
        .unwrap_or(OutputFormat::Csv)
}

fn emit(text: &str, out: Option<&Path>) -> alrisk::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn render(set: &ResultSet, format: OutputFormat) -> alrisk::Result<String> {
    match format {
        OutputFormat::Csv => Ok(to_csv(set)),
        OutputFormat::Json => to_json(set),
    }
}

fn summarize(set: &ResultSet) {
    for a in &set.aggregates {
        eprintln!(
            "{:<20} {:<6} M={:<4} mean={:.6} bias={:+.6} se={:.6} n={}",
            a.experiment, a.estimator, a.m, a.mean, a.mean_bias, a.se_bias, a.n
        );
    }
    if set.excluded > 0 {
        eprintln!("{} rows excluded (singular fits)", set.excluded);
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> alrisk::Result<ExitCode> {
    let cfg = load_config(kind, args)?;
    let out = cfg.output.clone();
    let format = output_format(cfg.format, out.as_deref());
    if kind == ExperimentKind::OracleCheck {
        let report = run_oracle_check(&cfg)?;
        let text = match format {
            OutputFormat::Csv => report.to_csv(),
            OutputFormat::Json => report.to_json()?,
        };
        emit(&text, out.as_deref())?;
        return Ok(report_status(&report));
    }
    let set = run_experiment(&cfg)?;
    emit(&render(&set, format)?, out.as_deref())?;
    summarize(&set);
    Ok(ExitCode::SUCCESS)
}

fn report_status(report: &OracleReport) -> ExitCode {
    let failures: Vec<_> = report.failures().collect();
    eprintln!(
        "{} cases, {} checks, {} failed (root seed {})",
        report.cases,
        report.checks.len(),
        failures.len(),
        report.root_seed
    );
    for f in failures.iter().take(20) {
        eprintln!("FAIL {f}");
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn export(args: &ExportArgs) -> alrisk::Result<ExitCode> {
    let set = import_results(&args.input, args.input_format)?;
    let format = output_format(args.format, args.out.as_deref());
    emit(&render(&set, format)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Bias(a) => run(ExperimentKind::BiasFixedFunction, a),
        Command::Train(a) => run(ExperimentKind::DownstreamTraining, a),
        Command::Ofb(a) => run(ExperimentKind::Ofb, a),
        Command::Oracle(a) => run(ExperimentKind::OracleCheck, a),
        Command::Sweep(a) => run(ExperimentKind::Sweep, a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Consistency(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
