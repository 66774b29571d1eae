use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trace_forms_cli::{emit_reports, run_experiment, CliError, ExperimentConfig, Kind};

/// Runs one experiment and writes report.json, summary.txt and CSVs.
///
/// Exit status: 0 pass, 1 fail, 2 inconclusive, 3 config or I/O error.
#[derive(Debug, Parser)]
#[command(name = "trace-forms", version)]
struct Args {
    kind: Kind,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, then `out/<kind>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<i32, CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    match config.kind {
        Some(k) if k != args.kind => {
            return Err(CliError::Config(format!(
                "{}: config is for `{k}`, command line asks for `{}`",
                args.config.display(),
                args.kind
            )))
        }
        _ => config.kind = Some(args.kind),
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dir = args
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(args.kind.to_string()));
    let bundle = run_experiment(&config)?;
    emit_reports(&bundle, &dir)?;
    // A closed stdout (e.g. piped into `head`) is not an error here.
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{}", bundle.summary());
    let _ = writeln!(out, "reports written to {}", dir.display());
    Ok(bundle.status.exit_code())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
