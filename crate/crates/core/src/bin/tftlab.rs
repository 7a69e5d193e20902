use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use tftlab::config::ExperimentConfig;
use tftlab::experiment::{exit_code_for_error, run_experiment, OutputFormat, EXIT_INVALID_CONFIG};
use tftlab::sampler::with_workers;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
            Format::Both => OutputFormat::Both,
        }
    }
}

/// Runs a fluctuation-theorem experiment described by a TOML config.
///
/// Exit status: 0 all checks passed, 1 a check failed, 2 inconclusive,
/// 3 invalid configuration.
#[derive(Debug, Parser)]
#[command(name = "tftlab", version)]
struct Cli {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; affects wall time only.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { code(EXIT_INVALID_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tftlab: {e}");
            return code(EXIT_INVALID_CONFIG);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let outcome = match with_workers(cli.workers, || run_experiment(&cfg)) {
        Ok(Ok(o)) => o,
        Ok(Err(e)) | Err(e) => {
            eprintln!("tftlab: {e}");
            return code(exit_code_for_error(&e));
        }
    };
    match outcome.write(&cli.out, cli.format.into()) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("tftlab: {e}");
            return code(exit_code_for_error(&e));
        }
    }
    eprintln!("status: {:?}", outcome.status);
    code(outcome.exit_code())
}
