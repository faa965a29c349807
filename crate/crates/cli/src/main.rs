//! Experiment runner and certificate emitter.
//!
//! One experiment per invocation, configured by a TOML document; `verify-all`
//! composes the full battery. The process exit status reflects the pass/fail
//! of all certificates.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigFile, ExperimentKind, VerifyAllParams};

#[derive(Parser)]
#[command(
    name = "conspert",
    version,
    about = "Locally supported conservative perturbations with machine-checkable certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for reports and data streams.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Override the seed of every randomized probe sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        /// Path to the TOML configuration.
        config: PathBuf,
    },
    /// Run the full experiment battery with default configurations.
    VerifyAll {
        /// Reduced probe counts for quick runs.
        #[arg(long)]
        fast: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => {
            let loaded = match ConfigFile::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            let out_dir = cli
                .output
                .or(loaded.output.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(loaded.experiment.name()));
            experiments::run_config(&loaded, &out_dir, cli.seed)
        }
        Command::VerifyAll { fast } => {
            let params = VerifyAllParams {
                seed: cli.seed.unwrap_or(7),
                fast,
            };
            let out_dir = cli.output.unwrap_or_else(|| PathBuf::from("out").join("verify-all"));
            let config = ConfigFile {
                experiment: ExperimentKind::VerifyAll,
                output: Some(out_dir.clone()),
                parameters: toml::Value::try_from(&params).expect("params serialize"),
            };
            experiments::run_config(&config, &out_dir, None)
        }
    };
    match outcome {
        Ok(report) if report.pass => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
