//! Command-line front end: dataset analysis, synthetic data generation,
//! experiment runs and report tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use lgl_core::openworld::DetectorVariant;

use commands::report::ReportMode;
use commands::run::{DetectorOverrides, RunSource};
use commands::Context;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "lgl", version, about = "Lifelong learning on evolving graphs")]
struct Cli {
    /// Worker threads for independent seeds.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = "lgl-out")]
    output_dir: PathBuf,
    /// Suppress progress messages.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DetectorArg {
    None,
    Doc,
    Gdoc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportArg {
    AccuracyTable,
    Fwt,
    Open,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-difference histogram, history-size suggestions and drift.
    AnalyzeTdiff {
        /// Dataset directory.
        dataset: PathBuf,
        /// Maximum number of hops.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Comma-separated percentiles in (0, 100].
        #[arg(long, value_delimiter = ',', default_values_t = [25.0, 50.0, 75.0, 100.0])]
        percentiles: Vec<f64>,
    },
    /// Writes a synthetic dataset described by a key=value file.
    Generate {
        /// Synthetic graph parameters as key=value lines.
        config: PathBuf,
        /// Store features as little-endian f32 instead of CSV.
        #[arg(long)]
        binary_features: bool,
    },
    /// Runs an experiment from a config file or repeats one from its manifest.
    Run {
        /// Run configuration as key=value lines.
        #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
        config: Option<PathBuf>,
        /// Manifest file or run directory to repeat.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Unseen-class detector, overriding the config.
        #[arg(long, value_enum)]
        detector: Option<DetectorArg>,
        /// Threshold floor.
        #[arg(long)]
        tau_min: Option<f64>,
        /// Risk-reduction multiplier of the mirrored standard deviation.
        #[arg(long)]
        alpha: Option<f64>,
        /// Lower thresholds by alpha times the mirrored standard deviation.
        #[arg(long)]
        risk_reduction: bool,
    },
    /// Prints a CSV table comparing completed runs.
    Report {
        #[arg(long, value_enum)]
        mode: ReportArg,
        /// Run directories or manifest files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Context {
        output_dir: cli.output_dir,
        jobs: cli.jobs as usize,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::AnalyzeTdiff {
            dataset,
            k,
            percentiles,
        } => commands::analyze::cmd_analyze(&ctx, &dataset, k, &percentiles).map(drop),
        Command::Generate {
            config,
            binary_features,
        } => commands::generate::cmd_generate(&ctx, &config, binary_features),
        Command::Run {
            config,
            manifest,
            detector,
            tau_min,
            alpha,
            risk_reduction,
        } => {
            let overrides = DetectorOverrides {
                detector: detector.map(|d| match d {
                    DetectorArg::None => None,
                    DetectorArg::Doc => Some(DetectorVariant::Doc),
                    DetectorArg::Gdoc => Some(DetectorVariant::Gdoc),
                }),
                tau_min,
                alpha,
                risk_reduction,
            };
            let source = match (&config, &manifest) {
                (_, Some(m)) => RunSource::Manifest(m),
                (Some(c), None) => RunSource::Config(c),
                (None, None) => return Err(CliError::Usage("run needs a config file or --manifest".into())),
            };
            commands::run::cmd_run(&ctx, source, &overrides).map(drop)
        }
        Command::Report { mode, runs } => {
            let mode = match mode {
                ReportArg::AccuracyTable => ReportMode::AccuracyTable,
                ReportArg::Fwt => ReportMode::Fwt,
                ReportArg::Open => ReportMode::Open,
            };
            print!("{}", commands::report::cmd_report(&runs, mode)?);
            Ok(())
        }
    }
}

/// Parses `args` and executes the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
