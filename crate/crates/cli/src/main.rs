//! `tracklr` — evaluate the evidence that two phones were carried by the
//! same person.
//!
//! Machine-readable JSON goes to stdout, diagnostics to stderr; the exit
//! code is 0 exactly when the command succeeded. All commands are
//! deterministic for a fixed `--seed`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use tracklr_cli::{cmd_compare, cmd_evaluate, cmd_simulate, cmd_synthesize, cmd_train};
use tracklr_core::config::{load_config, FileConfig};

#[derive(Parser)]
#[command(
    name = "tracklr",
    about = "Likelihood-ratio evaluation of paired phone tracks",
    version
)]
struct Cli {
    /// Master seed; overrides any seed set in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phone population and write continuous per-phone logs.
    Simulate {
        /// Output directory for log CSVs, users.csv and towers.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Thin continuous logs into sparse registration records.
    Synthesize {
        /// Directory of measurement CSVs plus users.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Output directory for the sparse per-phone records.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Fit a scorer, calibrator and LR bounds; save the pipeline JSON.
    Train {
        /// Directory of measurement CSVs plus users.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Path of the pipeline JSON to write.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run the repeated-split evaluation harness.
    Evaluate {
        /// Directory of measurement CSVs plus users.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Output directory for metrics, histogram and summary files.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Sweep one dimension instead of a single run: scorer, calibrator,
        /// calibration_fraction, features, days, or rate.
        #[arg(long, value_name = "DIMENSION")]
        sweep: Option<String>,
    },
    /// Score one disputed pair of record files with a fitted pipeline.
    Compare {
        /// Fitted pipeline JSON produced by `train`.
        #[arg(long, value_name = "FILE")]
        pipeline: PathBuf,
        /// Records of the first phone.
        #[arg(long, value_name = "FILE")]
        a: PathBuf,
        /// Records of the second phone.
        #[arg(long, value_name = "FILE")]
        b: PathBuf,
        /// Tower database resolving cell ids without inline coordinates.
        #[arg(long, value_name = "FILE")]
        towers: Option<PathBuf>,
        /// Ignore measurements before this time (epoch seconds or ISO-8601).
        #[arg(long, value_name = "TIME")]
        from: Option<String>,
        /// Ignore measurements after this time (epoch seconds or ISO-8601).
        #[arg(long, value_name = "TIME")]
        to: Option<String>,
    },
}

fn effective_config(cli: &Cli) -> Result<FileConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => FileConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Simulate { out } => {
            let cfg = effective_config(cli)?;
            cmd_simulate(&cfg.sim, out, cli.force)
        }
        Command::Synthesize { data, out } => {
            let cfg = effective_config(cli)?;
            cmd_synthesize(data, out, &cfg.synthesis, cli.force)
        }
        Command::Train { data, out } => {
            let cfg = effective_config(cli)?;
            cmd_train(data, out, &cfg)
        }
        Command::Evaluate { data, out, sweep } => {
            let cfg = effective_config(cli)?;
            cmd_evaluate(data, out, &cfg, sweep.as_deref())
        }
        Command::Compare {
            pipeline,
            a,
            b,
            towers,
            from,
            to,
        } => cmd_compare(
            pipeline,
            a,
            b,
            towers.as_deref(),
            from.as_deref(),
            to.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(value) => {
            let text =
                serde_json::to_string_pretty(&value).expect("JSON output serializes");
            // A closed pipe (e.g. `tracklr … | head`) is not a failure.
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error: writing to stdout: {e}");
                    ExitCode::FAILURE
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
