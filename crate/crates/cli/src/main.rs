mod commands;
mod config;
mod errors;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mera_core::enseval::EnsembleWeights;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "mera", version, about = "Multilingual audio-visual question answering pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate the English source corpus into the configured languages.
    Translate {
        /// Corrected review sheet to apply after translation; repeatable.
        #[arg(long = "apply-review")]
        reviews: Vec<PathBuf>,
    },
    /// Extract and cache video, audio and text embeddings.
    Extract {
        /// Re-read cached tensors and re-extract any that fail verification.
        #[arg(long)]
        verify: bool,
    },
    /// Train one model per language and variant.
    Train {
        /// Retrain even when a checkpoint is up to date.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate L, C, T and the ensemble and write the accuracy report.
    Eval {
        /// Ensemble weights as `alpha,beta,gamma`.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<EnsembleWeights>,
    },
    /// Measure inference latency on the test split.
    Bench {
        #[arg(long)]
        repeats: Option<usize>,
    },
}

fn parse_weights(s: &str) -> Result<EnsembleWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [alpha, beta, gamma] = parts[..] else {
        return Err(format!("expected three comma-separated weights, got {}", parts.len()));
    };
    EnsembleWeights::new(alpha, beta, gamma).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(cli.seed, cli.out_dir);
    config.validate()?;
    match cli.command {
        Command::Translate { reviews } => commands::translate::run(&config, &reviews),
        Command::Extract { verify } => commands::extract::run(&config, verify),
        Command::Train { force } => commands::train::run(&config, force),
        Command::Eval { weights } => commands::eval::run(&config, weights),
        Command::Bench { repeats } => commands::bench::run(&config, repeats),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(errors::exit_code(&err))
        }
    }
}
