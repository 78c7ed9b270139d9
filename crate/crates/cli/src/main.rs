//! `kgd`: train, evaluate and certify knowledge graph embeddings.
//!
//! Every command reads a TOML config (`--config`), applies `--set key=value`
//! overrides, echoes the resolved configuration and writes its outputs plus a
//! `manifest.json` into the run directory.
//!
//! Exit status: 0 on success, 1 for configuration or input validation
//! errors, 2 for runtime failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;
use output::RunDir;

#[derive(Parser)]
#[command(name = "kgd", version, about = "Denoising knowledge graph embeddings with certified robustness")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration value, e.g. `--set train.lambda=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Model checkpoint (eval, certify, multihop).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Run directory; overrides `output.dir` and the `KGD_OUT_DIR` root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Train a model and write a checkpoint and training log.
    Train,
    /// Filtered link prediction, clean and under entity perturbation.
    Eval,
    /// Randomized-smoothing certification of test predictions.
    Certify,
    /// 1p/2p/3p path queries answered by beam search.
    Multihop,
    /// Train and certify over an (alpha, lambda) grid.
    Grid,
    /// Write a synthetic graph as triple files.
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Certify => "certify",
            Command::Multihop => "multihop",
            Command::Grid => "grid",
            Command::Synth => "synth",
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = config::resolve(cli.config.as_deref(), &cli.overrides)?;
    if let Some(c) = cli.checkpoint {
        cfg.checkpoint = Some(c);
    }
    if let Some(o) = cli.out {
        cfg.output.dir = Some(o);
    }
    let name = cli.command.name();
    let dir = cfg.output_dir(name);
    let mut run = RunDir::create(dir).map_err(Failure::Runtime)?;

    let result = match cli.command {
        Command::Train => commands::train(&cfg, &mut run).map(|d| (Some(d), false)),
        Command::Eval => commands::eval(&cfg, &mut run).map(|d| (Some(d), false)),
        Command::Certify => commands::certify(&cfg, &mut run).map(|d| (Some(d), false)),
        Command::Multihop => commands::multihop(&cfg, &mut run).map(|d| (Some(d), false)),
        Command::Grid => commands::grid(&cfg, &mut run).map(|(d, failed)| (Some(d), failed)),
        Command::Synth => commands::synth(&cfg, &mut run).map(|_| (None, false)),
    };
    let (data, partial) = match &result {
        Ok((d, failed)) => (commands::manifest_dataset(d), *failed),
        Err(_) => (None, true),
    };
    run.write_manifest(name, &cfg, data, partial)
        .map_err(Failure::Runtime)?;
    eprintln!("outputs in {}", run.path().display());
    match result {
        Ok((_, true)) => Err(Failure::Runtime(anyhow::anyhow!("one or more grid cells failed"))),
        Ok(_) => Ok(()),
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
