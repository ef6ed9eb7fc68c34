//! `fmv`: file-based pipeline for selecting program candidates by
//! functional majority voting.
//!
//! Stages read and write artifacts under `--workdir` and can be run
//! independently: generate, execute, vote, reward, evaluate, curve, split
//! and simulate.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod manifest;
mod records;

use commands::Context;
use config::FileConfig;
use manifest::Workdir;

#[derive(Debug, Parser)]
#[command(
    name = "fmv",
    version,
    about = "Functional majority voting over executed program candidates"
)]
struct Cli {
    /// Directory that all artifact paths are relative to.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// TOML config. Defaults to <workdir>/fmv.toml when it exists.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample candidate programs from a chat-completions endpoint.
    Generate(commands::generate::GenerateArgs),
    /// Run every candidate on every test input and write execution matrices.
    Execute(commands::execute::ExecuteArgs),
    /// Select the functional medoid or build pointwise targets per task.
    Vote(commands::vote::VoteArgs),
    /// Assign binary consensus rewards to every candidate.
    Reward(commands::reward::RewardArgs),
    /// Score consensus selections against oracle outputs.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Consensus accuracy as a function of the candidate budget.
    Curve(commands::curve::CurveArgs),
    /// Split tasks into two seeded halves.
    Split(commands::split::SplitArgs),
    /// Scaling curve on synthetic ensembles.
    Simulate(commands::simulate::SimulateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fmv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> error::Result<()> {
    let config = FileConfig::load(cli.config.as_deref(), &cli.workdir)?;
    let ctx = Context {
        wd: Workdir::new(cli.workdir),
        config,
    };
    match &cli.command {
        Command::Generate(a) => commands::generate::run(&ctx, a),
        Command::Execute(a) => commands::execute::run(&ctx, a),
        Command::Vote(a) => commands::vote::run(&ctx, a),
        Command::Reward(a) => commands::reward::run(&ctx, a),
        Command::Evaluate(a) => commands::evaluate::run(&ctx, a),
        Command::Curve(a) => commands::curve::run(&ctx, a),
        Command::Split(a) => commands::split::run(&ctx, a),
        Command::Simulate(a) => commands::simulate::run(&ctx, a),
    }
}
