//! `nips`: generate Darcy corpora, train and evaluate kernel models, invert
//! kernels for permeability and benchmark scaling.

mod commands;
mod conf;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Core(#[from] nips_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(nips_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nips", version, about = "Neural kernel learning for heterogeneous Darcy flow")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a corpus of microstructures with load/solution pairs.
    GenData(commands::GenDataArgs),
    /// Train a model on a corpus.
    Train(commands::TrainArgs),
    /// Zero-shot errors of a checkpoint on held-out systems.
    Eval(commands::EvalArgs),
    /// Interaction-strength maps and permeability recovery from a kernel.
    Invert(commands::InvertArgs),
    /// Per-epoch time and peak memory against token count.
    Bench(commands::BenchArgs),
    /// Train-and-evaluate sweeps over one setting.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.cmd {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Invert(a) => commands::invert(a),
        Command::Bench(a) => commands::bench(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
