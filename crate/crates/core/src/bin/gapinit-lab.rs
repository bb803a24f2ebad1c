use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gapinit_lab::harness::{self, Command, RunOptions};

#[derive(Clone, Copy, ValueEnum)]
enum Sub {
    Suppression,
    Concentration,
    Spectrum,
    Cone,
    Calibrate,
    Train,
    Ablate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Suppression => Command::Suppression,
            Sub::Concentration => Command::Concentration,
            Sub::Spectrum => Command::Spectrum,
            Sub::Cone => Command::Cone,
            Sub::Calibrate => Command::Calibrate,
            Sub::Train => Command::Train,
            Sub::Ablate => Command::Ablate,
        }
    }
}

/// Rank-1 adapter geometry experiments.
#[derive(Parser)]
#[command(name = "gapinit-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    match harness::run(cli.command.into(), &opts) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gapinit-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
