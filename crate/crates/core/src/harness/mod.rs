//! Experiment recipes behind the `gapinit-lab` binary.
//!
//! Each subcommand is a deterministic function of its configuration and
//! seed. Outputs are assembled in memory and written at the end of a run
//! through temp-file-and-rename, so a failed run leaves no partial files.
//! Parallel work uses child streams keyed by task index, so results do not
//! depend on the thread count set through `GAPINIT_LAB_THREADS`.

mod commands;
pub mod config;
pub mod svg;
pub mod table;

use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::fsutil::write_atomic;

pub use config::ExperimentConfig;
pub use table::{Cell, CsvTable};

pub const THREADS_ENV: &str = "GAPINIT_LAB_THREADS";
pub const DEFAULT_SEED: u64 = 42;
/// Run seeds for multi-seed training.
pub const DEFAULT_SEEDS: [u64; 5] = [42, 123, 2024, 999, 7];
pub const DEFAULT_OUTPUT_DIR: &str = "gapinit-out";
pub const DEFAULT_TRAIN_DIM: usize = 256;
pub const DEFAULT_SAFETY_MARGIN: usize = 2;
pub const DEFAULT_TOP_K_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Suppression,
    Concentration,
    Spectrum,
    Cone,
    Calibrate,
    Train,
    Ablate,
}

impl Command {
    pub const ALL: &'static [Command] = &[
        Command::Suppression,
        Command::Concentration,
        Command::Spectrum,
        Command::Cone,
        Command::Calibrate,
        Command::Train,
        Command::Ablate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Suppression => "suppression",
            Command::Concentration => "concentration",
            Command::Spectrum => "spectrum",
            Command::Cone => "cone",
            Command::Calibrate => "calibrate",
            Command::Train => "train",
            Command::Ablate => "ablate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// Files produced by a run, in write order.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn table(&mut self, name: &str, t: &CsvTable) {
        self.add(name, t.to_csv_string());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.files
            .iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                write_atomic(&path, bytes)?;
                Ok(path)
            })
            .collect()
    }
}

/// Result of a computation: files to write, plus an error to report after
/// writing them (used when every training seed diverged).
#[derive(Debug)]
pub struct RunOutcome {
    pub outputs: Outputs,
    pub deferred_error: Option<LabError>,
}

/// Runs `cmd` in memory. `seed` overrides the config's `seed`.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, seed: Option<u64>) -> Result<RunOutcome> {
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    match cmd {
        Command::Suppression => commands::suppression(cfg, seed),
        Command::Concentration => commands::concentration(cfg, seed),
        Command::Spectrum => commands::spectrum(cfg, seed),
        Command::Cone => commands::cone(cfg, seed),
        Command::Calibrate => commands::calibrate(cfg, seed),
        Command::Train => commands::train(cfg, seed),
        Command::Ablate => commands::ablate(cfg, seed),
    }
}

/// Thread cap from `GAPINIT_LAB_THREADS`; `None` means the rayon default.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => Err(LabError::config(THREADS_ENV, "not valid unicode")),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(LabError::config(THREADS_ENV, format!("expected a positive integer, got `{s}`"))),
        },
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Loads the config, runs the subcommand on a pool sized by
/// `GAPINIT_LAB_THREADS` and writes its files. Returns the written paths.
pub fn run(cmd: Command, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let cap = thread_cap()?;
    let cfg = ExperimentConfig::load(&opts.config, cmd)?;
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cap {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::config(THREADS_ENV, format!("cannot build thread pool: {e}")))?;
    let outcome = pool.install(|| execute(cmd, &cfg, opts.seed))?;
    let written = outcome.outputs.write_to(&dir)?;
    match outcome.deferred_error {
        Some(e) => Err(e),
        None => Ok(written),
    }
}
