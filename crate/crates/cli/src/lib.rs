//! Episode orchestration, benchmark replication and statistics on top of
//! `aprol-core`, plus the `bench-cli` binary.

pub mod bench;
pub mod episode;
pub mod mapfile;
pub mod stats;

pub use bench::{derive_seed, parse_csv, rows_to_csv, run_benchmark, BenchConfig, BenchRow};
pub use episode::{load_repertoire_dir, run_episode, EpisodeConfig, EpisodeResult, StepDiag};
pub use mapfile::MapFile;
pub use stats::ranksum;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aprol_core::Error),

    /// Episode failure carrying the replanning step it happened at.
    #[error("episode failed at step {step}: {source}")]
    AtStep {
        step: usize,
        source: aprol_core::Error,
    },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
