//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments (degenerate bounds, dimension mismatches, unknown
    /// selectors, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Point dimensionality does not match the structure it is used with.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Archive parse failure; names the offending line and field.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Archive file written by an incompatible format version.
    #[error("unsupported archive version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    /// Operation requires a non-empty repertoire.
    #[error("repertoire is empty")]
    EmptyRepertoire,

    /// Simulator returned a non-finite transition or score.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// MAP-Elites failed to bootstrap an archive.
    #[error("generation error: {0}")]
    Generation(String),

    /// Linear-algebra failure in the GP fit.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The A* planner found no route to the goal.
    #[error("no path to goal")]
    NoPath,

    /// Every repertoire produced an empty candidate set.
    #[error("selection error: all repertoires exhausted")]
    Selection,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
