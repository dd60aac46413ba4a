//! Harness around the matching library: synthetic problem generation,
//! file formats, the solver CLI plumbing, parameter sweeps, and the
//! matching-time benchmark.

use thiserror::Error;
use uotod_core::MatchError;

pub mod bench;
pub mod io;
pub mod sweep;
pub mod synth;

/// Errors of the harness layer. `Solver` wraps numeric failures that map
/// to a distinct process exit code; everything else is malformed input.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("could not place an object within the retry budget (seed {seed})")]
    PlacementFailed { seed: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad input: {0}")]
    Format(String),

    #[error(transparent)]
    Solver(#[from] MatchError),
}

impl HarnessError {
    /// Whether the underlying failure is numerical (scaling overflow)
    /// rather than malformed input.
    pub fn is_numeric(&self) -> bool {
        fn numeric(e: &MatchError) -> bool {
            match e {
                MatchError::NumericalOverflow { .. } => true,
                MatchError::BatchProblem { source, .. } => numeric(source),
                _ => false,
            }
        }
        matches!(self, HarnessError::Solver(e) if numeric(e))
    }
}
