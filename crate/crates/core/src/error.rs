use thiserror::Error;

/// Error variants for matching operations.
#[derive(Debug, Error)]
pub enum MatchError {
    /// A bounding box violated its construction invariants.
    #[error("invalid box: {0}")]
    InvalidBox(String),

    /// Dimensions of two inputs do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numeric input was outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An instance is infeasible (more ground truths than predictions).
    #[error("infeasible: {ng} ground truths exceed {np} predictions")]
    Infeasible { np: usize, ng: usize },

    /// Exhaustive enumeration refused above the factorial guard.
    #[error("instance too large for exhaustive search: np = {np} > {limit}")]
    SizeGuard { np: usize, limit: usize },

    /// A scaling iteration produced a zero, infinite or NaN quantity.
    /// Usually means epsilon is too small for plain-mode kernels; retry
    /// with the stabilized (log-domain) mode.
    #[error("numerical overflow in scaling iteration {iteration}")]
    NumericalOverflow { iteration: usize },

    /// Exact rational arithmetic exceeded the integer range.
    #[error("rational overflow: {0}")]
    RationalOverflow(String),

    /// An empty input where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Failure of one problem inside a batched solve.
    #[error("problem {index} in batch failed: {source}")]
    BatchProblem {
        index: usize,
        #[source]
        source: std::boxed::Box<MatchError>,
    },
}

pub type Result<T> = std::result::Result<T, MatchError>;
