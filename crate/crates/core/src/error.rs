use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sigma = 0 describes a single frequency; use n_bins = 1 (got {n_bins})")]
    DegenerateDisorder { n_bins: usize },

    #[error("unknown time unit `{0}` (expected `fs` or `au`)")]
    UnknownUnit(String),

    #[error("invalid bin set: {0}")]
    InvalidBins(String),

    #[error("Hilbert space dimension {dim} exceeds the cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("multi-coordinate Hamiltonian supports at most 2 bins (got {0})")]
    TooManyBins(usize),

    #[error("state dimension {found} does not match Hamiltonian dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite amplitude at step {step} (t = {time} au)")]
    NonFinite { step: usize, time: f64 },

    #[error("error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    ToleranceNotMet { estimate: f64, tolerance: f64 },

    #[error("propagation needs {substeps:e} substeps, over the budget of {budget:e}")]
    StepBudget { substeps: f64, budget: f64 },

    #[error("initial state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("absorption requires a trajectory started from the photonic state")]
    NotPhotonic,

    #[error("trajectory carries no state snapshots")]
    MissingSnapshots,

    #[error("bin {bin} has zero e1 population; vibrational energy undefined")]
    ZeroPopulation { bin: usize },

    #[error("spectrum has {0} local maxima; at least 2 are needed for a splitting")]
    NoSplitting(usize),

    #[error("mismatched comparison: {0}")]
    Mismatch(String),
}
