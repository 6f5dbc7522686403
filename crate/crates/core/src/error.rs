use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configurations belong to chains of different length ({0} vs {1} sites)")]
    MismatchedSites(usize, usize),

    #[error("zero-magnetization ensemble needs an even number of sites, got {0}")]
    OddSites(usize),

    #[error("chain length {n} outside the supported range {min}..={max}")]
    ChainLength { n: usize, min: usize, max: usize },

    #[error("site {site} out of range for a chain of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("unknown channel variant `{0}` (expected one of H0, H1, H2, S2, S1, S0)")]
    UnknownVariant(String),

    #[error("channel is not trace preserving (max deviation {0:.3e})")]
    NotCptp(f64),

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("invalid matrix input: {0}")]
    InvalidMatrix(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid ensemble configuration: {0}")]
    InvalidEnsemble(String),

    #[error("branch probabilities vanished ({p1:.3e}, {p2:.3e}); the local channel is not CPTP")]
    VanishingBranches { p1: f64, p2: f64 },

    #[error("memory budget exceeded: need {required} bytes, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("fit refused: {0}")]
    Fit(String),

    #[error("{0}")]
    NotFound(String),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
