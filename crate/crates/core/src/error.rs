use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not a supported prime")]
    InvalidPrime(u64),

    #[error("prime mismatch: {left} vs {right}")]
    PrimeMismatch { left: u64, right: u64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("{prime}^{level} does not fit the 63-bit machine kernels")]
    LevelOverflow { prime: u64, level: u32 },

    #[error("zero denominator")]
    ZeroDenominator,

    #[error("cannot refine a level-{from} density to the coarser level {to}")]
    RefineBelowLevel { from: u32, to: u32 },

    #[error("ball of level {requested} is finer than the step resolution {available}")]
    Resolution { requested: u32, available: u32 },

    #[error("table of {cells} entries exceeds the budget of {budget}; use sparse or sampled evaluation")]
    TableTooLarge { cells: u128, budget: u128 },

    #[error("oracle work {work} exceeds cap {cap}")]
    OracleCapExceeded { work: u128, cap: u128 },

    #[error("standing assumption violated: M = {m} with p = {p} requires M >= 2")]
    StandingAssumption { p: u64, m: u32 },

    #[error("no admissible primes for p = {p}, M = {m}")]
    EmptyPrimeSet { p: u64, m: u32 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("resolution budget exceeded at depth {requested_depth}; feasible depth is {feasible_depth}: {detail}")]
    ResolutionBudget {
        requested_depth: usize,
        feasible_depth: usize,
        detail: String,
    },

    #[error("{what} needs {needed} entries, budget is {budget}")]
    MemoryBudget { what: String, needed: u128, budget: u128 },

    #[error("missing cache: {0}")]
    MissingCache(String),

    #[error("lemma violation: {0}")]
    LemmaViolation(String),

    #[error("exponent out of range: {0}")]
    InvalidExponent(String),

    #[error("need at least {needed} nontrivial shells, found {found}")]
    InsufficientShells { found: usize, needed: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
