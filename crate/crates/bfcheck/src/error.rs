use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Bayes factor: log BF must be finite, got {0}")]
    InvalidBayesFactor(f64),
    #[error("model prior must lie strictly inside (0, 1), got {0}")]
    DegeneratePrior(f64),
    #[error("accept region too small: {0} consecutive rejections")]
    AcceptRegionTooSmall(u32),
    #[error("dataset must be non-empty")]
    EmptyDataset,
    #[error("cannot drop half of a dataset with fewer than 2 observations")]
    DatasetTooShort,
    #[error("need at least one posterior draw")]
    NoDraws,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative count {0} in dataset")]
    NegativeCount(f64),
    #[error("observation {0} is not a count")]
    NonIntegerCount(f64),
    #[error("unknown model '{0}'; known models: {1}")]
    UnknownModel(String, String),
    #[error("unknown scenario '{0}'; known scenarios: {1}")]
    UnknownScenario(String, String),
    #[error("unknown fault '{0}'; known faults: flip | constant | ignore-half | log-noise:SD | log-bias:B")]
    UnknownFault(String),
    #[error("unknown accept rule '{0}'; known rules: mean-range:LO:HI")]
    UnknownAcceptRule(String),
    #[error("{failed} of {total} simulations failed (more than 1%)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("rank {rank} outside [0, {max}]")]
    RankOutOfRange { rank: u32, max: usize },
    #[error("need at least {need} observations, got {got}")]
    NotEnoughData { need: usize, got: usize },
    #[error("length mismatch: {0} probabilities vs {1} outcomes")]
    LengthMismatch(usize, usize),
    #[error("all probabilities identical; the t-test is degenerate, use the Gaffke test instead")]
    DegenerateInput,
    #[error("value {0} outside [0, 1]")]
    OutOfUnitInterval(f64),
    #[error("null table built for (S={table_s}, M={table_m}), data has (S={s}, M={m})")]
    MismatchedNullTable {
        table_s: usize,
        table_m: usize,
        s: usize,
        m: usize,
    },
    #[error("pool of {pool} simulations too small for {need} (history length x pool multiplier)")]
    PoolTooSmall { pool: usize, need: usize },
    #[error("unknown check '{0}'; known checks: sbc:<quantity> | miscalibration | dap")]
    UnknownCheck(String),
    #[error("unknown quantity '{0}'; available: {1}")]
    UnknownQuantity(String, String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
