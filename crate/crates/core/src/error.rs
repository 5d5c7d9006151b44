use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: truncation must be at least 2")]
    InvalidDimension(usize),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("g3 = 0: the squeezing amplitude vanishes identically, no drive reaches the target")]
    NoDriveCoupling,

    #[error("rescaling undefined: |K| = {0:e} is too small")]
    RescalingUndefined(f64),

    #[error("expansion produced {0} monomials, above the cap of {1}")]
    ExpansionBlowup(usize, usize),

    #[error("oscillatory integration received a secular (m = 0) term")]
    SecularLeak,

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("integrator failure: unitarity defect {0:e}")]
    IntegratorFailure(f64),

    #[error("ground branch broke at control {failed}: best overlap {overlap:.3}, last good control {last_good}")]
    BranchBreak {
        last_good: f64,
        failed: f64,
        overlap: f64,
    },

    #[error("parity labels missing from spectrum")]
    UnlabeledSpectrum,

    #[error("below-well set is empty at control {0}")]
    EmptyWell(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numeric consistency: {0}")]
    Numeric(String),

    #[error("no candidate state matched (best overlap {0:.3})")]
    MatchingFailure(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
