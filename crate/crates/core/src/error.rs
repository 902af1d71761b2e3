use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid map specification: {0}")]
    InvalidSpec(String),

    #[error("point {0} is a discontinuity of the map")]
    Singular(f64),

    #[error("root bracketing failed at step {step}: target {target} not in f([{lo}, {hi}])")]
    Bracket {
        step: usize,
        lo: f64,
        hi: f64,
        target: f64,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("mass conservation violated: ledger off by {0:e}")]
    MassConservation(f64),

    #[error("centering too imprecise: standard error {se:e} exceeds {limit:e}; need an orbit of about {required} steps")]
    CenteringPrecision { se: f64, limit: f64, required: u64 },

    #[error("degenerate variance {0:e}: observable behaves like a coboundary")]
    Degenerate(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
