use thiserror::Error;

/// Errors produced by the planner library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("row {row} out of range (field has {n_t} rows)")]
    Index { row: usize, n_t: usize },

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("point outside the substitution region: {0}")]
    OutOfRegion(String),

    #[error("singular density: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("braking-distance cap of {cap} m leaves no feasible deceleration at v0 = {v0} m/s")]
    InfeasibleCap { cap: f64, v0: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
