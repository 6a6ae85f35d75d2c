use thiserror::Error;

/// Failures reported by the engine, theory and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radius {0}: must be at least 1")]
    InvalidRadius(i64),
    #[error("stencil has zero total weight")]
    DegenerateStencil,
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("fill stalled at shell {shell}: no pixel could be filled")]
    Stall { shell: usize },
    #[error("offset set is collinear: angular spectrum has fewer than two directions")]
    Collinear,
    #[error("angle {0} rad is outside the admissible range")]
    UndefinedAngle(f64),
    #[error("random walk has non-negative vertical drift {0}")]
    IllPosed(f64),
    #[error("initial error is zero; rate is undefined")]
    ZeroInitialError,
    #[error("iteration diverged after {0} sweeps")]
    Divergence(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
