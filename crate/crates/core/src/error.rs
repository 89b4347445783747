use thiserror::Error;

/// Errors produced anywhere in the imaging, reconstruction and classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every traced ray missed the sensor.
    #[error("empty footprint: no ray from point ({row:.3}, {col:.3}) at depth {depth} m reached the sensor")]
    EmptyFootprint { row: f64, col: f64, depth: f64 },

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    TrainingDiverged { iteration: usize, loss: f64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
