use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A resolution guard failed; the message names the violated inequality.
    #[error("resolution guard violated: {0}")]
    Resolution(String),

    #[error("point {index} lies outside the unit cube [0,1)^d")]
    OutsideUnitCube { index: usize },

    #[error("level {level} out of range (histogram built to level {n_max})")]
    LevelOutOfRange { level: usize, n_max: usize },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("kernel is not capacitable: {0}")]
    NonCapacitable(String),

    #[error("malformed kernel spec at token `{token}`: {reason}")]
    KernelSpec { token: String, reason: String },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
