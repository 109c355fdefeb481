use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants line up with the CLI exit-code contract: `Domain`, `Io` and
/// `Json` map to 2, `NotPsd` to 3, `NoCertificate` to 4 and
/// `InvalidCertificate` to 5.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The (1,1) entry of a block is the zero polynomial; an orthogonal pivot fix is needed.
    #[error("zero pivot: the leading entry of the block is the zero polynomial")]
    PivotRequired,

    /// The whole trailing block vanishes identically.
    #[error("zero block: the matrix is identically zero")]
    ZeroBlock,

    #[error("not positive semidefinite: value {value:e} at point {point:?}")]
    NotPsd { point: Vec<f64>, value: f64 },

    #[error("no certificate found: {0}")]
    NoCertificate(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
