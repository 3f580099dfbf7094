use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A design or trial configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical routine failed to converge or bracket a root.
    #[error("computation error: {0}")]
    Computation(String),
    /// The CCD lookup has no entry for this target; a Δ override is required.
    #[error("CCD delta required: no tabulated value for p_T = {0}")]
    DeltaRequired(f64),
    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }
}
