use thiserror::Error;

/// Errors produced by the simulation and diagnostics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A size or memory budget would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The Hamiltonian has several global maximizers.
    #[error("degenerate hamiltonian: {0}")]
    Degenerate(String),

    /// A non-optimal state has no strictly improving neighbor.
    #[error("state {state:?} is a local maximum different from the global optimum")]
    Trapped { state: Vec<u32> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::Resource(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
