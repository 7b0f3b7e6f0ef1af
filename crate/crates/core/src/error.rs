use thiserror::Error;

/// Errors raised by the optimizer library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Conformability(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A point handed to `grad_phi` lies within the boundary margin of dom φ.
    #[error("point too close to the boundary of the reference domain (norm {norm:.17e}, limit {limit:.17e})")]
    BoundaryProximity { norm: f64, limit: f64 },

    #[error("invalid constraint spec: {0}")]
    InvalidSpec(String),

    /// The backward step has no feasible point within reach of the reference domain.
    #[error("backward step has empty domain: {0}")]
    EmptyProxDomain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
