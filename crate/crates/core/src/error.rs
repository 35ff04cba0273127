use thiserror::Error;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("singular even-order minor at order {order}")]
    Singular { order: usize },
    #[error("classicality violation: {0}")]
    Classicality(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("site too close to the window edge: {0}")]
    Margin(String),
    #[error("coverage error: {0}")]
    Coverage(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn convergence(msg: impl Into<String>) -> Self {
        Error::Convergence(msg.into())
    }

    /// True for the error kinds that stem from invalid parameters.
    pub fn is_parameter_error(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Coverage(_) | Error::Margin(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
