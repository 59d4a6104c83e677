use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rank-deficient design: {0}")]
    Rank(String),

    #[error("degenerate kernel window: {0}")]
    DegenerateWindow(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("unbounded region: {0}")]
    UnboundedRegion(String),

    #[error("degenerate hyperplane: {0}")]
    DegenerateHyperplane(String),

    #[error("chain too short: {0}")]
    TooShort(String),

    #[error("not supported by the method: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::Rank(_) | Error::DegenerateWindow(_)
        )
    }
}
