use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 config, 3 data, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<dirquant::Error> for CliError {
    fn from(e: dirquant::Error) -> Self {
        use dirquant::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::InvalidDirection(_) | E::UnsupportedPrior(_) | E::Unsupported(_) => CliError::Config(msg),
            E::Shape(_) | E::Domain(_) | E::TooShort(_) => CliError::Data(msg),
            E::Numerical(_)
            | E::Rank(_)
            | E::DegenerateWindow(_)
            | E::Initialization(_)
            | E::UnboundedRegion(_)
            | E::DegenerateHyperplane(_) => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
