use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{message}")]
    Numerical { message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

impl From<tvmix::Error> for CliError {
    fn from(e: tvmix::Error) -> Self {
        use tvmix::Error as E;
        match e {
            E::Numerical(_)
            | E::SamplerDegenerate(_)
            | E::NotConverged
            | E::TooManyFailures { .. }
            | E::NonStationary(_) => CliError::Numerical { message: e.to_string() },
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("invalid JSON: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
