use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 2 = configuration error, 3 = data error, 4 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<mmmi::Error> for CliError {
    fn from(e: mmmi::Error) -> Self {
        match e {
            mmmi::Error::Parameter(_) | mmmi::Error::Config(_) => CliError::Config(e.to_string()),
            mmmi::Error::Data(_) | mmmi::Error::NonMonotone { .. } => {
                CliError::Data(e.to_string())
            }
            mmmi::Error::SingularDesign { .. } | mmmi::Error::NonConvergence { .. } => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("config error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("csv error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
