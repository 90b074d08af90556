use fadeflow::Error;

/// Failures of a command, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {msg}", at.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Config { msg: String, at: Option<(usize, usize)> },
    #[error("{0}")]
    BlowUp(Error),
    #[error("hypothesis check failed: {0}")]
    AuditFail(String),
    #[error("inversion residual {residual:e} exceeds {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("{0}")]
    NoReturnPairs(Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::BlowUp(_) => 3,
            CliError::AuditFail(_) => 4,
            CliError::Residual { .. } => 5,
            CliError::NoReturnPairs(_) => 6,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::BlowUp { .. } => CliError::BlowUp(e),
            Error::NoReturnPairs => CliError::NoReturnPairs(e),
            e => CliError::Core(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}
