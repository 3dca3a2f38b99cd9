use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {msg}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("input error: {0}")]
    Data(String),
    #[error("stream ended after {got} records; the warm-up protocol needs {needed}")]
    StreamTooShort { needed: usize, got: usize },
    #[error("aborting after {0} consecutive malformed rows")]
    TooManyMalformed(usize),
    #[error("solver failed: {0}")]
    Solver(#[from] streamvb::Error),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status: 2 for configuration and usage problems, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::StreamTooShort { .. } => 2,
            _ => 1,
        }
    }
}
