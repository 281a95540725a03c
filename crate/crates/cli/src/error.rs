use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no report found: {0}")]
    MissingReport(String),
    #[error("unrecognized report {0}")]
    UnknownReport(PathBuf),
    #[error(transparent)]
    Core(#[from] localfloer_core::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    /// Exit code: 2 for usage, parse and missing-input errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::MissingReport(_) | CliError::UnknownReport(_) => 2,
            CliError::Core(localfloer_core::Error::UnknownFormula(_)) => 2,
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }
}
