use std::path::PathBuf;

/// Everything the command layer can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mmfuse_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("sweep run {param}={value} seed={seed} failed")]
    SweepRun {
        param: &'static str,
        value: f64,
        seed: u64,
        #[source]
        source: Box<CliError>,
    },

    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
