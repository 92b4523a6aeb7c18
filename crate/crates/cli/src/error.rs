use std::io;
use std::path::{Path, PathBuf};

use hessianscope::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 1 for numerical failures, 2 for configuration and input problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(
                CoreError::NonConverged { .. }
                | CoreError::NonFinite { .. }
                | CoreError::Degenerate(_)
                | CoreError::CapExceeded { .. },
            ) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Core(CoreError::NonConverged { residuals: vec![1.0] }).exit_code(), 1);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::io(Path::new("a"), io::Error::other("b")).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::BadMagic { expected: 1, found: 2 }).exit_code(), 2);
    }
}
