use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image file: {0}")]
    Pnm(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("truth labels line {line}: {message}")]
    Truth { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] latdiff_core::Error),
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
