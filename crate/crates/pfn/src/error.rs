use std::path::PathBuf;

use crate::Shape;

#[derive(Debug, thiserror::Error)]
pub enum PfnError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed model header: {0}")]
    Header(String),

    #[error("layer {layer}: {message}")]
    Layer { layer: usize, message: String },

    #[error("layer {layer}: shape incompatibility: {message}")]
    Shape { layer: usize, message: String },

    #[error("weights blob does not start with the PFN1 magic")]
    BadMagic,

    #[error("weights blob length mismatch: header declares {expected} bytes, file has {actual}")]
    BlobLength { expected: usize, actual: usize },

    #[error("input shape mismatch: network expects {expected}, got {actual}")]
    Input { expected: Shape, actual: Shape },
}

pub type Result<T> = std::result::Result<T, PfnError>;
