use latdiff_pfn::PfnError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("image shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("latent component {index} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("role mismatch: {0}")]
    Role(String),

    #[error("evaluation {index} failed: {source}")]
    Evaluation {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("archive rejected record: {0}")]
    ArchiveRejected(String),

    #[error("missing truth label for record {0}")]
    MissingTruth(String),

    #[error(transparent)]
    Model(#[from] PfnError),
}

pub type Result<T> = std::result::Result<T, Error>;
