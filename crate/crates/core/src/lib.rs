//! Latent-space differential testing.
//!
//! The engine searches a generator's latent space with NSGA-II for inputs on
//! which two classifiers disagree, keeps them in a digest-unique archive, and
//! provides the post-search filters, diversity metrics and a selector harness
//! used to evaluate what was found.

pub mod clustering;
pub mod error;
pub mod filtering;
pub mod fitness;
pub mod metrics;
pub mod modelhub;
pub mod nsga2;
pub mod selection;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    argmax_label, cosine_distance, euclidean_distance, is_triggering, ClassLabel, Image, ImageDigest, ImageShape,
    LatentBounds, LatentVector, ProbabilityVector,
};
