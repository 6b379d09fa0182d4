//! Inference-only runtime for portable feed-forward networks (PFN).
//!
//! Networks trained elsewhere are exported to a two-file directory
//! (`model.json` + `weights.bin`) and executed here as black boxes. Weights
//! are stored as binary32; activations are carried in binary64.

mod error;
mod format;
mod layer;
mod network;
mod tensor;

pub use error::{PfnError, Result};
pub use format::{HEADER_FILE, MAGIC, WEIGHTS_FILE};
pub use layer::{ConvGeometry, Layer};
pub use network::Network;
pub use tensor::{Shape, Tensor};
