//! Dense matrices with tape-based reverse-mode differentiation, an Adam
//! optimizer and a binary checkpoint format.
//!
//! A [`Graph`] borrows a [`ParamStore`] for one forward pass. Parameter leaves
//! read straight from the store; [`Graph::backward`] returns a [`Gradients`]
//! value aligned with the store, so many graphs can run concurrently over the
//! same parameters and their gradients be summed afterwards.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{finite_difference_check, rel_error, GradCheck};
pub use graph::{Graph, Var};
pub use params::{Adam, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

/// Epsilon added to the variance in instance normalization.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("softmax row {row} is fully masked")]
    FullyMasked { row: usize },
    #[error("backward already ran on this graph")]
    BackwardTwice,
    #[error("backward needs a 1x1 loss, got {0}x{1}")]
    NotScalar(usize, usize),
    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
