//! Small dense-tensor kernel with a reverse-mode tape.
//!
//! Everything trainable in the workspace (actors, critics, the belief
//! network) is built from the pieces in this crate: [`Tensor`] storage,
//! the [`Tape`] that records operations for backpropagation, [`layers`]
//! and the [`Adam`] optimizer. Networks are generic over [`Scalar`] so the
//! same code runs in `f32` for training and `f64` for gradient checks.

pub mod adam;
pub mod checkpoint;
mod error;
mod kernels;
pub mod layers;
mod scalar;
pub mod tape;
mod tensor;

pub use adam::{soft_update, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::NnError;
pub use layers::{
    collect_grads, Activation, BiLstm, BiLstmOutput, BoundBiLstm, BoundLinear, BoundMlp, Linear, Lstm,
    Mlp, MlpSpec, Params,
};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NnError>;
