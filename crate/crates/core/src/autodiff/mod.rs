//! Reverse-mode automatic differentiation over dense `f64` tensors, with the
//! Adam optimizer and a checksummed parameter checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use graph::{CustomBackward, Graph, Var};
pub use params::{ParamId, Parameters};
pub use rng::Rng;
pub use tensor::Tensor;
