//! A small differentiable network engine with hand-written backward passes.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::Mode;
pub use model::{backward, build_model, forward, l2_penalty, predict, ForwardCache, Gradients, ModelConfig, ModelParams};
pub use tensor::Tensor;
