//! Minimal neural network stack: dense tensors, a reverse-mode tape, the
//! attention policy/value network, and text checkpoints.

pub mod checkpoint;
pub mod policy;
pub mod tape;
pub mod tensor;

pub use policy::{NetConfig, PolicyNet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
