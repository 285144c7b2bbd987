//! Tensors, reverse-mode differentiation and gradient descent.

pub mod checkpoint;
pub mod graph;
pub mod init;
pub mod kernels;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use graph::{sigmoid, Graph, Var};
pub use optim::{sgd_step, LrSchedule, Optimizer, OptimizerKind};
pub use params::{Param, ParamStore};
pub use tensor::Tensor;
