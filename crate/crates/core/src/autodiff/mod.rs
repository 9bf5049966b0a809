//! Minimal reverse-mode differentiation for small recurrent networks.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod tensor;

pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
pub use graph::{mse_loss, Eager, Graph, NodeId, Tape};
pub use optim::{AdamW, AdamWConfig, Parameter, ParameterSet, PlateauConfig, PlateauScheduler};
pub use tensor::Tensor;
