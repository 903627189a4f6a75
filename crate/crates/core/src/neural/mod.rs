//! Tensor substrate: reverse-mode autodiff, MLPs, Adam, input standardization
//! and the training loop shared by every estimator.

pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod standardize;
pub mod tensor;
pub mod train;

pub use graph::{Gradients, Graph, Var};
pub use mlp::{Activation, Linear, Mlp};
pub use optim::Adam;
pub use params::ParamSet;
pub use standardize::Standardizer;
pub use tensor::Tensor;
pub use train::{train, Model, TrainConfig, TrainReport};
