//! Numerical building blocks for the model: dense tensors and GEMM, layer
//! primitives, batch normalization, parameter storage and Adam.

mod adam;
mod batchnorm;
mod ops;
mod params;
mod tensor;

pub use adam::Adam;
pub use batchnorm::{BatchNormCache, BatchNormState, BnMode};
pub use ops::{bce_loss, bce_loss_grad, linear, relu, sigmoid, PROB_CLAMP};
pub use params::{xavier_uniform, Param, ParamId, ParamStore};
pub use tensor::{gemm, MatRef, Tensor};
