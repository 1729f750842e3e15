//! Dense tensors and the differentiable operations the network is built from.
//!
//! Every forward operation `op` has a companion `op_vjp` that, given the
//! forward inputs and an upstream cotangent shaped like the output, returns
//! the cotangents of every differentiable input (data and parameters).
//! Operations are pure; internal reductions run in a fixed order, so results
//! are bit-identical across runs.

mod activation;
mod conv;
pub(crate) mod gemm;
mod linear;
mod lstm;
mod norm;
mod resize;
mod scalar;
mod tensor;

pub use activation::{activation, activation_vjp, sigmoid, Activation};
pub(crate) use activation::activation_vjp_from_output;
pub use conv::{
    conv1d, conv1d_vjp, conv3d, conv3d_vjp, conv_transpose1d, conv_transpose1d_len, conv_transpose1d_vjp,
    Conv1dSpec, Conv3dSpec, ConvGrads, ConvSpec,
};
pub use linear::{linear, linear_vjp, LinearGrads};
pub use lstm::{
    bilstm_forward, bilstm_layer, bilstm_layer_vjp, bilstm_vjp, LstmCache, LstmDirection, LstmGrads, LstmParams,
};
pub use norm::{group_norm, group_norm_vjp, GroupNormGrads, GroupNormParams};
pub use norm::{group_norm_batched, group_norm_batched_vjp};
pub use resize::{resize_linear_time, resize_linear_time_vjp};
pub use scalar::Scalar;
pub use tensor::Tensor;
