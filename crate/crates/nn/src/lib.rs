//! Minimal differentiable layer set for the light field networks.
//!
//! Tensors are NHWC. Every layer is generic over `f32` (training) and `f64`
//! (gradient checking) and shares one code path for both.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod layer;
pub mod norm;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use activation::{elu, sigmoid, Elu, ScaledTanh, Sigmoid};
pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, CheckpointInfo, Manifest, TensorEntry,
};
pub use conv::{col2im, im2col, Conv2d, ConvGeometry, ConvTranspose2d};
pub use error::{NnError, Result};
pub use init::{xavier_bound, xavier_init, xavier_uniform};
pub use layer::{zero_grads, Layer, Mode, Param, Sequential};
pub use norm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use optim::{adam_step, Adam, AdamConfig, ExponentialDecay};
pub use scalar::{gemm, Op, Scalar};
pub use tensor::Tensor4;
