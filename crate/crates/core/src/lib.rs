//! Light field containers and the coded color-mask camera model.
//!
//! A light field `l(x, y, u, v, c)` is sensed through a random color mask
//! `Φ` onto a monochrome sensor: `i = attenuation · Σ_{u,v,c} Φ ⊙ l`. This
//! crate holds the tensors, the forward model in both tensor and dense matrix
//! form, patch handling, file formats and the quality metrics used to judge
//! reconstructions.

pub mod disparity;
pub mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod patch;
pub mod scene;
pub mod sensing;
pub mod shape;

pub use disparity::DisparityMap;
pub use error::{LfError, Result};
pub use field::{CodedImage, LightField, SensingTensor};
pub use optics::{
    add_noise, backproject_mean, compression_ratio, forward, gen_sensing_tensor, MaskDistribution,
    MaskKind, NoiseModel, Ratio,
};
pub use patch::{stitch_patches, PatchSpec, Spatial};
pub use scene::{gen_scene, LayerSpec, Region, SceneSpec, SyntheticScene};
pub use sensing::{devectorize, matrix_form, vectorize};
pub use shape::{RayShape, COLORS};
