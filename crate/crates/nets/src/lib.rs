//! Learned reconstruction of full-color light fields from a single coded
//! image, and unsupervised disparity estimation from the result.
//!
//! The reconstruction network takes the coded image together with the
//! sensing tensor that produced it, so one parameter set serves any mask
//! drawn from the training distribution. The disparity network is trained
//! only through a photometric loss that warps every view onto the reference
//! view.

pub mod batch;
pub mod disparity;
pub mod error;
pub mod gradcheck;
pub mod pack;
pub mod recon;
pub mod train;
pub mod warp;

pub use batch::{derive_seed, extract_patches, random_phi_patches, sample_batch, TrainBatch};
pub use disparity::{disp_forward, disp_from_coded, DispNet, DispNetConfig, DISP_RATES};
pub use error::{NetsError, Result};
pub use pack::{lightfield_tensor, pack_input, stack, tensor_lightfield, unpack_phi_effective};
pub use recon::{
    recon_forward, recon_forward_tiled, recon_loss, DataNorm, ReconNet, ReconNetConfig, RECON_BETA,
    RECON_DILATIONS, RECON_LR,
};
pub use train::{
    sample_fields, train_disp, train_recon, DispTrainConfig, FineTuneRule, ReconTrainConfig,
    TrainLog,
};
pub use warp::{
    disp_loss, disp_loss_batch, tv_loss, warp_to_center, WarpedView, DEFAULT_DMAX, DISP_GAMMA,
    DISP_LR,
};
