//! Mask-conditioned reconstruction network `l̂ = f(i, Φ)` and its loss.

use std::path::Path;

use lfcs_core::{stitch_patches, CodedImage, LightField, PatchSpec, SensingTensor, Spatial};
use lfcs_nn::{
    load_checkpoint, read_manifest, save_checkpoint, BatchNorm, CheckpointInfo, Conv2d,
    ConvGeometry, Elu, Layer, Manifest, Mode, Param, Scalar, Sequential, Sigmoid, Tensor4,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NetsError, Result};
use crate::pack::{pack_input, stack, tensor_lightfield};

pub const RECON_DILATIONS: [usize; 11] = [1, 1, 1, 2, 4, 8, 16, 1, 1, 1, 1];
pub const RECON_BETA: f64 = 0.004;
pub const RECON_LR: f64 = 5e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconNetConfig {
    pub views: usize,
    /// Width of every layer except the last two.
    pub channels: usize,
    /// One 3×3 convolution per entry.
    pub dilations: Vec<usize>,
}

impl ReconNetConfig {
    /// 5×5 views, 128 channels.
    pub fn full() -> Self {
        Self {
            views: 5,
            channels: 128,
            dilations: RECON_DILATIONS.to_vec(),
        }
    }

    /// 2×2 views, 32 channels.
    pub fn toy() -> Self {
        Self {
            views: 2,
            channels: 32,
            dilations: RECON_DILATIONS.to_vec(),
        }
    }

    pub fn rays(&self) -> usize {
        self.views * self.views * lfcs_core::COLORS
    }

    pub fn in_channels(&self) -> usize {
        1 + self.rays()
    }

    /// Output width of each layer; the last two emit one channel per ray.
    pub fn widths(&self) -> Vec<usize> {
        let n = self.dilations.len();
        (0..n)
            .map(|i| {
                if i + 2 >= n {
                    self.rays()
                } else {
                    self.channels
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.channels == 0 {
            return Err(NetsError::Config("views and channels must be >= 1".into()));
        }
        if self.dilations.len() < 3 || self.dilations.contains(&0) {
            return Err(NetsError::Config(format!(
                "bad dilation schedule {:?}",
                self.dilations
            )));
        }
        let dilated: Vec<usize> = self.dilations.iter().copied().filter(|&d| d > 1).collect();
        if dilated != [2, 4, 8, 16] {
            return Err(NetsError::Config(format!(
                "dilated layers must use rates 2, 4, 8, 16 in order, got {:?}",
                self.dilations
            )));
        }
        Ok(())
    }
}

/// Stack of 3×3 convolutions, each followed by batch norm and ELU except the
/// last, which ends in a sigmoid.
pub struct ReconNet<T> {
    pub config: ReconNetConfig,
    body: Sequential<T>,
}

impl<T: Scalar> ReconNet<T> {
    pub fn new(config: ReconNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut body = Sequential::new();
        let widths = config.widths();
        let mut cin = config.in_channels();
        let last = widths.len() - 1;
        for (i, (&d, &cout)) in config.dilations.iter().zip(&widths).enumerate() {
            let geom = ConvGeometry::new(3, 1, d).map_err(NetsError::from)?;
            body.push(Conv2d::new(&format!("conv{i}"), cin, cout, geom, &mut rng));
            if i < last {
                body.push(BatchNorm::new(&format!("bn{i}"), cout))
                    .push(Elu::new());
            } else {
                body.push(Sigmoid::new());
            }
            cin = cout;
        }
        Ok(Self { config, body })
    }

    pub fn layer_summary(&self) -> Vec<String> {
        let widths = self.config.widths();
        let mut cin = self.config.in_channels();
        let last = widths.len() - 1;
        self.config
            .dilations
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (d, &cout))| {
                let tail = if i < last { "bn elu" } else { "sigmoid" };
                let s = format!("conv3x3 d={d} {cin}->{cout} {tail}");
                cin = cout;
                s
            })
            .collect()
    }

    /// Copies parameter values from a network of the same configuration.
    pub fn load_values_from<U: Scalar>(&mut self, other: &ReconNet<U>) -> Result<()> {
        copy_params(self.body.params_mut(), other.body.params())
    }
}

pub(crate) fn copy_params<T: Scalar, U: Scalar>(
    dst: Vec<&mut Param<T>>,
    src: Vec<&Param<U>>,
) -> Result<()> {
    if dst.len() != src.len() {
        return Err(NetsError::Shape("parameter lists differ".into()));
    }
    for (d, s) in dst.into_iter().zip(src) {
        if d.shape != s.shape {
            return Err(NetsError::Shape(format!(
                "{} {:?} vs {:?}",
                d.name, d.shape, s.shape
            )));
        }
        d.value = s.value.iter().map(|v| T::of(v.f64())).collect();
    }
    Ok(())
}

impl<T: Scalar> Layer<T> for ReconNet<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> lfcs_nn::Result<Tensor4<T>> {
        self.body.forward(x, mode)
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> lfcs_nn::Result<Tensor4<T>> {
        self.body.backward(grad_out)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.body.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.body.params_mut()
    }
}

impl ReconNet<f32> {
    pub fn save(&self, dir: impl AsRef<Path>, step: u64, epoch: usize) -> Result<()> {
        let info = CheckpointInfo {
            step,
            epoch,
            layers: self.layer_summary(),
            hyperparameters: serde_json::json!({ "net": "recon", "config": self.config }),
        };
        save_checkpoint(dir, &self.params(), &info)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Manifest)> {
        let manifest = read_manifest(&dir)?;
        let config: ReconNetConfig = net_config(&manifest, "recon")?;
        let mut net = Self::new(config, 0)?;
        let manifest = load_checkpoint(&dir, &mut net.params_mut())?;
        Ok((net, manifest))
    }
}

pub(crate) fn net_config<C: serde::de::DeserializeOwned>(
    manifest: &Manifest,
    kind: &str,
) -> Result<C> {
    let hp = &manifest.info.hyperparameters;
    if hp.get("net").and_then(|v| v.as_str()) != Some(kind) {
        return Err(NetsError::Config(format!(
            "checkpoint is not a {kind} network"
        )));
    }
    serde_json::from_value(hp["config"].clone()).map_err(|e| NetsError::Config(e.to_string()))
}

/// Reconstructs a light field of any spatial size from a coded image and the
/// sensing tensor that produced it.
pub fn recon_forward(
    net: &mut ReconNet<f32>,
    image: &CodedImage,
    phi: &SensingTensor,
) -> Result<LightField> {
    if phi.shape().views != net.config.views {
        return Err(NetsError::Shape(format!(
            "network expects {} views, sensing tensor has {}",
            net.config.views,
            phi.shape().views
        )));
    }
    let x = pack_input::<f32>(image, phi)?;
    let y = net.forward(&x, Mode::Infer)?;
    tensor_lightfield(&y, 0, net.config.views)
}

/// Reconstructs overlapping `tile × tile` windows (step `stride`) in one
/// batch and averages them where they overlap. Keeps the input size equal to
/// the training patch size, which matters when dilated layers reach past the
/// patch borders. Images no larger than a tile are processed whole.
pub fn recon_forward_tiled(
    net: &mut ReconNet<f32>,
    image: &CodedImage,
    phi: &SensingTensor,
    tile: usize,
    stride: usize,
) -> Result<LightField> {
    let canvas = image.spatial_dims();
    if tile >= canvas.0 && tile >= canvas.1 {
        return recon_forward(net, image, phi);
    }
    let size = (tile.min(canvas.0), tile.min(canvas.1));
    let specs = PatchSpec::tile(canvas, size, stride)?;
    let inputs = specs
        .iter()
        .map(|spec| pack_input::<f32>(&image.extract_patch(spec)?, &phi.extract_patch(spec)?))
        .collect::<Result<Vec<_>>>()?;
    let y = net.forward(&stack(&inputs)?, Mode::Infer)?;
    let patches = specs
        .iter()
        .enumerate()
        .map(|(n, spec)| Ok((tensor_lightfield(&y, n, net.config.views)?, *spec)))
        .collect::<Result<Vec<_>>>()?;
    Ok(stitch_patches(&patches, canvas)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataNorm {
    L1,
    L2,
}

/// Per-sample `‖l̂ − l‖₁` (or `‖l̂ − l‖₂²`) plus `β·‖Φ(l̂) − i‖₂²`, averaged
/// over the batch. `input` is the packed network input that carries `i` and
/// the effective weights of `Φ`. Returns the loss and `∂L/∂l̂`.
pub fn recon_loss<T: Scalar>(
    lhat: &Tensor4<T>,
    target: &Tensor4<T>,
    input: &Tensor4<T>,
    beta: f64,
    norm: DataNorm,
) -> Result<(f64, Tensor4<T>)> {
    let [n, h, w, r] = lhat.shape();
    target.check_shape([n, h, w, r], "reconstruction target")?;
    input.check_shape([n, h, w, r + 1], "packed input")?;
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(lhat.len());
    for ((lp, tp), xp) in lhat
        .as_slice()
        .chunks_exact(r)
        .zip(target.as_slice().chunks_exact(r))
        .zip(input.as_slice().chunks_exact(r + 1))
    {
        let coded = xp[0].f64();
        let weights = &xp[1..];
        let mut measured = 0.0;
        for (&l, &wgt) in lp.iter().zip(weights) {
            measured += wgt.f64() * l.f64();
        }
        let resid = measured - coded;
        loss += beta * resid * resid;
        for ((&l, &t), &wgt) in lp.iter().zip(tp).zip(weights) {
            let diff = l.f64() - t.f64();
            let data_grad = match norm {
                DataNorm::L1 => {
                    loss += diff.abs();
                    if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                DataNorm::L2 => {
                    loss += diff * diff;
                    2.0 * diff
                }
            };
            grad.push(T::of(scale * (data_grad + 2.0 * beta * resid * wgt.f64())));
        }
    }
    Ok((loss * scale, Tensor4::from_vec([n, h, w, r], grad)?))
}
