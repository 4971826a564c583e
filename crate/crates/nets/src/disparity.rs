//! Multi-scale dilated network `d = g(l)` producing one disparity map for
//! the reference view.
//!
//! Stage 1 keeps full resolution with dilated 3×3 convolutions. Stages 2 and
//! 3 each halve the resolution with a 5×5 stride-2 convolution followed by
//! three 3×3 convolutions. Their outputs are brought back to full resolution
//! with 5×5 transposed convolutions, concatenated with stage 1 and fused by a
//! 1×1 convolution into `dmax·tanh`.

use std::path::Path;

use lfcs_core::{CodedImage, DisparityMap, LightField, SensingTensor};
use lfcs_nn::{
    load_checkpoint, read_manifest, save_checkpoint, BatchNorm, CheckpointInfo, Conv2d,
    ConvGeometry, ConvTranspose2d, Elu, Layer, Manifest, Mode, Param, Scalar, ScaledTanh,
    Sequential, Tensor4,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NetsError, Result};
use crate::pack::lightfield_tensor;
use crate::recon::{copy_params, net_config, recon_forward, ReconNet};
use crate::warp::DEFAULT_DMAX;

pub const DISP_RATES: [usize; 7] = [1, 1, 2, 4, 8, 16, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispNetConfig {
    pub views: usize,
    pub dmax: f64,
    /// Dilation of each stage-1 layer.
    pub rates: Vec<usize>,
    /// Channel widths of stages 1, 2 and 3.
    pub widths: [usize; 3],
}

impl DispNetConfig {
    pub fn full() -> Self {
        Self {
            views: 5,
            dmax: DEFAULT_DMAX,
            rates: DISP_RATES.to_vec(),
            widths: [128, 256, 512],
        }
    }

    pub fn toy() -> Self {
        Self {
            views: 2,
            dmax: DEFAULT_DMAX,
            rates: DISP_RATES.to_vec(),
            widths: [16, 24, 32],
        }
    }

    pub fn rays(&self) -> usize {
        self.views * self.views * lfcs_core::COLORS
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.widths.contains(&0) {
            return Err(NetsError::Config("views and widths must be >= 1".into()));
        }
        if self.rates.is_empty() || self.rates.contains(&0) {
            return Err(NetsError::Config(format!(
                "bad stage-1 rates {:?}",
                self.rates
            )));
        }
        if !(self.dmax > 0.0 && self.dmax.is_finite()) {
            return Err(NetsError::Config(format!(
                "dmax must be positive, got {}",
                self.dmax
            )));
        }
        Ok(())
    }
}

fn conv_block<T: Scalar>(
    seq: &mut Sequential<T>,
    name: &str,
    cin: usize,
    cout: usize,
    geom: ConvGeometry,
    rng: &mut ChaCha8Rng,
) {
    seq.push(Conv2d::new(name, cin, cout, geom, rng))
        .push(BatchNorm::new(&format!("{name}.bn"), cout))
        .push(Elu::new());
}

fn geom(k: usize, s: usize, d: usize) -> ConvGeometry {
    ConvGeometry::new(k, s, d).expect("static geometry")
}

fn downsampling_stage<T: Scalar>(
    prefix: &str,
    cin: usize,
    cout: usize,
    rng: &mut ChaCha8Rng,
) -> Sequential<T> {
    let mut s = Sequential::new();
    conv_block(
        &mut s,
        &format!("{prefix}.down"),
        cin,
        cout,
        geom(5, 2, 1),
        rng,
    );
    for i in 0..3 {
        conv_block(
            &mut s,
            &format!("{prefix}.conv{i}"),
            cout,
            cout,
            geom(3, 1, 1),
            rng,
        );
    }
    s
}

fn upsampler<T: Scalar>(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Sequential<T> {
    let mut s = Sequential::new();
    s.push(ConvTranspose2d::new(
        name,
        channels,
        channels,
        geom(5, 2, 1),
        rng,
    ))
    .push(Elu::new());
    s
}

#[derive(Clone, Copy, Debug)]
struct Sizes {
    half: (usize, usize),
}

pub struct DispNet<T> {
    pub config: DispNetConfig,
    stage1: Sequential<T>,
    stage2: Sequential<T>,
    stage3: Sequential<T>,
    up2: Sequential<T>,
    up3a: Sequential<T>,
    up3b: Sequential<T>,
    fuse: Conv2d<T>,
    out: ScaledTanh<T>,
    sizes: Option<Sizes>,
}

impl<T: Scalar> DispNet<T> {
    pub fn new(config: DispNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c1, c2, c3] = config.widths;
        let mut stage1 = Sequential::new();
        let mut cin = config.rays();
        for (i, &r) in config.rates.iter().enumerate() {
            conv_block(
                &mut stage1,
                &format!("s1.conv{i}"),
                cin,
                c1,
                geom(3, 1, r),
                &mut rng,
            );
            cin = c1;
        }
        let stage2 = downsampling_stage("s2", c1, c2, &mut rng);
        let stage3 = downsampling_stage("s3", c2, c3, &mut rng);
        let up2 = upsampler("up2", c2, &mut rng);
        let up3a = upsampler("up3a", c3, &mut rng);
        let up3b = upsampler("up3b", c3, &mut rng);
        let fuse = Conv2d::new("fuse", c1 + c2 + c3, 1, geom(1, 1, 1), &mut rng);
        let out = ScaledTanh::new(config.dmax);
        Ok(Self {
            config,
            stage1,
            stage2,
            stage3,
            up2,
            up3a,
            up3b,
            fuse,
            out,
            sizes: None,
        })
    }

    pub fn layer_summary(&self) -> Vec<String> {
        let [c1, c2, c3] = self.config.widths;
        let mut s: Vec<String> = self
            .config
            .rates
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cin = if i == 0 { self.config.rays() } else { c1 };
                format!("s1 conv3x3 d={r} {cin}->{c1} bn elu")
            })
            .collect();
        for (name, cin, c) in [("s2", c1, c2), ("s3", c2, c3)] {
            s.push(format!("{name} conv5x5 s=2 {cin}->{c} bn elu"));
            s.extend((0..3).map(|_| format!("{name} conv3x3 {c}->{c} bn elu")));
        }
        s.push(format!("up2 tconv5x5 s=2 {c2}->{c2} elu"));
        s.push(format!("up3 tconv5x5 s=2 {c3}->{c3} elu (x2)"));
        s.push(format!(
            "fuse conv1x1 {}->1 tanh*{}",
            c1 + c2 + c3,
            self.config.dmax
        ));
        s
    }

    pub fn load_values_from<U: Scalar>(&mut self, other: &DispNet<U>) -> Result<()> {
        copy_params(self.params_mut(), other.params())
    }
}

impl<T: Scalar> Layer<T> for DispNet<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> lfcs_nn::Result<Tensor4<T>> {
        let (h, w) = (x.height(), x.width());
        let half = (h.div_ceil(2), w.div_ceil(2));
        let s1 = self.stage1.forward(x, mode)?;
        let s2 = self.stage2.forward(&s1, mode)?;
        let s3 = self.stage3.forward(&s2, mode)?;
        let u2 = self.up2.forward(&s2, mode)?.crop(h, w)?;
        let u3 = self.up3a.forward(&s3, mode)?.crop(half.0, half.1)?;
        let u3 = self.up3b.forward(&u3, mode)?.crop(h, w)?;
        let cat = Tensor4::concat_channels(&[&s1, &u2, &u3])?;
        let y = self.fuse.forward(&cat, mode)?;
        self.sizes = Some(Sizes { half });
        self.out.forward(&y, mode)
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> lfcs_nn::Result<Tensor4<T>> {
        let sizes = self.sizes.ok_or_else(|| {
            lfcs_nn::NnError::Invalid("disparity net: backward before forward".into())
        })?;
        let [_, c2, c3] = self.config.widths;
        let g = self.out.backward(grad_out)?;
        let g = self.fuse.backward(&g)?;
        let parts = g.split_channels(&[self.config.widths[0], c2, c3])?;
        let (g_s1, g_u2, g_u3) = (&parts[0], &parts[1], &parts[2]);

        let quarter = (sizes.half.0.div_ceil(2), sizes.half.1.div_ceil(2));
        let g = g_u3.pad_to(2 * sizes.half.0, 2 * sizes.half.1)?;
        let g = self.up3b.backward(&g)?;
        let g = g.pad_to(2 * quarter.0, 2 * quarter.1)?;
        let g_s3 = self.up3a.backward(&g)?;

        let mut g_s2 = self.stage3.backward(&g_s3)?;
        let from_up2 = self
            .up2
            .backward(&g_u2.pad_to(2 * sizes.half.0, 2 * sizes.half.1)?)?;
        add_into(&mut g_s2, &from_up2);

        let mut g_s1_total = self.stage2.backward(&g_s2)?;
        add_into(&mut g_s1_total, g_s1);
        self.stage1.backward(&g_s1_total)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.stage1.params();
        p.extend(self.stage2.params());
        p.extend(self.stage3.params());
        p.extend(self.up2.params());
        p.extend(self.up3a.params());
        p.extend(self.up3b.params());
        p.extend(self.fuse.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.stage1.params_mut();
        p.extend(self.stage2.params_mut());
        p.extend(self.stage3.params_mut());
        p.extend(self.up2.params_mut());
        p.extend(self.up3a.params_mut());
        p.extend(self.up3b.params_mut());
        p.extend(self.fuse.params_mut());
        p
    }
}

fn add_into<T: Scalar>(acc: &mut Tensor4<T>, other: &Tensor4<T>) {
    for (a, &b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}

impl DispNet<f32> {
    pub fn save(&self, dir: impl AsRef<Path>, step: u64, epoch: usize) -> Result<()> {
        let info = CheckpointInfo {
            step,
            epoch,
            layers: self.layer_summary(),
            hyperparameters: serde_json::json!({ "net": "disparity", "config": self.config }),
        };
        save_checkpoint(dir, &self.params(), &info)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Manifest)> {
        let manifest = read_manifest(&dir)?;
        let config: DispNetConfig = net_config(&manifest, "disparity")?;
        let mut net = Self::new(config, 0)?;
        let manifest = load_checkpoint(&dir, &mut net.params_mut())?;
        Ok((net, manifest))
    }
}

/// Full-resolution disparity of the reference view.
pub fn disp_forward(net: &mut DispNet<f32>, lf: &LightField) -> Result<DisparityMap> {
    if lf.shape().views != net.config.views {
        return Err(NetsError::Shape(format!(
            "network expects {} views, light field has {}",
            net.config.views,
            lf.shape().views
        )));
    }
    let y = net.forward(&lightfield_tensor(lf), Mode::Infer)?;
    let dmax = net.config.dmax as f32;
    // tanh saturates to exactly ±1 in single precision for large inputs.
    let data = y
        .into_vec()
        .into_iter()
        .map(|v| v.clamp(-dmax, dmax))
        .collect();
    let s = lf.shape();
    Ok(DisparityMap::from_vec(s.height, s.width, data, dmax)?)
}

/// `g(f(i, Φ))`.
pub fn disp_from_coded(
    image: &CodedImage,
    phi: &SensingTensor,
    recon: &mut ReconNet<f32>,
    disp: &mut DispNet<f32>,
) -> Result<DisparityMap> {
    let lf = recon_forward(recon, image, phi)?;
    disp_forward(disp, &lf)
}
