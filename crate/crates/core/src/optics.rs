//! Random color masks, the compressive forward model and sensor noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::field::{CodedImage, LightField, SensingTensor};
use crate::shape::{RayShape, COLORS};

/// Random mask families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// Every ray weight i.i.d. `U[0, 1]`.
    Uniform,
    /// Each (pixel, viewpoint) cell passes exactly one of R, G, B.
    Rgb,
    /// Each cell passes R, G, B, or all three ("white"), each with probability 1/4.
    Rgbw,
}

impl MaskKind {
    pub const ALL: [MaskKind; 3] = [MaskKind::Uniform, MaskKind::Rgb, MaskKind::Rgbw];

    pub fn name(&self) -> &'static str {
        match self {
            MaskKind::Uniform => "uniform",
            MaskKind::Rgb => "rgb",
            MaskKind::Rgbw => "rgbw",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = LfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(MaskKind::Uniform),
            "rgb" => Ok(MaskKind::Rgb),
            "rgbw" => Ok(MaskKind::Rgbw),
            other => Err(LfError::Invalid(format!(
                "unknown mask distribution '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskDistribution {
    pub kind: MaskKind,
    pub seed: u64,
}

impl MaskDistribution {
    pub fn new(kind: MaskKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// I.i.d. zero-mean Gaussian sensor noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(LfError::Invalid(format!(
                "noise sigma must be >= 0, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn noiseless() -> Self {
        Self { sigma: 0.0 }
    }
}

/// Draws a sensing tensor, taking `Φ` to be the mask itself.
pub fn gen_sensing_tensor(shape: RayShape, dist: MaskDistribution) -> SensingTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(dist.seed);
    let mut weights = vec![0.0f32; shape.len()];
    match dist.kind {
        MaskKind::Uniform => {
            for w in &mut weights {
                *w = rng.random::<f32>();
            }
        }
        MaskKind::Rgb => {
            for cell in weights.chunks_exact_mut(COLORS) {
                cell[rng.random_range(0..COLORS)] = 1.0;
            }
        }
        MaskKind::Rgbw => {
            for cell in weights.chunks_exact_mut(COLORS) {
                match rng.random_range(0..=COLORS) {
                    COLORS => cell.fill(1.0),
                    c => cell[c] = 1.0,
                }
            }
        }
    }
    SensingTensor::from_vec(shape, weights).expect("generated weights lie in [0, 1]")
}

/// `i[x, y] = attenuation · Σ_{u,v,c} Φ̃[x, y, u, v, c] · l[x, y, u, v, c]`.
pub fn forward(phi: &SensingTensor, lf: &LightField) -> Result<CodedImage> {
    let s = phi.shape();
    if s != lf.shape() {
        return Err(LfError::Shape(format!(
            "sensing tensor {:?} vs light field {:?}",
            s.dims(),
            lf.shape().dims()
        )));
    }
    let rays = s.rays_per_pixel();
    let att = phi.attenuation();
    let data = phi
        .weights()
        .chunks_exact(rays)
        .zip(lf.as_slice().chunks_exact(rays))
        .map(|(w, l)| {
            let acc: f64 = w.iter().zip(l).map(|(&a, &b)| a as f64 * b as f64).sum();
            (acc * att) as f32
        })
        .collect();
    CodedImage::from_vec(s.height, s.width, data)
}

/// Adds sensor-referred Gaussian noise. No clipping is applied.
pub fn add_noise(image: &CodedImage, noise: NoiseModel, seed: u64) -> CodedImage {
    if noise.sigma == 0.0 {
        return image.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.sigma).expect("sigma validated at construction");
    let data = image
        .as_slice()
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
        .collect();
    CodedImage::from_vec(image.height(), image.width(), data)
        .expect("finite input plus finite noise")
}

/// Measurement-to-signal dimension ratio `m / k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// `1 / (Nv² · 3)`.
pub fn compression_ratio(views: usize) -> Result<Ratio> {
    if views == 0 {
        return Err(LfError::Invalid("Nv must be >= 1".into()));
    }
    Ok(Ratio {
        num: 1,
        den: (views * views * COLORS) as u64,
    })
}

/// Mean-backprojection baseline: every ray at a pixel gets the single radiance
/// value that would reproduce the measurement if all rays there were equal,
/// `i / (attenuation · Σ Φ̃)`, clamped to `[0, 1]`.
pub fn backproject_mean(image: &CodedImage, phi: &SensingTensor) -> Result<LightField> {
    let s = phi.shape();
    if (image.height(), image.width()) != s.spatial() {
        return Err(LfError::Shape(format!(
            "coded image {}x{} vs sensing tensor {:?}",
            image.height(),
            image.width(),
            s.dims()
        )));
    }
    let rays = s.rays_per_pixel();
    let att = phi.attenuation();
    let mut data = Vec::with_capacity(s.len());
    for (w, &i) in phi.weights().chunks_exact(rays).zip(image.as_slice()) {
        let total: f64 = w.iter().map(|&x| x as f64).sum::<f64>() * att;
        let value = if total > 0.0 {
            (i as f64 / total).clamp(0.0, 1.0) as f32
        } else {
            0.0
        };
        data.extend(std::iter::repeat_n(value, rays));
    }
    LightField::from_vec(s, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(h: usize, w: usize, nv: usize) -> RayShape {
        RayShape::new(h, w, nv).unwrap()
    }

    #[test]
    fn rgb_cells_pass_exactly_one_channel() {
        let phi = gen_sensing_tensor(shape(9, 7, 3), MaskDistribution::new(MaskKind::Rgb, 5));
        for cell in phi.weights().chunks_exact(3) {
            assert_eq!(cell.iter().sum::<f32>(), 1.0);
            assert!(cell.iter().all(|&w| w == 0.0 || w == 1.0));
        }
    }

    #[test]
    fn rgbw_cells_sum_to_one_or_three() {
        let phi = gen_sensing_tensor(shape(9, 7, 3), MaskDistribution::new(MaskKind::Rgbw, 5));
        let mut white = 0;
        for cell in phi.weights().chunks_exact(3) {
            let s = cell.iter().sum::<f32>();
            assert!(s == 1.0 || s == 3.0);
            if s == 3.0 {
                white += 1;
            }
        }
        assert!(white > 0);
    }

    #[test]
    fn rgb_zeroes_two_thirds_of_weights() {
        let phi = gen_sensing_tensor(shape(10, 10, 2), MaskDistribution::new(MaskKind::Rgb, 1));
        let zeros = phi.weights().iter().filter(|&&w| w == 0.0).count();
        assert_eq!(zeros * 3, phi.weights().len() * 2);
    }

    #[test]
    fn same_seed_same_mask() {
        let d = MaskDistribution::new(MaskKind::Uniform, 77);
        assert_eq!(
            gen_sensing_tensor(shape(4, 4, 2), d),
            gen_sensing_tensor(shape(4, 4, 2), d)
        );
    }

    #[test]
    fn all_ones_mask_preserves_constant_field() {
        let s = shape(3, 4, 2);
        let lf = LightField::constant(s, 0.37).unwrap();
        let i = forward(&SensingTensor::ones(s), &lf).unwrap();
        for &v in i.as_slice() {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_field_gives_zero_image() {
        let s = shape(3, 4, 2);
        let phi = gen_sensing_tensor(s, MaskDistribution::new(MaskKind::Uniform, 3));
        let i = forward(&phi, &LightField::zeros(s)).unwrap();
        assert!(i.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_shape_mismatch() {
        let phi = SensingTensor::ones(shape(3, 4, 2));
        assert!(forward(&phi, &LightField::zeros(shape(3, 4, 1))).is_err());
    }

    #[test]
    fn zero_sigma_is_identity_and_noise_is_seeded() {
        let img = CodedImage::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(add_noise(&img, NoiseModel::noiseless(), 1), img);
        let n = NoiseModel::new(0.02).unwrap();
        assert_eq!(add_noise(&img, n, 9), add_noise(&img, n, 9));
        assert_ne!(add_noise(&img, n, 9), add_noise(&img, n, 10));
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn compression_ratios() {
        assert_eq!(compression_ratio(5).unwrap(), Ratio { num: 1, den: 75 });
        assert_eq!(compression_ratio(1).unwrap(), Ratio { num: 1, den: 3 });
        assert_eq!(compression_ratio(3).unwrap(), Ratio { num: 1, den: 27 });
        assert!((compression_ratio(5).unwrap().as_f64() - 0.0133).abs() < 5e-5);
        assert!(compression_ratio(0).is_err());
    }

    #[test]
    fn backprojection_recovers_constant_fields() {
        let s = shape(4, 4, 2);
        let lf = LightField::constant(s, 0.6).unwrap();
        let phi = gen_sensing_tensor(s, MaskDistribution::new(MaskKind::Rgbw, 8));
        let i = forward(&phi, &lf).unwrap();
        let back = backproject_mean(&i, &phi).unwrap();
        for (&a, &b) in back.as_slice().iter().zip(lf.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mask_kind_parses() {
        assert_eq!("RGBW".parse::<MaskKind>().unwrap(), MaskKind::Rgbw);
        assert!("cmy".parse::<MaskKind>().is_err());
    }
}
