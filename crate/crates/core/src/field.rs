//! The three tensors of the coded-mask camera model: the light field being
//! imaged, the per-ray sensing weights, and the monochrome sensor image.

use crate::error::{LfError, Result};
use crate::shape::{RayShape, COLORS};

fn check_unit_interval(data: &[f32]) -> Result<()> {
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() {
            return Err(LfError::Value {
                index,
                value,
                reason: "not finite",
            });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(LfError::Value {
                index,
                value,
                reason: "outside [0, 1]",
            });
        }
    }
    Ok(())
}

/// Color light field `l(x, y, u, v, c)` with radiance in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    shape: RayShape,
    data: Vec<f32>,
}

impl LightField {
    pub fn zeros(shape: RayShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn constant(shape: RayShape, value: f32) -> Result<Self> {
        Self::from_vec(shape, vec![value; shape.len()])
    }

    /// Wraps `data` laid out in the canonical ray order.
    pub fn from_vec(shape: RayShape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(LfError::Length {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        check_unit_interval(&data)?;
        Ok(Self { shape, data })
    }

    /// Builds a field by evaluating `f(x, y, u, v, c)`; values are clamped to `[0, 1]`.
    pub fn from_fn(
        shape: RayShape,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for x in 0..shape.height {
            for y in 0..shape.width {
                for u in 0..shape.views {
                    for v in 0..shape.views {
                        for c in 0..COLORS {
                            let value = f(x, y, u, v, c);
                            data.push(if value.is_nan() {
                                0.0
                            } else {
                                value.clamp(0.0, 1.0)
                            });
                        }
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> RayShape {
        self.shape
    }

    pub fn views(&self) -> usize {
        self.shape.views
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, u: usize, v: usize, c: usize) -> f32 {
        self.data[self.shape.index(x, y, u, v, c)]
    }

    /// The `Nv² · 3` rays landing on sensor pixel `(x, y)`.
    pub fn pixel_rays(&self, x: usize, y: usize) -> &[f32] {
        let r = self.shape.rays_per_pixel();
        let start = (x * self.shape.width + y) * r;
        &self.data[start..start + r]
    }

    /// Sub-aperture image for viewpoint `(u, v)`, laid out `[H, W, 3]`.
    pub fn view(&self, u: usize, v: usize) -> Vec<f32> {
        let s = self.shape;
        let mut out = Vec::with_capacity(s.pixels() * COLORS);
        for x in 0..s.height {
            for y in 0..s.width {
                let base = s.index(x, y, u, v, 0);
                out.extend_from_slice(&self.data[base..base + COLORS]);
            }
        }
        out
    }

    /// Center sub-aperture image (for even `Nv` the lower-right of the central four).
    pub fn center_view(&self) -> Vec<f32> {
        let c = self.shape.views / 2;
        self.view(c, c)
    }
}

/// Per-ray modulation weights `Φ̃` in `[0, 1]`.
///
/// The physical light budget is split across the `Nv² · 3` rays of a pixel,
/// so the effective sensing tensor is `attenuation() · Φ̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingTensor {
    shape: RayShape,
    weights: Vec<f32>,
}

impl SensingTensor {
    pub fn from_vec(shape: RayShape, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != shape.len() {
            return Err(LfError::Length {
                expected: shape.len(),
                actual: weights.len(),
            });
        }
        check_unit_interval(&weights)?;
        Ok(Self { shape, weights })
    }

    pub fn ones(shape: RayShape) -> Self {
        Self {
            shape,
            weights: vec![1.0; shape.len()],
        }
    }

    pub fn shape(&self) -> RayShape {
        self.shape
    }

    /// Unattenuated transmittances.
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// `1 / (Nv² · 3)`.
    pub fn attenuation(&self) -> f64 {
        1.0 / self.shape.rays_per_pixel() as f64
    }

    /// `attenuation · Φ̃`, the weights actually applied to each ray.
    pub fn effective_weights(&self) -> Vec<f32> {
        let a = self.attenuation() as f32;
        self.weights.iter().map(|&w| w * a).collect()
    }

    pub fn pixel_weights(&self, x: usize, y: usize) -> &[f32] {
        let r = self.shape.rays_per_pixel();
        let start = (x * self.shape.width + y) * r;
        &self.weights[start..start + r]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, u: usize, v: usize, c: usize) -> f32 {
        self.weights[self.shape.index(x, y, u, v, c)]
    }
}

/// Monochrome sensor measurement `i(x, y)`.
///
/// Noiseless measurements of valid light fields are nonnegative; sensor noise
/// is added without clipping, so only finiteness is enforced.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl CodedImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(LfError::Invalid("coded image must be at least 1x1".into()));
        }
        if data.len() != height * width {
            return Err(LfError::Length {
                expected: height * width,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LfError::Value {
                index,
                value: data[index],
                reason: "not finite",
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[x * self.width + y]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_field_rejects_out_of_range() {
        let s = RayShape::new(1, 1, 1).unwrap();
        assert!(LightField::from_vec(s, vec![0.0, 0.5, 1.5]).is_err());
        assert!(LightField::from_vec(s, vec![0.0, f32::NAN, 0.5]).is_err());
        assert!(LightField::from_vec(s, vec![0.0, 0.5]).is_err());
        assert!(LightField::from_vec(s, vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn attenuation_is_inverse_ray_count() {
        let s = RayShape::new(2, 2, 5).unwrap();
        assert_eq!(SensingTensor::ones(s).attenuation(), 1.0 / 75.0);
    }

    #[test]
    fn view_extraction_picks_one_viewpoint() {
        let s = RayShape::new(2, 3, 2).unwrap();
        let lf = LightField::from_fn(s, |x, y, u, v, c| {
            (x * 1000 + y * 100 + u * 10 + v * 3 + c) as f32 / 4000.0
        });
        let view = lf.view(1, 0);
        assert_eq!(view.len(), 2 * 3 * 3);
        let (x, y, w) = (1, 2, 3);
        assert_eq!(view[(x * w + y) * 3 + 1], lf.get(x, y, 1, 0, 1));
    }

    #[test]
    fn coded_image_allows_negative_noise_but_not_nan() {
        assert!(CodedImage::from_vec(1, 2, vec![-0.01, 0.3]).is_ok());
        assert!(CodedImage::from_vec(1, 2, vec![f32::INFINITY, 0.3]).is_err());
    }
}
