//! Spatial patch extraction and mean-blended stitching.

use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::field::{CodedImage, LightField, SensingTensor};
use crate::shape::RayShape;

/// A rectangular window into an `H × W` image, plus the stride of the grid it
/// was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    /// `(row, col)` of the top-left pixel.
    pub origin: (usize, usize),
    /// `(height, width)` in pixels.
    pub size: (usize, usize),
    pub stride: usize,
}

impl PatchSpec {
    pub fn new(origin: (usize, usize), size: (usize, usize), stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(LfError::Invalid("patch stride must be >= 1".into()));
        }
        if size.0 == 0 || size.1 == 0 {
            return Err(LfError::Invalid("patch size must be >= 1x1".into()));
        }
        Ok(Self {
            origin,
            size,
            stride,
        })
    }

    /// The whole canvas as a single patch.
    pub fn full(canvas: (usize, usize)) -> Self {
        Self {
            origin: (0, 0),
            size: canvas,
            stride: canvas.0.max(canvas.1).max(1),
        }
    }

    pub fn fits(&self, canvas: (usize, usize)) -> bool {
        self.origin.0 + self.size.0 <= canvas.0 && self.origin.1 + self.size.1 <= canvas.1
    }

    pub fn check(&self, canvas: (usize, usize)) -> Result<()> {
        if self.fits(canvas) && self.stride >= 1 {
            Ok(())
        } else {
            Err(LfError::Bounds {
                origin: self.origin,
                size: self.size,
                canvas,
            })
        }
    }

    /// Grid of `size` patches stepping by `stride` that covers the whole
    /// canvas; the last row/column of patches is snapped to the far edge.
    pub fn tile(canvas: (usize, usize), size: (usize, usize), stride: usize) -> Result<Vec<Self>> {
        if stride == 0 {
            return Err(LfError::Invalid("patch stride must be >= 1".into()));
        }
        if size.0 > canvas.0 || size.1 > canvas.1 || size.0 == 0 || size.1 == 0 {
            return Err(LfError::Bounds {
                origin: (0, 0),
                size,
                canvas,
            });
        }
        let rows = axis_origins(canvas.0, size.0, stride);
        let cols = axis_origins(canvas.1, size.1, stride);
        Ok(rows
            .iter()
            .flat_map(|&r| {
                cols.iter().map(move |&c| Self {
                    origin: (r, c),
                    size,
                    stride,
                })
            })
            .collect())
    }
}

fn axis_origins(extent: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = extent - size;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if *origins.last().unwrap() != last {
        origins.push(last);
    }
    origins
}

/// Copies rows `[r0, r0+h)` × cols `[c0, c0+w)` of a row-major `[H, W, inner]` buffer.
fn crop<T: Copy>(data: &[T], width: usize, inner: usize, spec: &PatchSpec) -> Vec<T> {
    let (r0, c0) = spec.origin;
    let (h, w) = spec.size;
    let mut out = Vec::with_capacity(h * w * inner);
    for r in r0..r0 + h {
        let start = (r * width + c0) * inner;
        out.extend_from_slice(&data[start..start + w * inner]);
    }
    out
}

/// Types with two leading spatial axes that can be cropped to a patch.
pub trait Spatial: Sized {
    fn spatial_dims(&self) -> (usize, usize);

    fn extract_patch(&self, spec: &PatchSpec) -> Result<Self>;
}

impl Spatial for LightField {
    fn spatial_dims(&self) -> (usize, usize) {
        self.shape().spatial()
    }

    fn extract_patch(&self, spec: &PatchSpec) -> Result<Self> {
        let s = self.shape();
        spec.check(s.spatial())?;
        let data = crop(self.as_slice(), s.width, s.rays_per_pixel(), spec);
        LightField::from_vec(s.with_spatial(spec.size.0, spec.size.1), data)
    }
}

impl Spatial for SensingTensor {
    fn spatial_dims(&self) -> (usize, usize) {
        self.shape().spatial()
    }

    fn extract_patch(&self, spec: &PatchSpec) -> Result<Self> {
        let s = self.shape();
        spec.check(s.spatial())?;
        let data = crop(self.weights(), s.width, s.rays_per_pixel(), spec);
        SensingTensor::from_vec(s.with_spatial(spec.size.0, spec.size.1), data)
    }
}

impl Spatial for CodedImage {
    fn spatial_dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn extract_patch(&self, spec: &PatchSpec) -> Result<Self> {
        spec.check(self.spatial_dims())?;
        let data = crop(self.as_slice(), self.width(), 1, spec);
        CodedImage::from_vec(spec.size.0, spec.size.1, data)
    }
}

/// Reassembles a light field from patches; every output pixel is the mean of
/// all patch values covering it.
pub fn stitch_patches(
    patches: &[(LightField, PatchSpec)],
    canvas: (usize, usize),
) -> Result<LightField> {
    let views = match patches.first() {
        Some((lf, _)) => lf.views(),
        None => return Err(LfError::Coverage { row: 0, col: 0 }),
    };
    let shape = RayShape::new(canvas.0, canvas.1, views)?;
    let rays = shape.rays_per_pixel();
    let mut sum = vec![0.0f64; shape.len()];
    let mut count = vec![0u32; shape.pixels()];

    for (lf, spec) in patches {
        spec.check(canvas)?;
        let ps = lf.shape();
        if ps.views != views || ps.spatial() != spec.size {
            return Err(LfError::Shape(format!(
                "patch of shape {:?} does not match spec size {:?} / Nv={views}",
                ps.dims(),
                spec.size
            )));
        }
        for r in 0..spec.size.0 {
            for c in 0..spec.size.1 {
                let pixel = (spec.origin.0 + r) * canvas.1 + spec.origin.1 + c;
                count[pixel] += 1;
                let dst = &mut sum[pixel * rays..(pixel + 1) * rays];
                for (d, &s) in dst.iter_mut().zip(lf.pixel_rays(r, c)) {
                    *d += s as f64;
                }
            }
        }
    }

    let mut data = vec![0.0f32; shape.len()];
    for (pixel, &n) in count.iter().enumerate() {
        if n == 0 {
            return Err(LfError::Coverage {
                row: pixel / canvas.1,
                col: pixel % canvas.1,
            });
        }
        let inv = 1.0 / n as f64;
        for k in pixel * rays..(pixel + 1) * rays {
            data[k] = ((sum[k] * inv) as f32).clamp(0.0, 1.0);
        }
    }
    LightField::from_vec(shape, data)
}
