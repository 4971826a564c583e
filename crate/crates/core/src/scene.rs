//! Procedural layered light fields with exact ground-truth disparity.
//!
//! Each layer is a textured plane at constant disparity `d`. View `k` at
//! pixel `p` shows the frontmost layer covering `p + k·d` and samples its
//! texture there, so warping view `k` by `x − k·d(x)` lands exactly on the
//! reference view wherever the same layer is visible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disparity::DisparityMap;
use crate::error::{LfError, Result};
use crate::field::LightField;
use crate::shape::{RayShape, COLORS};

/// Support of a layer in reference-view pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Full,
    Rect {
        top: f64,
        left: f64,
        height: f64,
        width: f64,
    },
    Disc {
        row: f64,
        col: f64,
        radius: f64,
    },
}

impl Region {
    pub fn contains(&self, row: f64, col: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect {
                top,
                left,
                height,
                width,
            } => row >= top && row < top + height && col >= left && col < left + width,
            Region::Disc {
                row: r0,
                col: c0,
                radius,
            } => (row - r0).powi(2) + (col - c0).powi(2) <= radius * radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub disparity: f64,
    pub region: Region,
}

/// Larger disparity is nearer; among equal disparities the later layer wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub views: usize,
    pub dmax: f64,
    pub layers: Vec<LayerSpec>,
}

impl SceneSpec {
    /// A single full-frame plane at disparity `delta`.
    pub fn fronto_parallel(shape: RayShape, delta: f64, dmax: f64) -> Self {
        Self {
            height: shape.height,
            width: shape.width,
            views: shape.views,
            dmax,
            layers: vec![LayerSpec {
                disparity: delta,
                region: Region::Full,
            }],
        }
    }

    /// A full background plane plus `foreground` rectangles and discs, all
    /// with disparities in `[-max_disparity, max_disparity]`.
    pub fn random(
        shape: RayShape,
        foreground: usize,
        max_disparity: f64,
        dmax: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (shape.height as f64, shape.width as f64);
        let disparity = |rng: &mut ChaCha8Rng| {
            if max_disparity > 0.0 {
                rng.random_range(-max_disparity..=max_disparity)
            } else {
                0.0
            }
        };
        let mut layers = vec![LayerSpec {
            disparity: disparity(&mut rng),
            region: Region::Full,
        }];
        for i in 0..foreground {
            let region = if i % 2 == 0 {
                let height = rng.random_range(0.2..0.6) * h;
                let width = rng.random_range(0.2..0.6) * w;
                Region::Rect {
                    top: rng.random_range(0.0..h - height),
                    left: rng.random_range(0.0..w - width),
                    height,
                    width,
                }
            } else {
                Region::Disc {
                    row: rng.random_range(0.2..0.8) * h,
                    col: rng.random_range(0.2..0.8) * w,
                    radius: rng.random_range(0.1..0.3) * h.min(w),
                }
            };
            layers.push(LayerSpec {
                disparity: disparity(&mut rng),
                region,
            });
        }
        Self {
            height: shape.height,
            width: shape.width,
            views: shape.views,
            dmax,
            layers,
        }
    }

    pub fn shape(&self) -> Result<RayShape> {
        RayShape::new(self.height, self.width, self.views)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        if self.layers.is_empty() {
            return Err(LfError::Invalid("scene needs at least one layer".into()));
        }
        if let Some(l) = self
            .layers
            .iter()
            .find(|l| l.disparity.is_nan() || l.disparity.abs() > self.dmax)
        {
            return Err(LfError::Invalid(format!(
                "layer disparity {} exceeds dmax {}",
                l.disparity, self.dmax
            )));
        }
        Ok(())
    }

    /// Layer indices from front to back.
    fn depth_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.layers.len()).collect();
        order.sort_by(|&a, &b| {
            self.layers[b]
                .disparity
                .total_cmp(&self.layers[a].disparity)
                .then(b.cmp(&a))
        });
        order
    }
}

/// Smooth color texture: base color plus a few oriented sinusoids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub base: [f64; COLORS],
    /// `(frequency_row, frequency_col, phase, amplitude per color)` in cycles per pixel.
    pub waves: Vec<(f64, f64, f64, [f64; COLORS])>,
}

impl Texture {
    pub fn random(rng: &mut impl Rng) -> Self {
        let base = [(); COLORS].map(|_| rng.random_range(0.25..0.75));
        let waves = (0..3)
            .map(|_| {
                let f = rng.random_range(0.03..0.15);
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = [(); COLORS].map(|_| rng.random_range(-0.12..0.12));
                (f * theta.cos(), f * theta.sin(), phase, amp)
            })
            .collect();
        Self { base, waves }
    }

    pub fn sample(&self, row: f64, col: f64, c: usize) -> f64 {
        let mut v = self.base[c];
        for (fr, fc, phase, amp) in &self.waves {
            v += amp[c] * (std::f64::consts::TAU * (fr * row + fc * col) + phase).sin();
        }
        v.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub textures: Vec<Texture>,
    pub light_field: LightField,
    /// Disparity of the visible layer in the reference view; 0 where no layer covers.
    pub disparity: DisparityMap,
}

impl SyntheticScene {
    /// Frontmost layer seen at `(x, y)` in view `(u, v)`.
    pub fn visible_layer(&self, x: usize, y: usize, u: usize, v: usize) -> Option<usize> {
        let shape = self.light_field.shape();
        visible(
            &self.spec,
            &self.spec.depth_order(),
            shape,
            x as f64,
            y as f64,
            u,
            v,
        )
    }
}

fn visible(
    spec: &SceneSpec,
    order: &[usize],
    shape: RayShape,
    x: f64,
    y: f64,
    u: usize,
    v: usize,
) -> Option<usize> {
    let (ku, kv) = shape.view_offset(u, v);
    order.iter().copied().find(|&i| {
        let d = spec.layers[i].disparity;
        spec.layers[i].region.contains(x + ku * d, y + kv * d)
    })
}

/// Renders `spec` with textures drawn from `seed`.
pub fn gen_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let shape = spec.shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let textures: Vec<Texture> = spec
        .layers
        .iter()
        .map(|_| Texture::random(&mut rng))
        .collect();
    let order = spec.depth_order();

    let light_field = LightField::from_fn(shape, |x, y, u, v, c| {
        let (ku, kv) = shape.view_offset(u, v);
        match visible(spec, &order, shape, x as f64, y as f64, u, v) {
            Some(i) => {
                let d = spec.layers[i].disparity;
                textures[i].sample(x as f64 + ku * d, y as f64 + kv * d, c) as f32
            }
            None => 0.0,
        }
    });

    let center = shape.center_index();
    let mut disparity = Vec::with_capacity(shape.pixels());
    for x in 0..shape.height {
        for y in 0..shape.width {
            let d = visible(spec, &order, shape, x as f64, y as f64, center, center)
                .map_or(0.0, |i| spec.layers[i].disparity);
            disparity.push(d as f32);
        }
    }
    let disparity = DisparityMap::from_vec(shape.height, shape.width, disparity, spec.dmax as f32)?;

    Ok(SyntheticScene {
        spec: spec.clone(),
        textures,
        light_field,
        disparity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(h: usize, w: usize, nv: usize) -> RayShape {
        RayShape::new(h, w, nv).unwrap()
    }

    #[test]
    fn zero_disparity_views_are_identical() {
        let scene = gen_scene(&SceneSpec::fronto_parallel(shape(6, 7, 3), 0.0, 4.0), 1).unwrap();
        let lf = &scene.light_field;
        let center = lf.center_view();
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(lf.view(u, v), center);
            }
        }
    }

    #[test]
    fn view_offset_shifts_by_disparity() {
        let s = shape(10, 10, 3);
        let scene = gen_scene(&SceneSpec::fronto_parallel(s, 2.0, 4.0), 3).unwrap();
        let lf = &scene.light_field;
        // View k = (1, 0) is (u, v) = (2, 1); its pixel (x, y) shows center (x + 2, y).
        for x in 0..8 {
            for y in 0..10 {
                for c in 0..3 {
                    assert_eq!(lf.get(x, y, 2, 1, c), lf.get(x + 2, y, 1, 1, c));
                }
            }
        }
    }

    #[test]
    fn two_layers_give_two_disparities_and_occlusion_differences() {
        let spec = SceneSpec {
            height: 16,
            width: 16,
            views: 3,
            dmax: 4.0,
            layers: vec![
                LayerSpec {
                    disparity: 0.0,
                    region: Region::Full,
                },
                LayerSpec {
                    disparity: 2.0,
                    region: Region::Rect {
                        top: 4.0,
                        left: 4.0,
                        height: 8.0,
                        width: 8.0,
                    },
                },
            ],
        };
        let scene = gen_scene(&spec, 5).unwrap();
        let mut values: Vec<f32> = scene.disparity.as_slice().to_vec();
        values.sort_by(f32::total_cmp);
        values.dedup();
        assert_eq!(values, vec![0.0, 2.0]);
        let differs = (0..16).any(|x| {
            (0..16).any(|y| scene.visible_layer(x, y, 2, 1) != scene.visible_layer(x, y, 1, 1))
        });
        assert!(differs);
    }

    #[test]
    fn random_specs_validate() {
        for seed in 0..20 {
            let spec = SceneSpec::random(shape(20, 20, 2), 2, 1.5, 4.0, seed);
            assert_eq!(spec.layers.len(), 3);
            gen_scene(&spec, seed).unwrap();
        }
        let mut bad = SceneSpec::fronto_parallel(shape(4, 4, 2), 5.0, 4.0);
        assert!(gen_scene(&bad, 0).is_err());
        bad.layers.clear();
        assert!(bad.validate().is_err());
    }
}
