//! Warping every view onto the reference view with a single disparity map,
//! and the unsupervised disparity loss built on it.
//!
//! View `k` is sampled at `x − k·d(x)`. Samples are bilinear; positions
//! outside the image are clamped to the border and flagged invalid, and
//! invalid pixels are excluded from the photometric term.

use lfcs_core::{DisparityMap, LightField, RayShape, COLORS};
use lfcs_nn::{Scalar, Tensor4};
use rayon::prelude::*;

use crate::error::{NetsError, Result};
use crate::pack::lightfield_tensor;

pub const DISP_GAMMA: f64 = 0.1;
pub const DISP_LR: f64 = 1e-3;
pub const DEFAULT_DMAX: f64 = 4.0;

/// One view resampled onto the reference grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedView {
    /// `[H, W, 3]`.
    pub image: Vec<f32>,
    pub valid: Vec<bool>,
}

struct Sample {
    value: f64,
    d_row: f64,
    d_col: f64,
}

/// Bilinear lookup of ray channel `ch` at fractional `(row, col)`, clamped to
/// the image. Integer positions reproduce the stored value exactly.
#[inline]
fn bilinear<T: Scalar>(
    data: &[T],
    h: usize,
    w: usize,
    r: usize,
    ch: usize,
    row: f64,
    col: f64,
) -> Sample {
    let row = row.clamp(0.0, (h - 1) as f64);
    let col = col.clamp(0.0, (w - 1) as f64);
    let x0 = (row.floor() as usize).min(h.saturating_sub(2));
    let y0 = (col.floor() as usize).min(w.saturating_sub(2));
    let x1 = (x0 + 1).min(h - 1);
    let y1 = (y0 + 1).min(w - 1);
    let fx = row - x0 as f64;
    let fy = col - y0 as f64;
    let at = |x: usize, y: usize| data[(x * w + y) * r + ch].f64();
    let (a, b, c, d) = (at(x0, y0), at(x0, y1), at(x1, y0), at(x1, y1));
    let lerp = |p: f64, q: f64, t: f64| {
        if t == 0.0 {
            p
        } else if t == 1.0 {
            q
        } else {
            p + t * (q - p)
        }
    };
    let top = lerp(a, b, fy);
    let bottom = lerp(c, d, fy);
    Sample {
        value: lerp(top, bottom, fx),
        d_row: bottom - top,
        d_col: (1.0 - fx) * (b - a) + fx * (d - c),
    }
}

#[inline]
fn in_bounds(row: f64, col: f64, h: usize, w: usize) -> bool {
    row >= 0.0 && row <= (h - 1) as f64 && col >= 0.0 && col <= (w - 1) as f64
}

/// `l̃(x, c) = l(x − k·d(x), k, c)` for view `(u, v)`.
pub fn warp_to_center(lf: &LightField, d: &DisparityMap, u: usize, v: usize) -> Result<WarpedView> {
    let s = lf.shape();
    check_map(s, d)?;
    if u >= s.views || v >= s.views {
        return Err(NetsError::Shape(format!(
            "view ({u}, {v}) outside {0}x{0}",
            s.views
        )));
    }
    let (ku, kv) = s.view_offset(u, v);
    let (h, w, r) = (s.height, s.width, s.rays_per_pixel());
    let mut image = Vec::with_capacity(s.pixels() * COLORS);
    let mut valid = Vec::with_capacity(s.pixels());
    for x in 0..h {
        for y in 0..w {
            let disp = d.get(x, y) as f64;
            let (row, col) = (x as f64 - ku * disp, y as f64 - kv * disp);
            valid.push(in_bounds(row, col, h, w));
            for c in 0..COLORS {
                let ch = s.ray_offset(u, v, c);
                image.push(bilinear(lf.as_slice(), h, w, r, ch, row, col).value as f32);
            }
        }
    }
    Ok(WarpedView { image, valid })
}

fn check_map(s: RayShape, d: &DisparityMap) -> Result<()> {
    if (d.height(), d.width()) != s.spatial() {
        return Err(NetsError::Shape(format!(
            "disparity {}x{} vs light field {}x{}",
            d.height(),
            d.width(),
            s.height,
            s.width
        )));
    }
    Ok(())
}

/// Anisotropic total variation `Σ |∂x d| + |∂y d|` divided by `H·W`, with
/// its (sub)gradient.
pub fn tv_loss(d: &[f64], h: usize, w: usize) -> (f64, Vec<f64>) {
    assert_eq!(d.len(), h * w, "tv_loss: map length");
    let norm = 1.0 / (h * w) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; d.len()];
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for x in 0..h {
        for y in 0..w {
            let i = x * w + y;
            if x + 1 < h {
                let diff = d[i + w] - d[i];
                total += diff.abs();
                grad[i + w] += norm * sign(diff);
                grad[i] -= norm * sign(diff);
            }
            if y + 1 < w {
                let diff = d[i + 1] - d[i];
                total += diff.abs();
                grad[i + 1] += norm * sign(diff);
                grad[i] -= norm * sign(diff);
            }
        }
    }
    (total * norm, grad)
}

/// `(1/Nv²)·Σ_k (1/(H·W))·Σ_{valid x, c} |l̃_k(x, c) − l_center(x, c)|` for one
/// sample laid out `[H, W, Nv²·3]`, with `∂/∂d` accumulated into `grad` if given.
fn photometric<T: Scalar>(lf: &[T], d: &[T], shape: RayShape, mut grad: Option<&mut [f64]>) -> f64 {
    let (h, w, r, nv) = (
        shape.height,
        shape.width,
        shape.rays_per_pixel(),
        shape.views,
    );
    let center = shape.center_index();
    let norm = 1.0 / ((nv * nv) as f64 * (h * w) as f64);
    let mut total = 0.0;
    for u in 0..nv {
        for v in 0..nv {
            if u == center && v == center {
                continue;
            }
            let (ku, kv) = shape.view_offset(u, v);
            for x in 0..h {
                for y in 0..w {
                    let disp = d[x * w + y].f64();
                    let (row, col) = (x as f64 - ku * disp, y as f64 - kv * disp);
                    if !in_bounds(row, col, h, w) {
                        continue;
                    }
                    let mut g = 0.0;
                    for c in 0..COLORS {
                        let s = bilinear(lf, h, w, r, shape.ray_offset(u, v, c), row, col);
                        let diff = s.value
                            - lf[(x * w + y) * r + shape.ray_offset(center, center, c)].f64();
                        total += diff.abs();
                        let sg = if diff > 0.0 {
                            1.0
                        } else if diff < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        g += sg * (-ku * s.d_row - kv * s.d_col);
                    }
                    if let Some(grad) = grad.as_deref_mut() {
                        grad[x * w + y] += norm * g;
                    }
                }
            }
        }
    }
    total * norm
}

/// Photometric term plus `γ·tv(d)` on one light field.
pub fn disp_loss(lf: &LightField, d: &DisparityMap, gamma: f64) -> Result<f64> {
    let s = lf.shape();
    check_map(s, d)?;
    let dv: Vec<f64> = d.as_slice().iter().map(|&v| v as f64).collect();
    let lt: Tensor4<f64> = lightfield_tensor(lf);
    let data = photometric(lt.as_slice(), &dv, s, None);
    Ok(data + gamma * tv_loss(&dv, s.height, s.width).0)
}

/// Batched loss over `lf [B, H, W, Nv²·3]` and `d [B, H, W, 1]`, averaged over
/// the batch; returns the loss and `∂L/∂d`.
pub fn disp_loss_batch<T: Scalar>(
    lf: &Tensor4<T>,
    d: &Tensor4<T>,
    views: usize,
    gamma: f64,
) -> Result<(f64, Tensor4<T>)> {
    let [n, h, w, r] = lf.shape();
    let shape = RayShape::new(h, w, views)?;
    if r != shape.rays_per_pixel() {
        return Err(NetsError::Shape(format!(
            "{r} channels for {views}x{views} views"
        )));
    }
    d.check_shape([n, h, w, 1], "disparity")?;
    let per_sample: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let ds = d.sample(b);
            let mut grad = vec![0.0; h * w];
            let data = photometric(lf.sample(b), ds, shape, Some(&mut grad));
            let dv: Vec<f64> = ds.iter().map(|v| v.f64()).collect();
            let (tv, tv_grad) = tv_loss(&dv, h, w);
            for (g, t) in grad.iter_mut().zip(tv_grad) {
                *g += gamma * t;
            }
            (data + gamma * tv, grad)
        })
        .collect();
    let scale = 1.0 / n as f64;
    let loss = per_sample.iter().map(|p| p.0).sum::<f64>() * scale;
    let grad = per_sample
        .into_iter()
        .flat_map(|p| p.1)
        .map(|g| T::of(g * scale))
        .collect();
    Ok((loss, Tensor4::from_vec([n, h, w, 1], grad)?))
}
