//! PNG figures: view-grid mosaics and disparity heat maps.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use lfcs_core::{DisparityMap, LightField};

use crate::error::Result;

/// Gap between views in a mosaic, in pixels.
pub const MOSAIC_GAP: usize = 2;

fn to_u8(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// All views laid out on an `Nv × Nv` grid, row `u`, column `v`, on a white background.
pub fn mosaic(lf: &LightField) -> RgbImage {
    let s = lf.shape();
    let side = |n: usize| (s.views * n + (s.views - 1) * MOSAIC_GAP) as u32;
    let mut img = ImageBuffer::from_pixel(side(s.width), side(s.height), Rgb([255, 255, 255]));
    for u in 0..s.views {
        for v in 0..s.views {
            let (top, left) = (u * (s.height + MOSAIC_GAP), v * (s.width + MOSAIC_GAP));
            for x in 0..s.height {
                for y in 0..s.width {
                    let px = [0, 1, 2].map(|c| to_u8(lf.get(x, y, u, v, c)));
                    img.put_pixel((left + y) as u32, (top + x) as u32, Rgb(px));
                }
            }
        }
    }
    img
}

pub fn write_mosaic(lf: &LightField, path: impl AsRef<Path>) -> Result<()> {
    mosaic(lf).save(path)?;
    Ok(())
}

/// Blue → cyan → green → yellow → red for `t` in `[0, 1]`.
pub fn heat(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ];
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    [0, 1, 2].map(|c| ((STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])) * 255.0).round() as u8)
}

/// False-color disparity on the fixed range `[-dmax, dmax]`; warmer is larger.
pub fn heat_map(d: &DisparityMap) -> RgbImage {
    let dmax = d.dmax() as f64;
    ImageBuffer::from_fn(d.width() as u32, d.height() as u32, |y, x| {
        let v = d.get(x as usize, y as usize) as f64;
        Rgb(heat((v + dmax) / (2.0 * dmax)))
    })
}

pub fn write_heat_map(d: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    heat_map(d).save(path)?;
    Ok(())
}
