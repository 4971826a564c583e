use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};

/// Number of color channels (R, G, B) carried by every ray.
pub const COLORS: usize = 3;

/// Geometry shared by light fields and sensing tensors: `[H, W, Nv, Nv, 3]`.
///
/// The flat layout is row-major over `(x, y, u, v, c)`: spatial row, spatial
/// column, angular row, angular column, color. Color is innermost, so the
/// `Nv² · 3` rays hitting one sensor pixel are contiguous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RayShape {
    pub height: usize,
    pub width: usize,
    pub views: usize,
}

impl RayShape {
    pub fn new(height: usize, width: usize, views: usize) -> Result<Self> {
        if height == 0 || width == 0 || views == 0 {
            return Err(LfError::Invalid(format!(
                "ray shape dimensions must be >= 1, got {height}x{width}, Nv={views}"
            )));
        }
        Ok(Self {
            height,
            width,
            views,
        })
    }

    /// Rays per sensor pixel, `Nv² · 3`.
    #[inline]
    pub fn rays_per_pixel(&self) -> usize {
        self.views * self.views * COLORS
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pixels() * self.rays_per_pixel()
    }

    /// Always false: every dimension is at least one.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dims(&self) -> [usize; 5] {
        [self.height, self.width, self.views, self.views, COLORS]
    }

    /// Flat index of ray `(x, y, u, v, c)`:
    /// `(((x·W + y)·Nv + u)·Nv + v)·3 + c`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, u: usize, v: usize, c: usize) -> usize {
        debug_assert!(x < self.height && y < self.width);
        debug_assert!(u < self.views && v < self.views && c < COLORS);
        (((x * self.width + y) * self.views + u) * self.views + v) * COLORS + c
    }

    /// Offset of `(u, v, c)` inside one pixel's ray block.
    #[inline]
    pub fn ray_offset(&self, u: usize, v: usize, c: usize) -> usize {
        (u * self.views + v) * COLORS + c
    }

    pub fn with_spatial(&self, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            views: self.views,
        }
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Angular index of the reference (center) view along each axis.
    pub fn center_index(&self) -> usize {
        self.views / 2
    }

    /// Viewpoint offset `k = (u − c, v − c)` from the reference view.
    pub fn view_offset(&self, u: usize, v: usize) -> (f64, f64) {
        let c = self.center_index() as f64;
        (u as f64 - c, v as f64 - c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_matches_stride_formula() {
        let s = RayShape::new(4, 3, 2).unwrap();
        // strides: c=1, v=3, u=6, y=12, x=36
        assert_eq!(s.index(2, 0, 1, 0, 1), 2 * 36 + 6 + 1);
        assert_eq!(s.index(3, 2, 1, 1, 2), s.len() - 1);
        assert_eq!(s.ray_offset(1, 0, 1), 7);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(RayShape::new(0, 3, 2).is_err());
        assert!(RayShape::new(3, 3, 0).is_err());
    }
}
