use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::io::RawTensor;

/// Per-pixel displacement `d(x)` in pixels per unit viewpoint offset,
/// bounded by `|d| ≤ dmax`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
    dmax: f32,
}

impl DisparityMap {
    pub fn constant(height: usize, width: usize, value: f32, dmax: f32) -> Result<Self> {
        Self::from_vec(height, width, vec![value; height * width], dmax)
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>, dmax: f32) -> Result<Self> {
        if data.len() != height * width {
            return Err(LfError::Length {
                expected: height * width,
                actual: data.len(),
            });
        }
        if !(dmax > 0.0 && dmax.is_finite()) {
            return Err(LfError::Invalid(format!(
                "dmax must be positive, got {dmax}"
            )));
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() || value.abs() > dmax {
                return Err(LfError::Value {
                    index,
                    value,
                    reason: "disparity not finite or beyond dmax",
                });
            }
        }
        Ok(Self {
            height,
            width,
            data,
            dmax,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dmax(&self) -> f32 {
        self.dmax
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[x * self.width + y]
    }

    /// Median over pixels at least `margin` away from every border.
    pub fn interior_median(&self, margin: usize) -> Option<f32> {
        let mut values: Vec<f32> = (margin..self.height.saturating_sub(margin))
            .flat_map(|x| (margin..self.width.saturating_sub(margin)).map(move |y| (x, y)))
            .map(|(x, y)| self.get(x, y))
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f32::total_cmp);
        let n = values.len();
        Some(if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        })
    }

    pub fn to_raw(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.height, self.width],
            data: self.data.clone(),
        }
    }

    pub fn from_raw(raw: RawTensor, dmax: f32) -> Result<Self> {
        match raw.dims.as_slice() {
            &[h, w] => Self::from_vec(h, w, raw.data, dmax),
            other => Err(LfError::Shape(format!(
                "disparity tensor must be rank 2, got {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_enforced() {
        assert!(DisparityMap::from_vec(1, 2, vec![0.5, -4.5], 4.0).is_err());
        assert!(DisparityMap::from_vec(1, 2, vec![0.5], 4.0).is_err());
        assert!(DisparityMap::constant(2, 2, 0.0, 0.0).is_err());
        assert!(DisparityMap::from_vec(1, 2, vec![4.0, -4.0], 4.0).is_ok());
    }

    #[test]
    fn interior_median_skips_borders() {
        let mut data = vec![9.0f32; 25];
        for x in 1..4 {
            for y in 1..4 {
                data[x * 5 + y] = (x + y) as f32;
            }
        }
        let d = DisparityMap::from_vec(5, 5, data, 10.0).unwrap();
        assert_eq!(d.interior_median(1), Some(4.0));
        assert_eq!(d.interior_median(3), None);
    }
}
