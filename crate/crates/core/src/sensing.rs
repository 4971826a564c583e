//! Vectorized matrix view of the sensing model.
//!
//! The tensor operator `i = S(Φ ⊙ l)` is equivalent to a dense matrix product
//! `i = Φ_mat · vec(l)` whose `(viewpoint, color)` blocks are diagonal. The
//! matrix is only practical for small instances and serves as the reference
//! implementation the tensor operator is checked against.

use nalgebra::{DMatrix, DVector};

use crate::error::{LfError, Result};
use crate::field::{LightField, SensingTensor};
use crate::shape::{RayShape, COLORS};

/// Flattens a light field in the canonical ray order (spatial row-major,
/// then angular row-major, color innermost).
pub fn vectorize(lf: &LightField) -> Vec<f32> {
    lf.as_slice().to_vec()
}

/// Exact inverse of [`vectorize`].
pub fn devectorize(shape: RayShape, flat: &[f32]) -> Result<LightField> {
    if flat.len() != shape.len() {
        return Err(LfError::Length {
            expected: shape.len(),
            actual: flat.len(),
        });
    }
    LightField::from_vec(shape, flat.to_vec())
}

/// Dense sensing matrix `[H·W, H·W·Nv²·3]` with the attenuation folded in.
///
/// Row `p` (sensor pixel) has nonzeros only in columns `p·R .. (p+1)·R`
/// where `R = Nv²·3`, which is what makes every per-(view, color) block
/// diagonal.
pub fn matrix_form(phi: &SensingTensor) -> DMatrix<f64> {
    let s = phi.shape();
    let rays = s.rays_per_pixel();
    let att = phi.attenuation();
    let mut m = DMatrix::zeros(s.pixels(), s.len());
    for p in 0..s.pixels() {
        for r in 0..rays {
            m[(p, p * rays + r)] = att * phi.weights()[p * rays + r] as f64;
        }
    }
    m
}

/// The `[H·W, H·W]` block of `matrix` acting on viewpoint `(u, v)` and color `c`.
pub fn diagonal_block(
    matrix: &DMatrix<f64>,
    shape: RayShape,
    u: usize,
    v: usize,
    c: usize,
) -> DMatrix<f64> {
    let rays = shape.rays_per_pixel();
    let offset = shape.ray_offset(u, v, c);
    let n = shape.pixels();
    DMatrix::from_fn(n, n, |row, col| matrix[(row, col * rays + offset)])
}

/// `matrix_form(phi) · vectorize(l)` in 64-bit.
pub fn matrix_apply(matrix: &DMatrix<f64>, lf: &LightField) -> Vec<f64> {
    let l = DVector::from_iterator(lf.shape().len(), lf.as_slice().iter().map(|&v| v as f64));
    (matrix * l).iter().copied().collect()
}

/// Number of `(view, color)` blocks in the matrix form.
pub fn block_count(shape: RayShape) -> usize {
    shape.views * shape.views * COLORS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_ray_pixel_vectorizes_in_rgb_order() {
        let s = RayShape::new(1, 1, 1).unwrap();
        let lf = LightField::from_vec(s, vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(vectorize(&lf), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn devectorize_length_mismatch() {
        let s = RayShape::new(2, 2, 1).unwrap();
        assert!(matches!(
            devectorize(s, &[0.0; 5]),
            Err(LfError::Length { .. })
        ));
    }

    #[test]
    fn one_pixel_matrix_is_color_weights_over_three() {
        let s = RayShape::new(1, 1, 1).unwrap();
        let phi = SensingTensor::from_vec(s, vec![0.3, 0.6, 0.9]).unwrap();
        let m = matrix_form(&phi);
        assert_eq!(m.shape(), (1, 3));
        for (k, w) in [0.3f32, 0.6, 0.9].iter().enumerate() {
            assert!((m[(0, k)] - *w as f64 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_ones_blocks_are_scaled_identity() {
        let s = RayShape::new(2, 2, 2).unwrap();
        let m = matrix_form(&SensingTensor::ones(s));
        assert_eq!(m.shape(), (4, 48));
        let expected = DMatrix::<f64>::identity(4, 4) / 12.0;
        for u in 0..2 {
            for v in 0..2 {
                for c in 0..3 {
                    let b = diagonal_block(&m, s, u, v, c);
                    assert!((b - &expected).abs().max() < 1e-15);
                }
            }
        }
        assert_eq!(block_count(s), 12);
    }
}
