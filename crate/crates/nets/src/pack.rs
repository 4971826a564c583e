//! Conversions between light field containers and network tensors.
//!
//! Ray channels follow the canonical per-pixel order `(u·Nv + v)·3 + c`, so
//! a `[H, W, Nv, Nv, 3]` light field is already an `[H, W, Nv²·3]` image.

use lfcs_core::{CodedImage, LightField, RayShape, SensingTensor};
use lfcs_nn::{Scalar, Tensor4};

use crate::error::{NetsError, Result};

/// Input tensor `[1, h, w, 1 + Nv²·3]`: channel 0 is the coded image, the
/// rest are the effective (attenuated) weights of `phi`.
pub fn pack_input<T: Scalar>(image: &CodedImage, phi: &SensingTensor) -> Result<Tensor4<T>> {
    let shape = phi.shape();
    if (image.height(), image.width()) != shape.spatial() {
        return Err(NetsError::Shape(format!(
            "coded image {}x{} vs sensing tensor {}x{}",
            image.height(),
            image.width(),
            shape.height,
            shape.width
        )));
    }
    let r = shape.rays_per_pixel();
    let eff = phi.effective_weights();
    let mut data = Vec::with_capacity(shape.pixels() * (r + 1));
    for (p, &i) in image.as_slice().iter().enumerate() {
        data.push(T::of(i as f64));
        data.extend(eff[p * r..(p + 1) * r].iter().map(|&w| T::of(w as f64)));
    }
    Ok(Tensor4::from_vec(
        [1, shape.height, shape.width, r + 1],
        data,
    )?)
}

/// Stacks per-sample tensors `[1, h, w, c]` along the batch axis.
pub fn stack<T: Scalar>(parts: &[Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = parts.first().ok_or(NetsError::EmptySource("batch"))?;
    let [_, h, w, c] = first.shape();
    let mut data = Vec::with_capacity(parts.len() * first.len());
    for p in parts {
        p.check_shape([1, h, w, c], "stacked sample")
            .map_err(NetsError::from)?;
        data.extend_from_slice(p.as_slice());
    }
    Ok(Tensor4::from_vec([parts.len(), h, w, c], data)?)
}

/// Effective sensing weights from channels `1..` of a packed input sample.
pub fn unpack_phi_effective<T: Scalar>(input: &Tensor4<T>, n: usize) -> Vec<f32> {
    let c = input.channels();
    input
        .sample(n)
        .chunks_exact(c)
        .flat_map(|px| px[1..].iter().map(|v| v.f64() as f32))
        .collect()
}

pub fn lightfield_tensor<T: Scalar>(lf: &LightField) -> Tensor4<T> {
    let s = lf.shape();
    let data = lf.as_slice().iter().map(|&v| T::of(v as f64)).collect();
    Tensor4::from_vec([1, s.height, s.width, s.rays_per_pixel()], data)
        .expect("light field dims are >= 1")
}

/// Sample `n` of a `[batch, h, w, Nv²·3]` tensor as a light field. Values are
/// clamped into `[0, 1]`.
pub fn tensor_lightfield<T: Scalar>(t: &Tensor4<T>, n: usize, views: usize) -> Result<LightField> {
    let shape = RayShape::new(t.height(), t.width(), views)?;
    if t.channels() != shape.rays_per_pixel() {
        return Err(NetsError::Shape(format!(
            "{} channels cannot hold {views}x{views} views",
            t.channels()
        )));
    }
    let data = t
        .sample(n)
        .iter()
        .map(|v| (v.f64() as f32).clamp(0.0, 1.0))
        .collect();
    Ok(LightField::from_vec(shape, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lfcs_core::{forward, gen_sensing_tensor, MaskDistribution, MaskKind};

    #[test]
    fn channel_counts() {
        for (nv, expected) in [(5, 76), (2, 13)] {
            let shape = RayShape::new(3, 4, nv).unwrap();
            let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgbw, 1));
            let x: Tensor4<f32> = pack_input(&CodedImage::zeros(3, 4), &phi).unwrap();
            assert_eq!(x.shape(), [1, 3, 4, expected]);
        }
    }

    #[test]
    fn packing_keeps_image_and_effective_weights() {
        let shape = RayShape::new(5, 6, 2).unwrap();
        let phi = gen_sensing_tensor(shape, MaskDistribution::new(MaskKind::Rgb, 2));
        let lf = LightField::from_fn(shape, |x, y, u, v, c| {
            ((x + 2 * y + u + v + c) % 7) as f32 / 7.0
        });
        let image = forward(&phi, &lf).unwrap();
        let x: Tensor4<f32> = pack_input(&image, &phi).unwrap();
        assert_eq!(unpack_phi_effective(&x, 0), phi.effective_weights());
        let coded: Vec<f32> = x.as_slice().iter().step_by(13).copied().collect();
        assert_eq!(coded, image.as_slice());
        assert!(pack_input::<f32>(&CodedImage::zeros(5, 5), &phi).is_err());
    }

    #[test]
    fn lightfield_tensor_round_trip() {
        let shape = RayShape::new(3, 2, 2).unwrap();
        let lf = LightField::from_fn(shape, |x, y, u, v, c| {
            (x * 7 + y * 5 + u * 3 + v * 2 + c) as f32 / 40.0
        });
        let t: Tensor4<f32> = lightfield_tensor(&lf);
        let (u, v, c, nv) = (1, 0, 2, 2);
        assert_eq!(t.get(0, 2, 1, (u * nv + v) * 3 + c), lf.get(2, 1, u, v, c));
        assert_eq!(tensor_lightfield(&t, 0, 2).unwrap(), lf);
    }
}
