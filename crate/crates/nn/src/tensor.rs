use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// Dense activation tensor laid out `[batch, height, width, channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(NnError::Shape(format!(
                "tensor dims must be >= 1, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(NnError::Shape(format!(
                "{} values for tensor {shape:?} ({len} expected)",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for h in 0..shape[1] {
                for w in 0..shape[2] {
                    for c in 0..shape[3] {
                        data.push(f([n, h, w, c]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Values of one sample, `[height, width, channels]`.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[n * len..(n + 1) * len]
    }

    #[inline]
    pub fn offset(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        ((n * self.shape[1] + h) * self.shape[2] + w) * self.shape[3] + c
    }

    #[inline]
    pub fn get(&self, n: usize, h: usize, w: usize, c: usize) -> T {
        self.data[self.offset(n, h, w, c)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Inner product `⟨self, other⟩` accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.f64() * b.f64())
            .sum()
    }

    pub fn check_shape(&self, expected: [usize; 4], what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(NnError::Shape(format!(
                "{what}: got {:?}, expected {expected:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Channel-wise concatenation of tensors that share `[batch, height, width]`.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| NnError::Invalid("nothing to concatenate".into()))?;
        let [n, h, w, _] = first.shape;
        if let Some(p) = parts.iter().find(|p| p.shape[..3] != first.shape[..3]) {
            return Err(NnError::Shape(format!(
                "concat of {:?} with {:?}",
                first.shape, p.shape
            )));
        }
        let total: usize = parts.iter().map(|p| p.shape[3]).sum();
        let mut data = Vec::with_capacity(n * h * w * total);
        for pix in 0..n * h * w {
            for p in parts {
                let c = p.shape[3];
                data.extend_from_slice(&p.data[pix * c..(pix + 1) * c]);
            }
        }
        Ok(Self {
            shape: [n, h, w, total],
            data,
        })
    }

    /// Inverse of [`Tensor4::concat_channels`]: splits into consecutive channel groups.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        if sizes.iter().sum::<usize>() != self.shape[3] {
            return Err(NnError::Shape(format!(
                "channel split {sizes:?} of {} channels",
                self.shape[3]
            )));
        }
        let [n, h, w, c] = self.shape;
        let mut out: Vec<Self> = sizes.iter().map(|&s| Self::zeros([n, h, w, s])).collect();
        for pix in 0..n * h * w {
            let mut start = pix * c;
            for (o, &s) in out.iter_mut().zip(sizes) {
                o.data[pix * s..(pix + 1) * s].copy_from_slice(&self.data[start..start + s]);
                start += s;
            }
        }
        Ok(out)
    }

    /// Top-left `[height, width]` window of every sample.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        let [n, h, w, c] = self.shape;
        if height > h || width > w {
            return Err(NnError::Shape(format!(
                "crop {height}x{width} from {h}x{w}"
            )));
        }
        let mut data = Vec::with_capacity(n * height * width * c);
        for b in 0..n {
            for y in 0..height {
                let start = self.offset(b, y, 0, 0);
                data.extend_from_slice(&self.data[start..start + width * c]);
            }
        }
        Ok(Self {
            shape: [n, height, width, c],
            data,
        })
    }

    /// Adjoint of [`Tensor4::crop`]: zero-pads at the bottom and right.
    pub fn pad_to(&self, height: usize, width: usize) -> Result<Self> {
        let [n, h, w, c] = self.shape;
        if height < h || width < w {
            return Err(NnError::Shape(format!("pad {h}x{w} to {height}x{width}")));
        }
        let mut out = Self::zeros([n, height, width, c]);
        for b in 0..n {
            for y in 0..h {
                let src = self.offset(b, y, 0, 0);
                let dst = out.offset(b, y, 0, 0);
                out.data[dst..dst + w * c].copy_from_slice(&self.data[src..src + w * c]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_and_split_are_inverse() {
        let a = Tensor4::<f32>::from_fn([2, 3, 2, 1], |[n, h, w, _]| (n * 100 + h * 10 + w) as f32);
        let b = Tensor4::<f32>::from_fn([2, 3, 2, 2], |[n, h, w, c]| {
            -((n * 100 + h * 10 + w) as f32) - c as f32
        });
        let cat = Tensor4::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), [2, 3, 2, 3]);
        assert_eq!(cat.get(1, 2, 1, 0), 121.0);
        assert_eq!(cat.get(1, 2, 1, 2), -122.0);
        let parts = cat.split_channels(&[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn crop_and_pad_are_adjoint() {
        let x = Tensor4::<f64>::from_fn([1, 5, 4, 2], |[_, h, w, c]| {
            (h * 8 + w * 2 + c) as f64 * 0.1
        });
        let y = Tensor4::<f64>::from_fn([1, 3, 3, 2], |[_, h, w, c]| ((h + w + c) as f64).sin());
        let lhs = x.crop(3, 3).unwrap().dot(&y);
        let rhs = x.dot(&y.pad_to(5, 4).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_dims_and_bad_lengths() {
        assert!(Tensor4::<f32>::from_vec([1, 0, 1, 1], vec![]).is_err());
        assert!(Tensor4::<f32>::from_vec([1, 2, 1, 1], vec![0.0]).is_err());
    }
}
