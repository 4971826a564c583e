use crate::error::{NnError, Result};
use crate::layer::{Layer, Mode, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over `[batch, height, width]`.
///
/// Running statistics follow `running ← momentum·running + (1 − momentum)·batch`,
/// with the unbiased batch variance.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<Cache>,
}

#[derive(Clone, Debug)]
struct Cache {
    shape: [usize; 4],
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(
                format!("{name}.gamma"),
                vec![channels],
                vec![T::one(); channels],
            ),
            beta: Param::new(
                format!("{name}.beta"),
                vec![channels],
                vec![T::zero(); channels],
            ),
            running_mean: Param::buffer(
                format!("{name}.running_mean"),
                vec![channels],
                vec![T::zero(); channels],
            ),
            running_var: Param::buffer(
                format!("{name}.running_var"),
                vec![channels],
                vec![T::one(); channels],
            ),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let c = self.channels();
        if x.channels() != c {
            return Err(NnError::Shape(format!(
                "{}: input has {} channels, expected {c}",
                self.gamma.name,
                x.channels()
            )));
        }
        let m = x.len() / c;
        let (mean, var) = match mode {
            Mode::Train => {
                if m < 2 {
                    return Err(NnError::Invalid(format!(
                        "{}: training needs batch·height·width >= 2",
                        self.gamma.name
                    )));
                }
                let mut mean = vec![0.0; c];
                for px in x.as_slice().chunks_exact(c) {
                    for (a, v) in mean.iter_mut().zip(px) {
                        *a += v.f64();
                    }
                }
                mean.iter_mut().for_each(|a| *a /= m as f64);
                let mut var = vec![0.0; c];
                for px in x.as_slice().chunks_exact(c) {
                    for ((a, v), mu) in var.iter_mut().zip(px).zip(&mean) {
                        *a += (v.f64() - mu).powi(2);
                    }
                }
                var.iter_mut().for_each(|a| *a /= m as f64);
                let unbias = m as f64 / (m - 1) as f64;
                for j in 0..c {
                    let rm = self.running_mean.value[j].f64();
                    let rv = self.running_var.value[j].f64();
                    self.running_mean.value[j] =
                        T::of(self.momentum * rm + (1.0 - self.momentum) * mean[j]);
                    self.running_var.value[j] =
                        T::of(self.momentum * rv + (1.0 - self.momentum) * var[j] * unbias);
                }
                (mean, var)
            }
            Mode::Infer => (
                self.running_mean.value.iter().map(|v| v.f64()).collect(),
                self.running_var.value.iter().map(|v| v.f64()).collect(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for px in x.as_slice().chunks_exact(c) {
            for j in 0..c {
                let h = (px[j].f64() - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(T::of(
                    self.gamma.value[j].f64() * h + self.beta.value[j].f64(),
                ));
            }
        }
        self.cache = Some(Cache {
            shape: x.shape(),
            xhat,
            inv_std,
            mode,
        });
        Tensor4::from_vec(x.shape(), out)
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            NnError::Invalid(format!("{}: backward before forward", self.gamma.name))
        })?;
        grad_out.check_shape(cache.shape, &self.gamma.name)?;
        let c = self.channels();
        let m = grad_out.len() / c;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (px, xh) in grad_out
            .as_slice()
            .chunks_exact(c)
            .zip(cache.xhat.chunks_exact(c))
        {
            for j in 0..c {
                let g = px[j].f64();
                sum_g[j] += g;
                sum_gx[j] += g * xh[j];
            }
        }
        for j in 0..c {
            self.gamma.grad[j] += T::of(sum_gx[j]);
            self.beta.grad[j] += T::of(sum_g[j]);
        }
        let mut gx = Vec::with_capacity(grad_out.len());
        for (px, xh) in grad_out
            .as_slice()
            .chunks_exact(c)
            .zip(cache.xhat.chunks_exact(c))
        {
            for j in 0..c {
                let scale = self.gamma.value[j].f64() * cache.inv_std[j];
                let g = px[j].f64();
                let v = match cache.mode {
                    Mode::Infer => scale * g,
                    Mode::Train => scale * (g - (sum_g[j] + xh[j] * sum_gx[j]) / m as f64),
                };
                gx.push(T::of(v));
            }
        }
        Tensor4::from_vec(cache.shape, gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel_moments(y: &Tensor4<f32>, j: usize) -> (f64, f64) {
        let c = y.channels();
        let vals: Vec<f64> = y
            .as_slice()
            .iter()
            .skip(j)
            .step_by(c)
            .map(|&v| v as f64)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    }

    #[test]
    fn standardized_batch_passes_through() {
        // ±1 in a checkerboard: zero mean, unit (biased) variance per channel.
        let x =
            Tensor4::<f32>::from_fn(
                [2, 2, 2, 1],
                |[n, h, w, _]| if (n + h + w) % 2 == 0 { 1.0 } else { -1.0 },
            );
        let mut bn = BatchNorm::new("bn", 1);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor4::<f32>::from_fn([3, 4, 5, 3], |[.., c]| {
            rng.random_range(-2.0..2.0) * (c + 1) as f32 + c as f32 * 10.0
        });
        let mut bn = BatchNorm::new("bn", 3);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for j in 0..3 {
            let (mean, var) = channel_moments(&y, j);
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn running_stats_converge_and_drive_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        for _ in 0..200 {
            let x = Tensor4::from_fn([4, 4, 4, 1], |_| {
                3.0 + 2.0 * (rng.random::<f64>() - 0.5) * 3f64.sqrt()
            });
            bn.forward(&x, Mode::Train).unwrap();
        }
        assert!((bn.running_mean.value[0] - 3.0).abs() < 0.05);
        assert!((bn.running_var.value[0] - 1.0).abs() < 0.1);
        assert!(bn.running_var.value[0] >= 0.0);
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![3.0]).unwrap();
        let y = bn.forward(&x, Mode::Infer).unwrap();
        assert!(y.as_slice()[0].abs() < 0.1);
    }

    #[test]
    fn training_on_a_single_value_is_rejected() {
        let mut bn = BatchNorm::<f32>::new("bn", 2);
        assert!(bn
            .forward(&Tensor4::zeros([1, 1, 1, 2]), Mode::Train)
            .is_err());
        assert!(bn
            .forward(&Tensor4::zeros([1, 1, 1, 2]), Mode::Infer)
            .is_ok());
    }

    #[test]
    fn constant_channel_is_finite() {
        let mut bn = BatchNorm::<f32>::new("bn", 1);
        let y = bn
            .forward(
                &Tensor4::from_vec([1, 2, 2, 1], vec![7.0; 4]).unwrap(),
                Mode::Train,
            )
            .unwrap();
        assert!(y.as_slice().iter().all(|v| *v == 0.0));
    }
}
