//! Central finite-difference checks for 64-bit instances of the layers.
//!
//! Relative error is `‖a − n‖ / max(‖a‖, ‖n‖)` over a whole gradient tensor,
//! which stays meaningful when individual entries are near zero. Gradients
//! that are identically zero in exact arithmetic (a bias feeding a
//! batch-normalized channel) only show rounding noise, so when both norms are
//! below [`ZERO_FLOOR`] the absolute difference is reported instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layer::{Layer, Mode};
use crate::tensor::Tensor4;

pub const STEP: f64 = 1e-5;
pub const ZERO_FLOOR: f64 = 1e-7;

pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < ZERO_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// `∂f/∂x_i ≈ (f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let plus = f(&x);
            x[i] = orig - h;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GradReport {
    /// `(tensor name, relative error)` for the input and each trainable parameter.
    pub entries: Vec<(String, f64)>,
}

impl GradReport {
    pub fn max_error(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for GradReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (name, err)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}: {err:.2e}")?;
        }
        Ok(())
    }
}

/// Checks input and parameter gradients of `layer` at `x` against central
/// differences of the scalar `⟨layer(x), r⟩` for a random projection `r`.
pub fn check_layer(
    layer: &mut dyn Layer<f64>,
    x: &Tensor4<f64>,
    mode: Mode,
    seed: u64,
) -> Result<GradReport> {
    let shape = layer.forward(x, mode)?.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor4::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    check_with_loss(layer, x, mode, |y| (y.dot(&r), r.clone()))
}

/// Like [`check_layer`] for an arbitrary scalar loss of the layer output;
/// `loss` returns the value and its gradient with respect to the output.
pub fn check_with_loss(
    layer: &mut dyn Layer<f64>,
    x: &Tensor4<f64>,
    mode: Mode,
    mut loss: impl FnMut(&Tensor4<f64>) -> (f64, Tensor4<f64>),
) -> Result<GradReport> {
    let y = layer.forward(x, mode)?;
    let (_, gy) = loss(&y);
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let gx = layer.backward(&gy)?;

    let mut entries = Vec::new();
    let shape = x.shape();
    let numeric = numeric_grad(
        |v| {
            let xv = Tensor4::from_vec(shape, v.to_vec()).expect("same shape");
            loss(&layer.forward(&xv, mode).expect("forward")).0
        },
        x.as_slice(),
        STEP,
    );
    entries.push(("input".to_string(), rel_error(gx.as_slice(), &numeric)));

    let count = layer.params().len();
    for k in 0..count {
        let (name, trainable, analytic, value) = {
            let p = &layer.params()[k];
            (p.name.clone(), p.trainable, p.grad.clone(), p.value.clone())
        };
        if !trainable {
            continue;
        }
        let numeric = numeric_grad(
            |v| {
                layer.params_mut()[k].value.copy_from_slice(v);
                loss(&layer.forward(x, mode).expect("forward")).0
            },
            &value,
            STEP,
        );
        layer.params_mut()[k].value = value;
        entries.push((name, rel_error(&analytic, &numeric)));
    }
    Ok(GradReport { entries })
}

/// Random tensor with entries in `[-1, 1)`.
pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_a_quadratic() {
        let g = numeric_grad(|x| x[0] * x[0] + 3.0 * x[0] * x[1], &[2.0, -1.0], STEP);
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_is_scale_free() {
        assert_eq!(rel_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let a = rel_error(&[1.0, 2.0], &[1.0, 2.1]);
        let b = rel_error(&[100.0, 200.0], &[100.0, 210.0]);
        assert!((a - b).abs() < 1e-15);
    }
}
