use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::Param;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam. Moments are kept in `f64`, one slot per trainable
/// parameter in the order they are passed to [`Adam::step`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update to every trainable parameter from its `grad`.
    pub fn step<T: Scalar>(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        let trainable: Vec<&mut &mut Param<T>> =
            params.iter_mut().filter(|p| p.trainable).collect();
        if self.m.is_empty() {
            self.m = trainable.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != trainable.len()
            || self
                .m
                .iter()
                .zip(&trainable)
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(NnError::Shape(
                "parameter set changed between optimizer steps".into(),
            ));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for ((p, m), v) in trainable.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i].f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                if step != 0.0 {
                    p.value[i] = T::of(p.value[i].f64() - step);
                }
            }
        }
        Ok(())
    }
}

/// Single-tensor Adam update on raw slices at step `t` (starting at 1).
pub fn adam_step(
    value: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    config: &AdamConfig,
) {
    let c1 = 1.0 - config.beta1.powf(t as f64);
    let c2 = 1.0 - config.beta2.powf(t as f64);
    for i in 0..value.len() {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        value[i] -= config.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.eps);
    }
}

/// `lr(epoch) = initial · decay^epoch`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialDecay {
    pub initial: f64,
    pub decay: f64,
}

impl ExponentialDecay {
    pub const DEFAULT_DECAY: f64 = 0.98;

    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            decay: Self::DEFAULT_DECAY,
        }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.initial * self.decay.powi(epoch as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64], grads: &[f64]) -> Param<f64> {
        let mut p = Param::new("p", vec![values.len()], values.to_vec());
        p.grad.copy_from_slice(grads);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(&[0.3, -1.2], &[0.0, 0.0]);
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_matches_formula() {
        let (lr, g, eps) = (1e-3, 0.5, 1e-8);
        let mut p = param(&[0.0], &[g]);
        Adam::new(AdamConfig::with_lr(lr))
            .step(&mut [&mut p])
            .unwrap();
        let expected = -lr * g / ((g * g).sqrt() + eps);
        assert!(
            (p.value[0] - expected).abs() < 1e-15,
            "{} vs {expected}",
            p.value[0]
        );
        assert!((p.value[0] + 9.99998e-4).abs() < 1e-8);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let lr = 1e-3;
        let mut p = param(&[0.0], &[2.0]);
        let mut opt = Adam::new(AdamConfig::with_lr(lr));
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.value[0];
            opt.step(&mut [&mut p]).unwrap();
            last = (p.value[0] - before).abs();
        }
        assert!((last - lr).abs() < 1e-9, "{last}");
    }

    #[test]
    fn zero_lr_is_identity_and_buffers_are_skipped() {
        let mut p = param(&[1.0, 2.0], &[3.0, -4.0]);
        let mut b = Param::buffer("b", vec![1], vec![5.0]);
        b.grad[0] = 1.0;
        let mut opt = Adam::new(AdamConfig::with_lr(0.0));
        opt.step(&mut [&mut p, &mut b]).unwrap();
        assert_eq!(p.value, vec![1.0, 2.0]);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut [&mut p, &mut b]).unwrap();
        assert_eq!(b.value, vec![5.0]);
        assert_ne!(p.value, vec![1.0, 2.0]);
    }

    #[test]
    fn slice_step_agrees_with_optimizer() {
        let cfg = AdamConfig::default();
        let mut p = param(&[0.1, -0.2, 0.3], &[0.4, 0.0, -1.5]);
        let mut opt = Adam::new(cfg);
        let (mut value, grad) = (p.value.clone(), p.grad.clone());
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        for t in 1..=3 {
            opt.step(&mut [&mut p]).unwrap();
            adam_step(&mut value, &grad, &mut m, &mut v, t, &cfg);
        }
        assert_eq!(p.value, value);
    }

    #[test]
    fn decay_schedule() {
        let s = ExponentialDecay::new(5e-4);
        assert_eq!(s.lr(0), 5e-4);
        assert!((s.lr(10) - 5e-4 * 0.98f64.powi(10)).abs() < 1e-18);
    }
}
