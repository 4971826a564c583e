use crate::error::{NnError, Result};
use crate::layer::{Layer, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cached<'a, T>(c: &'a Option<Tensor4<T>>, what: &str) -> Result<&'a Tensor4<T>> {
    c.as_ref()
        .ok_or_else(|| NnError::Invalid(format!("{what}: backward before forward")))
}

fn zip_grad<T: Scalar>(
    grad_out: &Tensor4<T>,
    cache: &Tensor4<T>,
    what: &str,
    dydx: impl Fn(f64) -> f64,
) -> Result<Tensor4<T>> {
    grad_out.check_shape(cache.shape(), what)?;
    let data = grad_out
        .as_slice()
        .iter()
        .zip(cache.as_slice())
        .map(|(&g, &c)| T::of(g.f64() * dydx(c.f64())))
        .collect();
    Tensor4::from_vec(cache.shape(), data)
}

/// Exponential linear unit with `α = 1`.
#[derive(Clone, Debug, Default)]
pub struct Elu<T> {
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Elu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }
}

impl<T: Scalar> Layer<T> for Elu<T> {
    fn forward(&mut self, x: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>> {
        self.input = Some(x.clone());
        Ok(x.map(|v| T::of(elu(v.f64()))))
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = cached(&self.input, "elu")?;
        zip_grad(grad_out, x, "elu", |x| if x > 0.0 { 1.0 } else { x.exp() })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T> {
    output: Option<Tensor4<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

impl<T: Scalar> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>> {
        let y = x.map(|v| T::of(sigmoid(v.f64())));
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = cached(&self.output, "sigmoid")?;
        zip_grad(grad_out, y, "sigmoid", |y| y * (1.0 - y))
    }
}

/// `dmax · tanh(x)`.
#[derive(Clone, Debug)]
pub struct ScaledTanh<T> {
    pub scale: f64,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> ScaledTanh<T> {
    pub fn new(scale: f64) -> Self {
        Self { scale, input: None }
    }
}

impl<T: Scalar> Layer<T> for ScaledTanh<T> {
    fn forward(&mut self, x: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>> {
        self.input = Some(x.clone());
        let s = self.scale;
        Ok(x.map(|v| T::of(s * v.f64().tanh())))
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = cached(&self.input, "scaled tanh")?;
        let s = self.scale;
        zip_grad(grad_out, x, "scaled tanh", |x| s * (1.0 - x.tanh().powi(2)))
    }
}
