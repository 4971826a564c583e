//! Dilated / strided convolution and its transpose, via im2col + GEMM.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{NnError, Result};
use crate::init::xavier_uniform;
use crate::layer::{Layer, Mode, Param};
use crate::scalar::{gemm, Op, Scalar};
use crate::tensor::Tensor4;

/// Kernel footprint and sampling of a convolution. Padding is implied:
/// `dilation · (k − 1) / 2` zeros on each side, which keeps the resolution
/// for stride 1 and gives `ceil(len / stride)` outputs otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, dilation: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) || stride == 0 || dilation == 0 {
            return Err(NnError::Invalid(format!(
                "need odd kernel and stride, dilation >= 1 (kernel {kernel}, stride {stride}, dilation {dilation})"
            )));
        }
        Ok(Self {
            kernel,
            stride,
            dilation,
        })
    }

    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    /// `(len + 2·pad − dilation·(k − 1) − 1) / stride + 1`.
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding() - self.dilation * (self.kernel - 1) - 1) / self.stride + 1
    }

    fn taps(&self) -> usize {
        self.kernel * self.kernel
    }
}

/// Gathers the receptive field of every output pixel of one `[h, w, c]`
/// sample into a `[ho·wo, k²·c]` matrix.
pub fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, c: usize, g: ConvGeometry, cols: &mut [T]) {
    let (ho, wo) = (g.out_len(h), g.out_len(w));
    let kdim = g.taps() * c;
    debug_assert_eq!(cols.len(), ho * wo * kdim);
    let pad = g.padding() as isize;
    for oh in 0..ho {
        for ow in 0..wo {
            let row = &mut cols[(oh * wo + ow) * kdim..(oh * wo + ow + 1) * kdim];
            for ki in 0..g.kernel {
                let ih = (oh * g.stride + ki * g.dilation) as isize - pad;
                for kj in 0..g.kernel {
                    let iw = (ow * g.stride + kj * g.dilation) as isize - pad;
                    let dst = &mut row[(ki * g.kernel + kj) * c..(ki * g.kernel + kj + 1) * c];
                    if ih >= 0 && (ih as usize) < h && iw >= 0 && (iw as usize) < w {
                        let src = (ih as usize * w + iw as usize) * c;
                        dst.copy_from_slice(&x[src..src + c]);
                    } else {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds a `[ho·wo, k²·c]` matrix back
/// onto a `[h, w, c]` sample.
pub fn col2im<T: Scalar>(cols: &[T], h: usize, w: usize, c: usize, g: ConvGeometry, x: &mut [T]) {
    let (ho, wo) = (g.out_len(h), g.out_len(w));
    let kdim = g.taps() * c;
    debug_assert_eq!(cols.len(), ho * wo * kdim);
    let pad = g.padding() as isize;
    for oh in 0..ho {
        for ow in 0..wo {
            let row = &cols[(oh * wo + ow) * kdim..(oh * wo + ow + 1) * kdim];
            for ki in 0..g.kernel {
                let ih = (oh * g.stride + ki * g.dilation) as isize - pad;
                if ih < 0 || ih as usize >= h {
                    continue;
                }
                for kj in 0..g.kernel {
                    let iw = (ow * g.stride + kj * g.dilation) as isize - pad;
                    if iw < 0 || iw as usize >= w {
                        continue;
                    }
                    let dst = (ih as usize * w + iw as usize) * c;
                    let src = &row[(ki * g.kernel + kj) * c..(ki * g.kernel + kj + 1) * c];
                    for (d, &s) in x[dst..dst + c].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn sum_partials<T: Scalar>(partials: impl IntoIterator<Item = Vec<T>>, into: &mut [T]) {
    for p in partials {
        for (a, b) in into.iter_mut().zip(p) {
            *a += b;
        }
    }
}

/// Cross-correlation with kernel `[k, k, in, out]` and per-channel bias.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub geometry: ConvGeometry,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Xavier-uniform kernel with fans `k²·in` and `k²·out`; zero bias.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        rng: &mut impl Rng,
    ) -> Self {
        let taps = geometry.taps();
        let kernel = xavier_uniform(
            taps * in_channels * out_channels,
            taps * in_channels,
            taps * out_channels,
            rng,
        );
        Self::from_parts(
            name,
            in_channels,
            out_channels,
            geometry,
            kernel,
            vec![T::zero(); out_channels],
        )
    }

    pub fn from_parts(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        kernel: Vec<T>,
        bias: Vec<T>,
    ) -> Self {
        let k = geometry.kernel;
        Self {
            geometry,
            in_channels,
            out_channels,
            kernel: Param::new(
                format!("{name}.kernel"),
                vec![k, k, in_channels, out_channels],
                kernel,
            ),
            bias: Param::new(format!("{name}.bias"), vec![out_channels], bias),
            input: None,
        }
    }

    pub fn out_shape(&self, input: [usize; 4]) -> [usize; 4] {
        [
            input[0],
            self.geometry.out_len(input[1]),
            self.geometry.out_len(input[2]),
            self.out_channels,
        ]
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>> {
        let [n, h, w, c] = x.shape();
        if c != self.in_channels {
            return Err(NnError::Shape(format!(
                "{}: input has {c} channels, expected {}",
                self.kernel.name, self.in_channels
            )));
        }
        let g = self.geometry;
        let out_shape = self.out_shape(x.shape());
        let (ho, wo, co) = (out_shape[1], out_shape[2], out_shape[3]);
        let kdim = g.taps() * c;
        let mut out = Tensor4::zeros(out_shape);
        let (kernel, bias) = (&self.kernel.value, &self.bias.value);
        out.as_mut_slice()
            .par_chunks_mut(ho * wo * co)
            .enumerate()
            .for_each(|(b, y)| {
                let mut cols = vec![T::zero(); ho * wo * kdim];
                im2col(x.sample(b), h, w, c, g, &mut cols);
                gemm(Op::N, Op::N, ho * wo, kdim, co, &cols, kernel, T::zero(), y);
                for px in y.chunks_exact_mut(co) {
                    for (v, &bb) in px.iter_mut().zip(bias) {
                        *v += bb;
                    }
                }
            });
        debug_assert_eq!(out.batch(), n);
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.as_ref().ok_or_else(|| {
            NnError::Invalid(format!("{}: backward before forward", self.kernel.name))
        })?;
        let [_, h, w, c] = x.shape();
        grad_out.check_shape(self.out_shape(x.shape()), &self.kernel.name)?;
        let g = self.geometry;
        let [_, ho, wo, co] = grad_out.shape();
        let kdim = g.taps() * c;
        let kernel = &self.kernel.value;

        let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..x.batch())
            .into_par_iter()
            .map(|b| {
                let gy = grad_out.sample(b);
                let mut cols = vec![T::zero(); ho * wo * kdim];
                im2col(x.sample(b), h, w, c, g, &mut cols);
                let mut gk = vec![T::zero(); kdim * co];
                gemm(
                    Op::T,
                    Op::N,
                    kdim,
                    ho * wo,
                    co,
                    &cols,
                    gy,
                    T::zero(),
                    &mut gk,
                );
                let mut gb = vec![T::zero(); co];
                for px in gy.chunks_exact(co) {
                    for (a, &v) in gb.iter_mut().zip(px) {
                        *a += v;
                    }
                }
                gemm(
                    Op::N,
                    Op::T,
                    ho * wo,
                    co,
                    kdim,
                    gy,
                    kernel,
                    T::zero(),
                    &mut cols,
                );
                let mut gx = vec![T::zero(); h * w * c];
                col2im(&cols, h, w, c, g, &mut gx);
                (gx, gk, gb)
            })
            .collect();

        let mut gx = Vec::with_capacity(x.len());
        let mut gks = Vec::with_capacity(partials.len());
        let mut gbs = Vec::with_capacity(partials.len());
        for (a, k, b) in partials {
            gx.extend(a);
            gks.push(k);
            gbs.push(b);
        }
        sum_partials(gks, &mut self.kernel.grad);
        sum_partials(gbs, &mut self.bias.grad);
        Tensor4::from_vec(x.shape(), gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

/// Learned upsampling by `stride`: the adjoint of a strided [`Conv2d`] that
/// maps `out` channels at `stride·H × stride·W` to `in` channels at `H × W`,
/// plus a bias. The kernel is stored in that convolution's layout
/// `[k, k, out, in]`, and the output is exactly `stride ×` the input size.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub geometry: ConvGeometry,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        rng: &mut impl Rng,
    ) -> Self {
        let taps = geometry.taps();
        let kernel = xavier_uniform(
            taps * in_channels * out_channels,
            taps * in_channels,
            taps * out_channels,
            rng,
        );
        Self::from_parts(
            name,
            in_channels,
            out_channels,
            geometry,
            kernel,
            vec![T::zero(); out_channels],
        )
    }

    pub fn from_parts(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        kernel: Vec<T>,
        bias: Vec<T>,
    ) -> Self {
        let k = geometry.kernel;
        Self {
            geometry,
            in_channels,
            out_channels,
            kernel: Param::new(
                format!("{name}.kernel"),
                vec![k, k, out_channels, in_channels],
                kernel,
            ),
            bias: Param::new(format!("{name}.bias"), vec![out_channels], bias),
            input: None,
        }
    }

    pub fn out_shape(&self, input: [usize; 4]) -> [usize; 4] {
        let s = self.geometry.stride;
        [input[0], input[1] * s, input[2] * s, self.out_channels]
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>> {
        let [_, h, w, c] = x.shape();
        if c != self.in_channels {
            return Err(NnError::Shape(format!(
                "{}: input has {c} channels, expected {}",
                self.kernel.name, self.in_channels
            )));
        }
        let g = self.geometry;
        let out_shape = self.out_shape(x.shape());
        let (hu, wu, co) = (out_shape[1], out_shape[2], out_shape[3]);
        debug_assert_eq!((g.out_len(hu), g.out_len(wu)), (h, w));
        let kdim = g.taps() * co;
        let mut out = Tensor4::zeros(out_shape);
        let (kernel, bias) = (&self.kernel.value, &self.bias.value);
        out.as_mut_slice()
            .par_chunks_mut(hu * wu * co)
            .enumerate()
            .for_each(|(b, y)| {
                let mut cols = vec![T::zero(); h * w * kdim];
                gemm(
                    Op::N,
                    Op::T,
                    h * w,
                    c,
                    kdim,
                    x.sample(b),
                    kernel,
                    T::zero(),
                    &mut cols,
                );
                col2im(&cols, hu, wu, co, g, y);
                for px in y.chunks_exact_mut(co) {
                    for (v, &bb) in px.iter_mut().zip(bias) {
                        *v += bb;
                    }
                }
            });
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.as_ref().ok_or_else(|| {
            NnError::Invalid(format!("{}: backward before forward", self.kernel.name))
        })?;
        let [_, h, w, c] = x.shape();
        grad_out.check_shape(self.out_shape(x.shape()), &self.kernel.name)?;
        let g = self.geometry;
        let [_, hu, wu, co] = grad_out.shape();
        let kdim = g.taps() * co;
        let kernel = &self.kernel.value;

        let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..x.batch())
            .into_par_iter()
            .map(|b| {
                let gy = grad_out.sample(b);
                let mut cols = vec![T::zero(); h * w * kdim];
                im2col(gy, hu, wu, co, g, &mut cols);
                let mut gx = vec![T::zero(); h * w * c];
                gemm(
                    Op::N,
                    Op::N,
                    h * w,
                    kdim,
                    c,
                    &cols,
                    kernel,
                    T::zero(),
                    &mut gx,
                );
                let mut gk = vec![T::zero(); kdim * c];
                gemm(
                    Op::T,
                    Op::N,
                    kdim,
                    h * w,
                    c,
                    &cols,
                    x.sample(b),
                    T::zero(),
                    &mut gk,
                );
                let mut gb = vec![T::zero(); co];
                for px in gy.chunks_exact(co) {
                    for (a, &v) in gb.iter_mut().zip(px) {
                        *a += v;
                    }
                }
                (gx, gk, gb)
            })
            .collect();

        let mut gx = Vec::with_capacity(x.len());
        let mut gks = Vec::with_capacity(partials.len());
        let mut gbs = Vec::with_capacity(partials.len());
        for (a, k, b) in partials {
            gx.extend(a);
            gks.push(k);
            gbs.push(b);
        }
        sum_partials(gks, &mut self.kernel.grad);
        sum_partials(gbs, &mut self.bias.grad);
        Tensor4::from_vec(x.shape(), gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}
