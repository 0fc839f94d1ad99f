//! Layer set of the generators and discriminators, each with an exact
//! backward pass.

use rand::Rng;
use svct_core::par::Execution;

use crate::conv::{self, ConvGeom};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        /// Start from all-zero weights instead of He-uniform.
        zero_init: bool,
    },
    AvgPool2,
    BilinearUp2,
    Relu,
    LeakyRelu { slope: f64 },
    BatchNorm { channels: usize },
    Sigmoid,
}

impl LayerSpec {
    /// Kernel 3, stride 1, padding 1: preserves spatial dims.
    pub fn conv3(cin: usize, cout: usize) -> Self {
        Self::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: 3,
            stride: 1,
            padding: 1,
            zero_init: false,
        }
    }

    /// Kernel 4, stride 2, padding 1: halves spatial dims.
    pub fn conv4s2(cin: usize, cout: usize) -> Self {
        Self::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: 4,
            stride: 2,
            padding: 1,
            zero_init: false,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Conv2d {
                kernel, stride, in_channels, out_channels, ..
            } => format!("conv{kernel}s{stride}({in_channels}->{out_channels})"),
            Self::AvgPool2 => "avg_pool2".into(),
            Self::BilinearUp2 => "bilinear_up2".into(),
            Self::Relu => "relu".into(),
            Self::LeakyRelu { .. } => "leaky_relu".into(),
            Self::BatchNorm { channels } => format!("batch_norm({channels})"),
            Self::Sigmoid => "sigmoid".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are updated.
    Train,
    /// Running statistics in batch norm; nothing is updated.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: &'static str, shape: Vec<usize>, value: Vec<T>) -> Self {
        let n = value.len();
        Self {
            name,
            shape,
            value,
            grad: vec![T::zero(); n],
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Per-call state a layer needs for its backward pass.
#[derive(Clone, Debug)]
pub enum Aux<T> {
    None,
    BatchNorm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub params: Vec<Param<T>>,
    /// Batch-norm running mean and variance.
    pub buffers: Vec<Vec<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new<R: Rng>(spec: LayerSpec, rng: &mut R) -> Self {
        let (params, buffers) = match spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                zero_init,
                ..
            } => {
                let fan_in = in_channels * kernel * kernel;
                let bound = (6.0 / fan_in as f64).sqrt();
                let n = out_channels * fan_in;
                let w: Vec<T> = if zero_init {
                    vec![T::zero(); n]
                } else {
                    (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect()
                };
                (
                    vec![
                        Param::new("weight", vec![out_channels, in_channels, kernel, kernel], w),
                        Param::new("bias", vec![out_channels], vec![T::zero(); out_channels]),
                    ],
                    vec![],
                )
            }
            LayerSpec::BatchNorm { channels } => (
                vec![
                    Param::new("gamma", vec![channels], vec![T::one(); channels]),
                    Param::new("beta", vec![channels], vec![T::zero(); channels]),
                ],
                vec![vec![T::zero(); channels], vec![T::one(); channels]],
            ),
            _ => (vec![], vec![]),
        };
        Self {
            spec,
            params,
            buffers,
        }
    }

    fn conv_geom(&self, x: &Tensor<T>) -> Result<ConvGeom> {
        let LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            ..
        } = self.spec
        else {
            unreachable!()
        };
        if x.c() != in_channels {
            return Err(shape_err(
                self.spec.name(),
                format!("expected {in_channels} input channels, got {}", x.c()),
            ));
        }
        if x.h() + 2 * padding < kernel || x.w() + 2 * padding < kernel {
            return Err(shape_err(
                self.spec.name(),
                format!("input {}x{} smaller than the kernel", x.h(), x.w()),
            ));
        }
        Ok(ConvGeom {
            cin: in_channels,
            cout: out_channels,
            k: kernel,
            stride,
            pad: padding,
            h: x.h(),
            w: x.w(),
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, exec: Execution) -> Result<(Tensor<T>, Aux<T>)> {
        let name = || self.spec.name();
        match self.spec {
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geom(x)?;
                let y = conv::forward(&g, x, &self.params[0].value, &self.params[1].value, exec);
                Ok((y, Aux::None))
            }
            LayerSpec::AvgPool2 => {
                if x.h() % 2 != 0 || x.w() % 2 != 0 {
                    return Err(shape_err(name(), format!("odd spatial dims {}x{}", x.h(), x.w())));
                }
                Ok((avg_pool2(x), Aux::None))
            }
            LayerSpec::BilinearUp2 => Ok((bilinear_up2(x), Aux::None)),
            LayerSpec::Relu => Ok((x.map(|v| v.max(T::zero())), Aux::None)),
            LayerSpec::LeakyRelu { slope } => {
                let s = T::lit(slope);
                Ok((x.map(|v| if v > T::zero() { v } else { v * s }), Aux::None))
            }
            LayerSpec::Sigmoid => Ok((x.map(|v| T::one() / (T::one() + (-v).exp())), Aux::None)),
            LayerSpec::BatchNorm { channels } => {
                if x.c() != channels {
                    return Err(shape_err(
                        name(),
                        format!("expected {channels} channels, got {}", x.c()),
                    ));
                }
                self.batch_norm_forward(x, mode)
            }
        }
    }

    fn batch_norm_forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Aux<T>)> {
        let (n, c, p) = (x.n(), x.c(), x.plane());
        let count = n * p;
        let eps = T::lit(BN_EPS);
        let mut mean = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(shape_err(
                        self.spec.name(),
                        "training mode needs at least two values per channel",
                    ));
                }
                let m = T::lit(BN_MOMENTUM);
                for ch in 0..c {
                    let vals = || (0..n).flat_map(move |b| x.data[x.idx(b, ch, 0, 0)..][..p].iter().copied());
                    let mu = vals().sum::<T>() / T::lit(count as f64);
                    let var = vals().map(|v| (v - mu) * (v - mu)).sum::<T>() / T::lit(count as f64);
                    mean[ch] = mu;
                    inv_std[ch] = T::one() / (var + eps).sqrt();
                    let unbiased = var * T::lit(count as f64 / (count - 1) as f64);
                    self.buffers[0][ch] = (T::one() - m) * self.buffers[0][ch] + m * mu;
                    self.buffers[1][ch] = (T::one() - m) * self.buffers[1][ch] + m * unbiased;
                }
            }
            Mode::Eval => {
                for ch in 0..c {
                    mean[ch] = self.buffers[0][ch];
                    inv_std[ch] = T::one() / (self.buffers[1][ch] + eps).sqrt();
                }
            }
        }
        let (gamma, beta) = (&self.params[0].value, &self.params[1].value);
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = Tensor::zeros(x.shape);
        for b in 0..n {
            for ch in 0..c {
                let base = x.idx(b, ch, 0, 0);
                for i in base..base + p {
                    let h = (x.data[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    y.data[i] = gamma[ch] * h + beta[ch];
                }
            }
        }
        Ok((
            y,
            Aux::BatchNorm {
                xhat,
                inv_std,
                train: mode == Mode::Train,
            },
        ))
    }

    /// Gradient w.r.t. the input; parameter gradients are accumulated into
    /// `params[*].grad` only when `accumulate` is set.
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        aux: &Aux<T>,
        gy: &Tensor<T>,
        accumulate: bool,
        exec: Execution,
    ) -> Result<Tensor<T>> {
        if gy.shape != y.shape {
            return Err(shape_err(
                self.spec.name(),
                format!("upstream gradient {:?} does not match output {:?}", gy.shape, y.shape),
            ));
        }
        match self.spec {
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geom(x)?;
                let (dx, dw, db) = conv::backward(&g, x, &self.params[0].value, gy, accumulate, exec);
                if accumulate {
                    add_into(&mut self.params[0].grad, &dw);
                    add_into(&mut self.params[1].grad, &db);
                }
                Ok(dx)
            }
            LayerSpec::AvgPool2 => Ok(avg_pool2_backward(x.shape, gy)),
            LayerSpec::BilinearUp2 => Ok(bilinear_up2_backward(x.shape, gy)),
            LayerSpec::Relu => Ok(zip_map(x, gy, |v, g| if v > T::zero() { g } else { T::zero() })),
            LayerSpec::LeakyRelu { slope } => {
                let s = T::lit(slope);
                Ok(zip_map(x, gy, |v, g| if v > T::zero() { g } else { g * s }))
            }
            LayerSpec::Sigmoid => Ok(zip_map(y, gy, |s, g| g * s * (T::one() - s))),
            LayerSpec::BatchNorm { .. } => {
                let Aux::BatchNorm { xhat, inv_std, train } = aux else {
                    return Err(crate::error::NnError::NoForward(self.spec.name()));
                };
                Ok(self.batch_norm_backward(x, xhat, inv_std, *train, gy, accumulate))
            }
        }
    }

    fn batch_norm_backward(
        &mut self,
        x: &Tensor<T>,
        xhat: &[T],
        inv_std: &[T],
        train: bool,
        gy: &Tensor<T>,
        accumulate: bool,
    ) -> Tensor<T> {
        let (n, c, p) = (x.n(), x.c(), x.plane());
        let count = T::lit((n * p) as f64);
        let mut dx = Tensor::zeros(x.shape);
        for ch in 0..c {
            let idx = || (0..n).flat_map(move |b| {
                let base = (b * c + ch) * p;
                base..base + p
            });
            let sum_g: T = idx().map(|i| gy.data[i]).sum();
            let sum_gx: T = idx().map(|i| gy.data[i] * xhat[i]).sum();
            let gamma = self.params[0].value[ch];
            if accumulate {
                self.params[0].grad[ch] = self.params[0].grad[ch] + sum_gx;
                self.params[1].grad[ch] = self.params[1].grad[ch] + sum_g;
            }
            let k = gamma * inv_std[ch];
            for i in idx() {
                dx.data[i] = if train {
                    k * (gy.data[i] - sum_g / count - xhat[i] * sum_gx / count)
                } else {
                    k * gy.data[i]
                };
            }
        }
        dx
    }
}

fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    acc.iter_mut().zip(v).for_each(|(a, &b)| *a = *a + b);
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor {
        shape: a.shape,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

pub fn avg_pool2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (ho, wo) = (x.h() / 2, x.w() / 2);
    let quarter = T::lit(0.25);
    let mut y = Tensor::zeros([x.n(), x.c(), ho, wo]);
    for n in 0..x.n() {
        for c in 0..x.c() {
            for i in 0..ho {
                for j in 0..wo {
                    let s = x.at(n, c, 2 * i, 2 * j)
                        + x.at(n, c, 2 * i, 2 * j + 1)
                        + x.at(n, c, 2 * i + 1, 2 * j)
                        + x.at(n, c, 2 * i + 1, 2 * j + 1);
                    let d = y.idx(n, c, i, j);
                    y.data[d] = s * quarter;
                }
            }
        }
    }
    y
}

pub fn avg_pool2_backward<T: Scalar>(shape: [usize; 4], gy: &Tensor<T>) -> Tensor<T> {
    let quarter = T::lit(0.25);
    let mut dx = Tensor::zeros(shape);
    for n in 0..gy.n() {
        for c in 0..gy.c() {
            for i in 0..gy.h() {
                for j in 0..gy.w() {
                    let g = gy.at(n, c, i, j) * quarter;
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let d = dx.idx(n, c, 2 * i + di, 2 * j + dj);
                        dx.data[d] = g;
                    }
                }
            }
        }
    }
    dx
}

/// Source index pair and weight of output position `o` for a 2× bilinear
/// upsampling of a length-`len` axis (half-pixel centers, edge clamped).
fn up_taps(o: usize, len: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, src - i0 as f64)
}

pub fn bilinear_up2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.h(), x.w());
    let mut y = Tensor::zeros([x.n(), x.c(), 2 * h, 2 * w]);
    let rows: Vec<_> = (0..2 * h).map(|o| up_taps(o, h)).collect();
    let cols: Vec<_> = (0..2 * w).map(|o| up_taps(o, w)).collect();
    for n in 0..x.n() {
        for c in 0..x.c() {
            for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                let fr = T::lit(fr);
                for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                    let fc = T::lit(fc);
                    let top = x.at(n, c, r0, c0) * (T::one() - fc) + x.at(n, c, r0, c1) * fc;
                    let bot = x.at(n, c, r1, c0) * (T::one() - fc) + x.at(n, c, r1, c1) * fc;
                    let d = y.idx(n, c, oi, oj);
                    y.data[d] = top * (T::one() - fr) + bot * fr;
                }
            }
        }
    }
    y
}

pub fn bilinear_up2_backward<T: Scalar>(shape: [usize; 4], gy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (shape[2], shape[3]);
    let mut dx = Tensor::zeros(shape);
    let rows: Vec<_> = (0..2 * h).map(|o| up_taps(o, h)).collect();
    let cols: Vec<_> = (0..2 * w).map(|o| up_taps(o, w)).collect();
    for n in 0..shape[0] {
        for c in 0..shape[1] {
            for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                let fr = T::lit(fr);
                for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                    let fc = T::lit(fc);
                    let g = gy.at(n, c, oi, oj);
                    for (r, wr) in [(r0, T::one() - fr), (r1, fr)] {
                        for (cc, wc) in [(c0, T::one() - fc), (c1, fc)] {
                            let d = dx.idx(n, c, r, cc);
                            dx.data[d] = dx.data[d] + g * wr * wc;
                        }
                    }
                }
            }
        }
    }
    dx
}
