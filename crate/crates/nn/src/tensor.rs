use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// Dense `[N, C, H, W]` tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 4], v: T) -> Self {
        Self {
            shape,
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(NnError::Shape {
                layer: "tensor".into(),
                message: format!("shape {shape:?} needs {n} values, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements per batch sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.idx(n, c, h, w)]
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a = *a + b);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).unwrap_or(U::nan()))
                .collect(),
        }
    }

    /// Channel `c` of every sample as a `[N, 1, H, W]` tensor.
    pub fn channel(&self, c: usize) -> Self {
        let mut out = Self::zeros([self.n(), 1, self.h(), self.w()]);
        let p = self.plane();
        for n in 0..self.n() {
            let src = self.idx(n, c, 0, 0);
            out.data[n * p..(n + 1) * p].copy_from_slice(&self.data[src..src + p]);
        }
        out
    }

    /// Concatenates along channels: `[a | b]`.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.n() != b.n() || a.h() != b.h() || a.w() != b.w() {
            return Err(NnError::Shape {
                layer: "concat_skip".into(),
                message: format!("cannot concatenate {:?} and {:?}", a.shape, b.shape),
            });
        }
        let mut out = Self::zeros([a.n(), a.c() + b.c(), a.h(), a.w()]);
        let (la, lb) = (a.sample_len(), b.sample_len());
        for n in 0..a.n() {
            let dst = n * (la + lb);
            out.data[dst..dst + la].copy_from_slice(a.sample(n));
            out.data[dst + la..dst + la + lb].copy_from_slice(b.sample(n));
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::concat_channels`]: first `ca` channels, rest.
    pub fn split_channels(&self, ca: usize) -> (Self, Self) {
        let (n, c, h, w) = (self.n(), self.c(), self.h(), self.w());
        let mut a = Self::zeros([n, ca, h, w]);
        let mut b = Self::zeros([n, c - ca, h, w]);
        let (la, lb) = (a.sample_len(), b.sample_len());
        for i in 0..n {
            let src = self.sample(i);
            a.data[i * la..(i + 1) * la].copy_from_slice(&src[..la]);
            b.data[i * lb..(i + 1) * lb].copy_from_slice(&src[la..]);
        }
        (a, b)
    }

    /// Spatial window `[top, top+h) × [left, left+w)` of every sample/channel.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Self {
        let mut out = Self::zeros([self.n(), self.c(), h, w]);
        for n in 0..self.n() {
            for c in 0..self.c() {
                for r in 0..h {
                    let src = self.idx(n, c, top + r, left);
                    let dst = out.idx(n, c, r, 0);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        out
    }

    /// Adds `patch` into the window at `(top, left)`; adjoint of [`Tensor::crop`].
    pub fn add_window(&mut self, patch: &Self, top: usize, left: usize) {
        for n in 0..patch.n() {
            for c in 0..patch.c() {
                for r in 0..patch.h() {
                    for k in 0..patch.w() {
                        let d = self.idx(n, c, top + r, left + k);
                        self.data[d] = self.data[d] + patch.at(n, c, r, k);
                    }
                }
            }
        }
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or_else(|| NnError::Shape {
            layer: "stack".into(),
            message: "nothing to stack".into(),
        })?;
        let mut shape = first.shape;
        let mut data = Vec::with_capacity(first.len() * items.len());
        shape[0] = 0;
        for t in items {
            if t.shape[1..] != first.shape[1..] {
                return Err(NnError::Shape {
                    layer: "stack".into(),
                    message: format!("{:?} vs {:?}", t.shape, first.shape),
                });
            }
            shape[0] += t.n();
            data.extend_from_slice(&t.data);
        }
        Ok(Self { shape, data })
    }

    /// Sample `n` as a `[1, C, H, W]` tensor.
    pub fn select(&self, n: usize) -> Self {
        Self {
            shape: [1, self.c(), self.h(), self.w()],
            data: self.sample(n).to_vec(),
        }
    }
}
