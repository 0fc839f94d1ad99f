//! 2-D convolution through im2col and a single gemm per batch sample.

use svct_core::par::{self, Execution};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.k) / self.stride + 1,
            (self.w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let (ho, wo) = g.out_hw();
    let hw = ho * wo;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let out = &mut dst[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih >= g.h as isize {
                        out.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, o) in out.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        *o = if iw < 0 || iw >= g.w as isize {
                            T::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], x: &mut [T]) {
    let (ho, wo) = g.out_hw();
    let hw = ho * wo;
    for ci in 0..g.cin {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let base = (ci * g.h + ih as usize) * g.w;
                    for ow in 0..wo {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w as isize {
                            let d = base + iw as usize;
                            x[d] = x[d] + src[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

/// `y[n] = W · im2col(x[n]) + b`, with `W` stored `[cout, cin, k, k]`.
pub(crate) fn forward<T: Scalar>(
    g: &ConvGeom,
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    exec: Execution,
) -> Tensor<T> {
    let (ho, wo) = g.out_hw();
    let hw = ho * wo;
    let rows = g.rows();
    let outs = par::map_indexed(exec, x.n(), |n| {
        let mut cols = vec![T::zero(); rows * hw];
        im2col(g, x.sample(n), &mut cols);
        let mut y = vec![T::zero(); g.cout * hw];
        for (co, chunk) in y.chunks_mut(hw).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[co]);
        }
        T::gemm(
            g.cout, rows, hw, weight, rows as isize, 1, &cols, hw as isize, 1, T::one(), &mut y,
            hw as isize, 1,
        );
        y
    });
    Tensor {
        shape: [x.n(), g.cout, ho, wo],
        data: outs.concat(),
    }
}

/// Returns `(dx, dW, db)`. Per-sample weight gradients are summed in batch
/// order so the result does not depend on the execution mode.
pub(crate) fn backward<T: Scalar>(
    g: &ConvGeom,
    x: &Tensor<T>,
    weight: &[T],
    gy: &Tensor<T>,
    need_params: bool,
    exec: Execution,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let (ho, wo) = g.out_hw();
    let hw = ho * wo;
    let rows = g.rows();
    let parts = par::map_indexed(exec, x.n(), |n| {
        let dy = gy.sample(n);
        let mut dw = Vec::new();
        let mut db = Vec::new();
        if need_params {
            let mut cols = vec![T::zero(); rows * hw];
            im2col(g, x.sample(n), &mut cols);
            dw = vec![T::zero(); g.cout * rows];
            // dW = dy · colsᵀ
            T::gemm(
                g.cout, hw, rows, dy, hw as isize, 1, &cols, 1, hw as isize, T::zero(), &mut dw,
                rows as isize, 1,
            );
            db = dy.chunks(hw).map(|c| c.iter().copied().sum()).collect();
        }
        // dcols = Wᵀ · dy
        let mut dcols = vec![T::zero(); rows * hw];
        T::gemm(
            rows, g.cout, hw, weight, 1, rows as isize, dy, hw as isize, 1, T::zero(), &mut dcols,
            hw as isize, 1,
        );
        let mut dx = vec![T::zero(); g.cin * g.h * g.w];
        col2im(g, &dcols, &mut dx);
        (dx, dw, db)
    });
    let mut dx = Vec::with_capacity(x.len());
    let mut dw = vec![T::zero(); if need_params { g.cout * rows } else { 0 }];
    let mut db = vec![T::zero(); if need_params { g.cout } else { 0 }];
    for (px, pw, pb) in parts {
        dx.extend_from_slice(&px);
        dw.iter_mut().zip(&pw).for_each(|(a, &b)| *a = *a + b);
        db.iter_mut().zip(&pb).for_each(|(a, &b)| *a = *a + b);
    }
    (
        Tensor {
            shape: x.shape,
            data: dx,
        },
        dw,
        db,
    )
}
