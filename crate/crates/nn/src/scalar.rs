use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point element type of the kit. Training runs in `f32`; the
/// finite-difference suite runs the same code in `f64`.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    /// `c = a·b + beta·c` with explicit row/column strides (see
    /// `matrixmultiply::sgemm`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn to_f32_bits(self) -> f32;
    fn from_f32_bits(v: f32) -> Self;
}

macro_rules! gemm_impl {
    ($t:ty, $f:path) => {
        fn gemm(
            m: usize,
            k: usize,
            n: usize,
            a: &[Self],
            rsa: isize,
            csa: isize,
            b: &[Self],
            rsb: isize,
            csb: isize,
            beta: Self,
            c: &mut [Self],
            rsc: isize,
            csc: isize,
        ) {
            if m == 0 || n == 0 {
                return;
            }
            let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                if rows == 0 || cols == 0 {
                    0
                } else {
                    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
                }
            };
            assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
            assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
            assert!(c.len() >= span(m, n, rsc, csc), "gemm: output too short");
            // SAFETY: the asserts above bound every strided access.
            unsafe {
                $f(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    rsa,
                    csa,
                    b.as_ptr(),
                    rsb,
                    csb,
                    beta,
                    c.as_mut_ptr(),
                    rsc,
                    csc,
                );
            }
        }
    };
}

impl Scalar for f32 {
    gemm_impl!(f32, matrixmultiply::sgemm);

    fn to_f32_bits(self) -> f32 {
        self
    }

    fn from_f32_bits(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    gemm_impl!(f64, matrixmultiply::dgemm);

    fn to_f32_bits(self) -> f32 {
        self as f32
    }

    fn from_f32_bits(v: f32) -> Self {
        v as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3x2
        let mut c = [1.0f64; 4];
        f64::gemm(2, 3, 2, &a, 3, 1, &b, 2, 1, 1.0, &mut c, 2, 1);
        assert_eq!(c, [1.0 + 1.0 - 2.0 + 1.5, 1.0 + 0.0 + 4.0 + 3.0, 1.0 + 4.0 - 5.0 + 3.0, 1.0 + 0.0 + 10.0 + 6.0]);
        // transposed lhs: a viewed as 3x2 column-major is its transpose
        let mut d = [0.0f32; 9];
        let af: Vec<f32> = a.iter().map(|&v| v as f32).collect();
        let bf: Vec<f32> = b.iter().map(|&v| v as f32).collect();
        f32::gemm(3, 2, 3, &af, 1, 3, &[bf[0], bf[2], bf[4], bf[1], bf[3], bf[5]], 3, 1, 0.0, &mut d, 3, 1);
        assert_eq!(d[0], 1.0 * 1.0 + 4.0 * 0.0);
    }
}
