//! Ram-Lak ramp filtering along the detector axis and filtered backprojection.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{CtError, Result};
use crate::geometry::{backproject_with, Geometry, Image, Sinogram};
use crate::par::{self, Execution};

/// Discrete band-limited ramp kernel:
/// `h(0) = 1/(4Δs²)`, `h(n) = 0` for even `n ≠ 0`, `h(n) = -1/(π²n²Δs²)` for odd `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RampKernel {
    pub half_width: usize,
    pub spacing: f64,
    /// `taps[half_width + n] = h(n)` for `n` in `-half_width..=half_width`.
    pub taps: Vec<f64>,
}

impl RampKernel {
    #[inline]
    pub fn tap(&self, n: isize) -> f64 {
        if n.unsigned_abs() > self.half_width {
            0.0
        } else {
            self.taps[(n + self.half_width as isize) as usize]
        }
    }
}

pub fn ramp_kernel(half_width: usize, spacing: f64) -> Result<RampKernel> {
    if half_width < 1 {
        return Err(CtError::InvalidArgument(
            "ramp kernel half width must be at least 1".into(),
        ));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(CtError::InvalidArgument(format!(
            "ramp kernel spacing must be positive, got {spacing}"
        )));
    }
    let ds2 = spacing * spacing;
    let taps = (-(half_width as isize)..=half_width as isize)
        .map(|n| {
            if n == 0 {
                1.0 / (4.0 * ds2)
            } else if n % 2 == 0 {
                0.0
            } else {
                -1.0 / (PI * PI * (n * n) as f64 * ds2)
            }
        })
        .collect();
    Ok(RampKernel {
        half_width,
        spacing,
        taps,
    })
}

/// `out[k] = Δs·Σ_n input[n]·h(k-n)` with zeros outside the input.
pub fn convolve_column(input: &[f64], kernel: &RampKernel, out: &mut [f64]) {
    let n = input.len();
    debug_assert_eq!(out.len(), n);
    let hw = kernel.half_width as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let k = k as isize;
        let lo = (k - hw).max(0);
        let hi = (k + hw).min(n as isize - 1);
        let mut acc = 0.0;
        for m in lo..=hi {
            acc += input[m as usize] * kernel.taps[(k - m + hw) as usize];
        }
        *o = acc * kernel.spacing;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FilterMethod {
    /// Direct linear convolution with the ramp taps.
    Spatial,
    /// Zero-padded FFT with the transfer function of the same taps.
    #[default]
    Frequency,
}

/// Frequency-domain ramp filter for a fixed column length. The transfer
/// function is the DFT of the zero-padded spatial kernel, and the padded
/// length is the next power of two `>= 2·len`, so the result is the same
/// linear convolution as [`convolve_column`].
pub struct FrequencyRamp {
    len: usize,
    padded: usize,
    transfer: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FrequencyRamp {
    pub fn new(kernel: &RampKernel, len: usize) -> Self {
        let padded = (2 * len).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);
        let mut transfer = vec![Complex::new(0.0, 0.0); padded];
        let reach = kernel.half_width.min(padded / 2 - 1) as isize;
        for n in -reach..=reach {
            let idx = n.rem_euclid(padded as isize) as usize;
            transfer[idx].re = kernel.tap(n) * kernel.spacing;
        }
        forward.process(&mut transfer);
        let scale = 1.0 / padded as f64;
        transfer.iter_mut().for_each(|t| *t *= scale);
        Self {
            len,
            padded,
            transfer,
            forward,
            inverse,
        }
    }

    /// Transfer function magnitude sampled on the padded DFT grid.
    pub fn response(&self) -> Vec<f64> {
        self.transfer
            .iter()
            .map(|t| t.re * self.padded as f64)
            .collect()
    }

    pub fn padded_len(&self) -> usize {
        self.padded
    }

    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.len);
        let mut buf: Vec<Complex<f64>> = input
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.padded)
            .collect();
        self.forward.process(&mut buf);
        buf.iter_mut()
            .zip(&self.transfer)
            .for_each(|(b, t)| *b *= t);
        self.inverse.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }
}

/// Ramp-filters every column with a kernel of half width `S-1`.
pub fn apply_ramp(sino: &Sinogram) -> Sinogram {
    apply_ramp_with(sino, FilterMethod::default(), Execution::default())
}

pub fn apply_ramp_with(sino: &Sinogram, method: FilterMethod, exec: Execution) -> Sinogram {
    let s = sino.num_detectors;
    let kernel = ramp_kernel(s.max(2) - 1, sino.detector_spacing)
        .expect("sinogram detector spacing is validated on construction");
    let mut out = sino.clone();
    match method {
        FilterMethod::Spatial => par::for_each_chunk(exec, &mut out.data, s, |a, col| {
            convolve_column(sino.column(a), &kernel, col)
        }),
        FilterMethod::Frequency => {
            let ramp = FrequencyRamp::new(&kernel, s);
            par::for_each_chunk(exec, &mut out.data, s, |a, col| {
                ramp.apply(sino.column(a), col)
            })
        }
    }
    out
}

const ANGLE_TOL: f64 = 1e-9;

/// Filtered backprojection: `(π / num_angles) · backproject(ramp(sino))`.
///
/// The `π/P` angular weight together with the `Δs`-scaled convolution
/// reconstructs a unit disk to about 1. Image size and detector layout come
/// from `geom`; the angles come from the sinogram, which must lie in `[0, π)`.
pub fn fbp(sino: &Sinogram, geom: &Geometry) -> Result<Image> {
    fbp_with(sino, geom, FilterMethod::default(), Execution::default())
}

pub fn fbp_with(
    sino: &Sinogram,
    geom: &Geometry,
    method: FilterMethod,
    exec: Execution,
) -> Result<Image> {
    if let Some(&bad) = sino
        .angles
        .iter()
        .find(|&&a| a < -ANGLE_TOL || a >= PI - ANGLE_TOL)
    {
        return Err(CtError::PaddedAngles(bad));
    }
    let geom = geom.with_angles(sino.angles.clone())?;
    let filtered = apply_ramp_with(sino, method, exec);
    let mut image = backproject_with(&filtered, &geom, exec)?;
    let weight = PI / sino.num_angles() as f64;
    image.pixels.iter_mut().for_each(|v| *v *= weight);
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::radon_forward;

    #[test]
    fn kernel_half_width_two() {
        let k = ramp_kernel(2, 1.0).unwrap();
        let p2 = PI * PI;
        let expected = [0.0, -1.0 / p2, 0.25, -1.0 / p2, 0.0];
        for (a, b) in k.taps.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_rejects_zero_width() {
        assert!(ramp_kernel(0, 1.0).is_err());
        assert!(ramp_kernel(3, -1.0).is_err());
    }

    #[test]
    fn impulse_reproduces_scaled_taps() {
        let mut s = Sinogram::zeros(31, vec![0.0]);
        s.detector_spacing = 0.5;
        s.data[15] = 1.0;
        let k = ramp_kernel(30, 0.5).unwrap();
        for method in [FilterMethod::Spatial, FilterMethod::Frequency] {
            let q = apply_ramp_with(&s, method, Execution::Sequential);
            for j in 0..31 {
                let expected = 0.5 * k.tap(j as isize - 15);
                assert!((q.data[j] - expected).abs() < 1e-12, "{method:?} {j}");
            }
        }
    }

    #[test]
    fn fbp_rejects_padded_angles() {
        let g = Geometry::parallel(16, 8).unwrap();
        let s = Sinogram::zeros(16, vec![-0.1, 0.5, 1.0]);
        assert!(matches!(fbp(&s, &g), Err(CtError::PaddedAngles(_))));
        let s = Sinogram::zeros(16, vec![0.0, 1.0, PI + 0.1]);
        assert!(matches!(fbp(&s, &g), Err(CtError::PaddedAngles(_))));
    }

    #[test]
    fn fbp_of_zero_is_zero() {
        let g = Geometry::parallel(32, 30).unwrap();
        let s = Sinogram::zeros(32, g.angles().to_vec());
        assert!(fbp(&s, &g).unwrap().pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_disk_reconstructs_to_one() {
        let g = Geometry::parallel(64, 180).unwrap();
        let c = 31.5;
        let inside = |r: usize, k: usize, rad: f64| {
            let (dy, dx) = (r as f64 - c, k as f64 - c);
            dx * dx + dy * dy <= rad * rad
        };
        let disk = Image::from_fn(64, |r, k| if inside(r, k, 20.0) { 1.0 } else { 0.0 });
        let rec = fbp(&radon_forward(&disk, &g).unwrap(), &g).unwrap();
        let (mut sum, mut n) = (0.0, 0);
        for r in 0..64 {
            for k in 0..64 {
                if inside(r, k, 16.0) {
                    sum += rec.get(r, k);
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        assert!((0.95..=1.05).contains(&mean), "mean {mean}");
    }
}
