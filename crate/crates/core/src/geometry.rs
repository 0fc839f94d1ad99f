//! Parallel-beam acquisition model, the ray-driven (Joseph) forward
//! projector and its exact transpose.
//!
//! Pixel `(row, col)` of an `S×S` image sits at `x = col - (S-1)/2`,
//! `y = row - (S-1)/2` with unit spacing. The ray for angle `θ` and detector
//! `j` is the line `x·cos θ + y·sin θ = s_j`, with
//! `s_j = (j - (S_det-1)/2)·Δs`.
//!
//! Joseph discretization: when `|cos θ| >= |sin θ|` the ray is sampled once per
//! image row (at its crossing `x`), otherwise once per column. Each sample is a
//! linear interpolation between the two nearest pixels along the other axis,
//! weighted by the step length `1/max(|cos θ|, |sin θ|)`. Interpolation weights
//! use the hat function `1 - |u - k|`; the backprojector evaluates the very
//! same expressions, so it is the algebraic transpose up to summation order.

use std::f64::consts::PI;

use crate::error::{mismatch, CtError, Result};
use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub num_detectors: usize,
    pub detector_spacing: f64,
    pub image_size: usize,
    angles: Vec<f64>,
}

impl Geometry {
    /// Square image of side `size`, `size` unit-spaced detectors and the
    /// uniform grid `θ_i = i·π/num_angles`.
    pub fn parallel(size: usize, num_angles: usize) -> Result<Self> {
        Self::new(size, size, 1.0, uniform_angles(num_angles))
    }

    pub fn new(
        image_size: usize,
        num_detectors: usize,
        detector_spacing: f64,
        angles: Vec<f64>,
    ) -> Result<Self> {
        if image_size == 0 || num_detectors == 0 {
            return Err(CtError::InvalidArgument(
                "image size and detector count must be positive".into(),
            ));
        }
        if !(detector_spacing.is_finite() && detector_spacing > 0.0) {
            return Err(CtError::InvalidArgument(format!(
                "detector spacing must be positive, got {detector_spacing}"
            )));
        }
        validate_angles(&angles)?;
        Ok(Self {
            num_detectors,
            detector_spacing,
            image_size,
            angles,
        })
    }

    /// Same detector/image layout with a different angle list.
    pub fn with_angles(&self, angles: Vec<f64>) -> Result<Self> {
        Self::new(
            self.image_size,
            self.num_detectors,
            self.detector_spacing,
            angles,
        )
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn detector_coord(&self, j: usize) -> f64 {
        (j as f64 - (self.num_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }
}

/// `θ_i = i·π/n` for `i = 0..n` (endpoint exclusive).
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * PI / n as f64).collect()
}

pub(crate) fn validate_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(CtError::InvalidArgument("angle list is empty".into()));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(CtError::NonFinite("angle list"));
    }
    if angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CtError::InvalidArgument(
            "angles must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Square attenuation image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub size: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            pixels: vec![0.0; size * size],
        }
    }

    pub fn from_vec(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(mismatch("Image::from_vec", size * size, pixels.len()));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(CtError::NonFinite("image pixels"));
        }
        Ok(Self { size, pixels })
    }

    /// Fills pixels in row-major order.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                pixels.push(f(r, c));
            }
        }
        Self { size, pixels }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.size + col] = v;
    }

    /// Circular region of interest: radius `S/2` about `((S-1)/2, (S-1)/2)`,
    /// boundary included.
    pub fn in_roi(size: usize, row: usize, col: usize) -> bool {
        let c = (size as f64 - 1.0) / 2.0;
        let r = size as f64 / 2.0;
        let dy = row as f64 - c;
        let dx = col as f64 - c;
        dx * dx + dy * dy <= r * r
    }

    pub fn roi_mask(size: usize) -> Vec<bool> {
        (0..size * size)
            .map(|i| Self::in_roi(size, i / size, i % size))
            .collect()
    }
}

/// Detector × angle measurements. Stored angle-major: column `a` is the
/// contiguous slice `data[a·S .. (a+1)·S]`, detector index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub num_detectors: usize,
    pub detector_spacing: f64,
    pub angles: Vec<f64>,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(num_detectors: usize, angles: Vec<f64>) -> Self {
        let n = num_detectors * angles.len();
        Self {
            num_detectors,
            detector_spacing: 1.0,
            angles,
            data: vec![0.0; n],
        }
    }

    pub fn from_data(num_detectors: usize, angles: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_detectors * angles.len() {
            return Err(mismatch(
                "Sinogram::from_data",
                format!("{}x{}", num_detectors, angles.len()),
                data.len(),
            ));
        }
        validate_angles(&angles)?;
        Ok(Self {
            num_detectors,
            detector_spacing: 1.0,
            angles,
            data,
        })
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn column(&self, a: usize) -> &[f64] {
        &self.data[a * self.num_detectors..(a + 1) * self.num_detectors]
    }

    pub fn column_mut(&mut self, a: usize) -> &mut [f64] {
        let s = self.num_detectors;
        &mut self.data[a * s..(a + 1) * s]
    }

    #[inline]
    pub fn get(&self, detector: usize, angle: usize) -> f64 {
        self.data[angle * self.num_detectors + detector]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Builds a sinogram from an explicit list of columns.
    pub fn from_columns(
        num_detectors: usize,
        detector_spacing: f64,
        columns: Vec<(f64, Vec<f64>)>,
    ) -> Result<Self> {
        let mut angles = Vec::with_capacity(columns.len());
        let mut data = Vec::with_capacity(columns.len() * num_detectors);
        for (angle, col) in columns {
            if col.len() != num_detectors {
                return Err(mismatch("sinogram column", num_detectors, col.len()));
            }
            angles.push(angle);
            data.extend_from_slice(&col);
        }
        let mut s = Self::from_data(num_detectors, angles, data)?;
        s.detector_spacing = detector_spacing;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug)]
struct RayFrame {
    cos: f64,
    sin: f64,
    /// Sample once per row (ray closer to the y axis) when true.
    row_major: bool,
    step: f64,
}

impl RayFrame {
    fn new(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        let row_major = cos.abs() >= sin.abs();
        let step = 1.0 / if row_major { cos.abs() } else { sin.abs() };
        Self {
            cos,
            sin,
            row_major,
            step,
        }
    }

    /// Continuous column (row-major mode) or row (column-major mode) index at
    /// which the ray for `s` crosses sample line `line`.
    #[inline]
    fn crossing(&self, s: f64, line: usize, center: f64) -> f64 {
        let t = line as f64 - center;
        if self.row_major {
            (s - t * self.sin) / self.cos + center
        } else {
            (s - t * self.cos) / self.sin + center
        }
    }
}

#[inline]
fn hat(u: f64, k: usize) -> f64 {
    1.0 - (u - k as f64).abs()
}

fn check_image(image: &Image, geom: &Geometry) -> Result<()> {
    if image.size != geom.image_size || image.pixels.len() != image.size * image.size {
        return Err(mismatch(
            "radon_forward image",
            format!("{0}x{0}", geom.image_size),
            format!("{0}x{0}", image.size),
        ));
    }
    Ok(())
}

fn check_sinogram(sino: &Sinogram, geom: &Geometry, context: &'static str) -> Result<()> {
    if sino.num_detectors != geom.num_detectors || sino.num_angles() != geom.num_angles() {
        return Err(mismatch(
            context,
            format!("{}x{}", geom.num_detectors, geom.num_angles()),
            format!("{}x{}", sino.num_detectors, sino.num_angles()),
        ));
    }
    if sino.data.len() != sino.num_detectors * sino.num_angles() {
        return Err(mismatch(
            context,
            sino.num_detectors * sino.num_angles(),
            sino.data.len(),
        ));
    }
    Ok(())
}

/// Forward projection (Radon transform) with the default execution mode.
pub fn radon_forward(image: &Image, geom: &Geometry) -> Result<Sinogram> {
    radon_forward_with(image, geom, Execution::default())
}

/// Forward projection; parallel over angles.
pub fn radon_forward_with(image: &Image, geom: &Geometry, exec: Execution) -> Result<Sinogram> {
    check_image(image, geom)?;
    let n = geom.image_size;
    let center = (n as f64 - 1.0) / 2.0;
    let nd = geom.num_detectors;
    let mut sino = Sinogram::zeros(nd, geom.angles.clone());
    sino.detector_spacing = geom.detector_spacing;
    let px = &image.pixels;

    par::for_each_chunk(exec, &mut sino.data, nd, |a, column| {
        let frame = RayFrame::new(geom.angles[a]);
        for (j, out) in column.iter_mut().enumerate() {
            let s = geom.detector_coord(j);
            let mut acc = 0.0;
            for line in 0..n {
                let u = frame.crossing(s, line, center);
                if u <= -1.0 || u >= n as f64 {
                    continue;
                }
                let k0 = u.floor();
                for k in [k0, k0 + 1.0] {
                    if k < 0.0 || k >= n as f64 {
                        continue;
                    }
                    let k = k as usize;
                    let w = hat(u, k);
                    if w <= 0.0 {
                        continue;
                    }
                    let idx = if frame.row_major {
                        line * n + k
                    } else {
                        k * n + line
                    };
                    acc += w * px[idx];
                }
            }
            *out = acc * frame.step;
        }
    });
    Ok(sino)
}

/// Backprojection: the transpose of [`radon_forward`] for the same geometry.
pub fn backproject(sino: &Sinogram, geom: &Geometry) -> Result<Image> {
    backproject_with(sino, geom, Execution::default())
}

/// Backprojection evaluated as a gather per image row; parallel over rows.
///
/// For each pixel and angle only the detectors whose ray passes within one
/// sample spacing of it are visited.
pub fn backproject_with(sino: &Sinogram, geom: &Geometry, exec: Execution) -> Result<Image> {
    check_sinogram(sino, geom, "backproject")?;
    let n = geom.image_size;
    let nd = geom.num_detectors;
    let center = (n as f64 - 1.0) / 2.0;
    let det_center = (nd as f64 - 1.0) / 2.0;
    let frames: Vec<RayFrame> = geom.angles.iter().map(|&t| RayFrame::new(t)).collect();
    let mut image = Image::zeros(n);

    par::for_each_chunk(exec, &mut image.pixels, n, |row, out_row| {
        let y = row as f64 - center;
        for (col, out) in out_row.iter_mut().enumerate() {
            let x = col as f64 - center;
            let mut acc = 0.0;
            for (a, frame) in frames.iter().enumerate() {
                // The forward weight of this pixel for detector s is
                // 1 - |s - s_hit| / half, with half = |cos| in row-major mode
                // and |sin| otherwise.
                let half = if frame.row_major {
                    frame.cos.abs()
                } else {
                    frame.sin.abs()
                };
                let s_hit = x * frame.cos + y * frame.sin;
                let lo = ((s_hit - half) / geom.detector_spacing + det_center).floor();
                let hi = ((s_hit + half) / geom.detector_spacing + det_center).ceil();
                if hi < 0.0 || lo > nd as f64 - 1.0 {
                    continue;
                }
                let (lo, hi) = (lo.max(0.0) as usize, hi.min(nd as f64 - 1.0) as usize);
                let column = sino.column(a);
                let mut col_acc = 0.0;
                for (j, value) in column.iter().enumerate().take(hi + 1).skip(lo) {
                    let w = 1.0 - (geom.detector_coord(j) - s_hit).abs() / half;
                    if w > 0.0 {
                        col_acc += w * value;
                    }
                }
                acc += col_acc * frame.step;
            }
            *out = acc;
        }
    });
    Ok(image)
}

/// Detector-axis mirror `j -> S-1-j`.
pub fn flip_detectors(column: &[f64]) -> Vec<f64> {
    column.iter().rev().copied().collect()
}
