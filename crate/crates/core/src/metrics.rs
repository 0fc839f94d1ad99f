//! PSNR and SSIM restricted to the circular reconstruction ROI.
//!
//! Both metrics take an explicit data range (1.0 for normalized images)
//! instead of inferring it per image, so scores stay comparable across
//! methods. Rectangular grids such as sinograms are compared with
//! [`Roi::Full`].

use crate::error::{mismatch, Result};
use crate::geometry::Image;

pub const PSNR_CAP_DB: f64 = 99.0;
pub const DEFAULT_DATA_RANGE: f64 = 1.0;

/// Borrowed 2-D grid, row-major.
#[derive(Clone, Copy, Debug)]
pub struct GridRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl<'a> From<&'a Image> for GridRef<'a> {
    fn from(img: &'a Image) -> Self {
        Self {
            rows: img.size,
            cols: img.size,
            data: &img.pixels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Roi {
    /// Disk of radius `S/2` centered on the image, boundary included.
    Disk,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub roi_radius: f64,
    pub data_range: f64,
}

fn mask(rows: usize, cols: usize, roi: Roi) -> Vec<bool> {
    match roi {
        Roi::Full => vec![true; rows * cols],
        Roi::Disk => {
            let cy = (rows as f64 - 1.0) / 2.0;
            let cx = (cols as f64 - 1.0) / 2.0;
            let r = rows.min(cols) as f64 / 2.0;
            (0..rows * cols)
                .map(|i| {
                    let dy = (i / cols) as f64 - cy;
                    let dx = (i % cols) as f64 - cx;
                    dx * dx + dy * dy <= r * r
                })
                .collect()
        }
    }
}

fn check(pred: &GridRef, target: &GridRef) -> Result<()> {
    if pred.rows != target.rows || pred.cols != target.cols {
        return Err(mismatch(
            "metric inputs",
            format!("{}x{}", target.rows, target.cols),
            format!("{}x{}", pred.rows, pred.cols),
        ));
    }
    Ok(())
}

pub fn psnr(pred: GridRef, target: GridRef, roi: Roi, data_range: f64) -> Result<f64> {
    check(&pred, &target)?;
    let m = mask(pred.rows, pred.cols, roi);
    let (mut se, mut n) = (0.0, 0usize);
    for ((p, t), inside) in pred.data.iter().zip(target.data).zip(&m) {
        if *inside {
            se += (p - t) * (p - t);
            n += 1;
        }
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

pub fn psnr_roi(pred: &Image, target: &Image) -> Result<f64> {
    psnr(pred.into(), target.into(), Roi::Disk, DEFAULT_DATA_RANGE)
}

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;

fn gaussian_taps() -> Vec<f64> {
    let taps: Vec<f64> = (-(SSIM_RADIUS as isize)..=SSIM_RADIUS as isize)
        .map(|i| (-0.5 * (i as f64 / SSIM_SIGMA).powi(2)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable 11×11 Gaussian smoothing with reflected borders.
fn gaussian_filter(rows: usize, cols: usize, data: &[f64], taps: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let mut tmp = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let xx = reflect(x as isize + k as isize - r, cols);
                acc += t * data[y * cols + xx];
            }
            tmp[y * cols + x] = acc;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let yy = reflect(y as isize + k as isize - r, rows);
                acc += t * tmp[yy * cols + x];
            }
            out[y * cols + x] = acc;
        }
    }
    out
}

/// Mean local SSIM over the ROI with an 11×11 Gaussian window (σ = 1.5),
/// `C1 = (0.01·L)²`, `C2 = (0.03·L)²`.
pub fn ssim(pred: GridRef, target: GridRef, roi: Roi, data_range: f64) -> Result<f64> {
    check(&pred, &target)?;
    let (rows, cols) = (pred.rows, pred.cols);
    let taps = gaussian_taps();
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let m = mask(rows, cols, roi);
    // Normalized convolution: window weights are restricted to ROI pixels and
    // renormalized, so nothing outside the ROI reaches the local statistics.
    let weight: Vec<f64> = m.iter().map(|&i| if i { 1.0 } else { 0.0 }).collect();
    let norm = gaussian_filter(rows, cols, &weight, &taps);
    let (x, y) = (pred.data, target.data);
    let local = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let field: Vec<f64> = (0..rows * cols)
            .map(|i| if m[i] { f(i) } else { 0.0 })
            .collect();
        gaussian_filter(rows, cols, &field, &taps)
            .into_iter()
            .zip(&norm)
            .map(|(v, n)| if *n > 0.0 { v / n } else { 0.0 })
            .collect()
    };
    let mu_x = local(&|i| x[i]);
    let mu_y = local(&|i| y[i]);
    let xx = local(&|i| x[i] * x[i]);
    let yy = local(&|i| y[i] * y[i]);
    let xy = local(&|i| x[i] * y[i]);
    let (mut acc, mut n) = (0.0, 0usize);
    for i in 0..rows * cols {
        if !m[i] {
            continue;
        }
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
        n += 1;
    }
    Ok(acc / n as f64)
}

pub fn ssim_roi(pred: &Image, target: &Image) -> Result<f64> {
    ssim(pred.into(), target.into(), Roi::Disk, DEFAULT_DATA_RANGE)
}

pub fn report(pred: &Image, target: &Image) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr_roi(pred, target)?,
        ssim: ssim_roi(pred, target)?,
        roi_radius: pred.size as f64 / 2.0,
        data_range: DEFAULT_DATA_RANGE,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
