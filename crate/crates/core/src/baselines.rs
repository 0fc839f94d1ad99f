//! Learning-free reference reconstructions: sparse FBP, linear angular
//! interpolation + FBP, and FISTA with an isotropic total-variation prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{mismatch, CtError, Result};
use crate::filtering::fbp;
use crate::geometry::{backproject, radon_forward, Geometry, Image, Sinogram};
use crate::metrics::psnr_roi;
use crate::sinogram_ops::linear_upsample_angular;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `1/L` with `L` from power iteration on `AᵀA`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FistaConfig {
    pub tv_weight: f64,
    pub outer_iterations: usize,
    pub tv_prox_iterations: usize,
    pub step_size: StepSize,
    pub nonnegativity: bool,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            tv_weight: 0.1,
            outer_iterations: 100,
            tv_prox_iterations: 20,
            step_size: StepSize::Auto,
            nonnegativity: true,
        }
    }
}

impl FistaConfig {
    /// Reads `fista.*` keys, falling back to the defaults for missing ones.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let step_size = match cfg.get_str("fista.step_size") {
            None | Some("auto") => StepSize::Auto,
            Some(_) => StepSize::Fixed(cfg.get::<f64>("fista.step_size")?.unwrap_or(1.0)),
        };
        let out = Self {
            tv_weight: cfg.get_or("fista.tv_weight", d.tv_weight)?,
            outer_iterations: cfg.get_or("fista.outer_iterations", d.outer_iterations)?,
            tv_prox_iterations: cfg.get_or("fista.tv_prox_iterations", d.tv_prox_iterations)?,
            step_size,
            nonnegativity: cfg.get_or("fista.nonnegativity", d.nonnegativity)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tv_weight >= 0.0 && self.tv_weight.is_finite()) {
            return Err(CtError::InvalidArgument(format!(
                "tv_weight must be non-negative, got {}",
                self.tv_weight
            )));
        }
        if self.outer_iterations == 0 || self.tv_prox_iterations == 0 {
            return Err(CtError::InvalidArgument(
                "FISTA iteration counts must be >= 1".into(),
            ));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CtError::InvalidArgument(format!(
                    "step size must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FistaResult {
    pub image: Image,
    /// Objective of the initializer followed by one value per outer iteration.
    pub objective: Vec<f64>,
    pub lipschitz: f64,
    pub restarts: usize,
}

/// Isotropic TV with forward differences and Neumann boundary.
pub fn total_variation(img: &Image) -> f64 {
    let n = img.size;
    let mut tv = 0.0;
    for r in 0..n {
        for c in 0..n {
            let v = img.get(r, c);
            let dr = if r + 1 < n { v - img.get(r + 1, c) } else { 0.0 };
            let dc = if c + 1 < n { v - img.get(r, c + 1) } else { 0.0 };
            tv += (dr * dr + dc * dc).sqrt();
        }
    }
    tv
}

/// Largest eigenvalue of `AᵀA` by power iteration from a seeded start.
pub fn estimate_lipschitz(geom: &Geometry, iterations: usize, seed: u64) -> Result<f64> {
    let n = geom.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Image {
        size: n,
        pixels: (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    };
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = v.pixels.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(CtError::Lipschitz(norm));
        }
        v.pixels.iter_mut().for_each(|x| *x /= norm);
        let w = backproject(&radon_forward(&v, geom)?, geom)?;
        let next = w.pixels.iter().map(|x| x * x).sum::<f64>().sqrt();
        let converged = (next - estimate).abs() <= 1e-9 * next;
        estimate = next;
        v = w;
        if converged {
            break;
        }
    }
    if !(estimate.is_finite() && estimate > 0.0) {
        return Err(CtError::Lipschitz(estimate));
    }
    Ok(estimate)
}

/// `x - λ·div(p)` with `div` the negative adjoint of the forward difference.
fn primal_from_dual(b: &[f64], p: &[f64], q: &[f64], n: usize, lambda: f64, out: &mut [f64]) {
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            let mut l = p[i] + q[i];
            if r > 0 {
                l -= p[i - n];
            }
            if c > 0 {
                l -= q[i - 1];
            }
            out[i] = b[i] - lambda * l;
        }
    }
}

/// Proximal map of `weight·TV` (plus the non-negativity indicator when
/// `nonneg`), solved with the fast gradient projection dual iteration.
pub fn tv_prox(input: &Image, weight: f64, iterations: usize, nonneg: bool) -> Image {
    let n = input.size;
    let b = &input.pixels;
    let project = |x: &mut [f64]| {
        if nonneg {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    };
    if weight <= 0.0 {
        let mut out = input.clone();
        project(&mut out.pixels);
        return out;
    }
    let len = n * n;
    let (mut p, mut q) = (vec![0.0; len], vec![0.0; len]);
    let (mut r_, mut s_) = (vec![0.0; len], vec![0.0; len]);
    let mut x = vec![0.0; len];
    let mut t = 1.0f64;
    let step = 1.0 / (8.0 * weight);
    for _ in 0..iterations {
        primal_from_dual(b, &r_, &s_, n, weight, &mut x);
        project(&mut x);
        let (p_old, q_old) = (p.clone(), q.clone());
        for row in 0..n {
            for col in 0..n {
                let i = row * n + col;
                let mut pp = r_[i];
                let mut qq = s_[i];
                if row + 1 < n {
                    pp += step * (x[i] - x[i + n]);
                } else {
                    pp = 0.0;
                }
                if col + 1 < n {
                    qq += step * (x[i] - x[i + 1]);
                } else {
                    qq = 0.0;
                }
                let scale = (pp * pp + qq * qq).sqrt().max(1.0);
                p[i] = pp / scale;
                q[i] = qq / scale;
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for i in 0..len {
            r_[i] = p[i] + beta * (p[i] - p_old[i]);
            s_[i] = q[i] + beta * (q[i] - q_old[i]);
        }
        t = t_next;
    }
    primal_from_dual(b, &p, &q, n, weight, &mut x);
    project(&mut x);
    Image {
        size: n,
        pixels: x,
    }
}

fn objective(x: &Image, sino: &Sinogram, geom: &Geometry, tv_weight: f64) -> Result<f64> {
    let ax = radon_forward(x, geom)?;
    let fit: f64 = ax
        .data
        .iter()
        .zip(&sino.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * fit + tv_weight * total_variation(x))
}

/// Minimizes `½‖Ax − b‖² + tv_weight·TV(x)` with monotone FISTA and
/// function-value momentum restarts, starting from the FBP of `sino`.
pub fn fista_tv(sino: &Sinogram, geom: &Geometry, cfg: &FistaConfig) -> Result<FistaResult> {
    cfg.validate()?;
    if sino.data.iter().any(|v| !v.is_finite()) {
        return Err(CtError::NonFinite("FISTA input sinogram"));
    }
    if sino.num_detectors != geom.num_detectors || sino.num_angles() != geom.num_angles() {
        return Err(mismatch(
            "fista_tv",
            format!("{}x{}", geom.num_detectors, geom.num_angles()),
            format!("{}x{}", sino.num_detectors, sino.num_angles()),
        ));
    }
    let lipschitz = match cfg.step_size {
        StepSize::Auto => estimate_lipschitz(geom, 100, 0x5eed)?,
        StepSize::Fixed(s) => 1.0 / s,
    };
    let step = 1.0 / lipschitz;

    let mut x = fbp(sino, geom)?;
    if cfg.nonnegativity {
        x.pixels.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let mut f_x = objective(&x, sino, geom, cfg.tv_weight)?;
    let mut trace = vec![f_x];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut restarts = 0;

    for _ in 0..cfg.outer_iterations {
        let residual = {
            let mut ay = radon_forward(&y, geom)?;
            ay.data
                .iter_mut()
                .zip(&sino.data)
                .for_each(|(a, b)| *a -= b);
            ay
        };
        let grad = backproject(&residual, geom)?;
        let mut z = y.clone();
        z.pixels
            .iter_mut()
            .zip(&grad.pixels)
            .for_each(|(v, g)| *v -= step * g);
        let z = tv_prox(&z, cfg.tv_weight * step, cfg.tv_prox_iterations, cfg.nonnegativity);
        let f_z = objective(&z, sino, geom, cfg.tv_weight)?;
        if !f_z.is_finite() {
            return Err(CtError::NonFinite("FISTA objective"));
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if f_z <= f_x {
            let beta = (t - 1.0) / t_next;
            y = z.clone();
            y.pixels
                .iter_mut()
                .zip(&x.pixels)
                .for_each(|(yv, xv)| *yv += beta * (*yv - xv));
            x = z;
            f_x = f_z;
            t = t_next;
        } else {
            // objective went up: keep the previous iterate and drop momentum
            restarts += 1;
            y = x.clone();
            t = 1.0;
        }
        trace.push(f_x);
    }
    Ok(FistaResult {
        image: x,
        objective: trace,
        lipschitz,
        restarts,
    })
}

/// Picks the TV weight with the best ROI PSNR against a known phantom.
pub fn grid_search_tv_weight(
    sino: &Sinogram,
    geom: &Geometry,
    truth: &Image,
    base: &FistaConfig,
    grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut scores = Vec::with_capacity(grid.len());
    for &w in grid {
        let cfg = FistaConfig {
            tv_weight: w,
            ..*base
        };
        let res = fista_tv(sino, geom, &cfg)?;
        scores.push((w, psnr_roi(&res.image, truth)?));
    }
    let best = scores
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |b, s| if s.1 > b.1 { s } else { b });
    if best.0.is_nan() {
        return Err(CtError::InvalidArgument("empty TV weight grid".into()));
    }
    Ok((best.0, scores))
}

/// `fbp(linear_upsample_angular(sparse, P*))` with `P* = geom.num_angles()`.
pub fn linear_fbp_baseline(sparse: &Sinogram, geom: &Geometry) -> Result<Image> {
    let up = linear_upsample_angular(sparse, geom.num_angles())?;
    fbp(&up, geom)
}
