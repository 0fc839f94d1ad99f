//! Random affine augmentation of reconstructions.
//!
//! Coordinates are centered, `x` to the right and `y` up. A sample maps an
//! input point `p` to `R(θ)·Sh(φ)·Sc(s)·(p + t)`, where `Sh` shears `x` by
//! `tan φ · y`; rotation is counter-clockwise.

use rand::Rng;
use svct_core::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams {
    /// Rotation range `±rotation_deg`.
    pub rotation_deg: f64,
    /// Translation range `±translation`, as a fraction of the image size.
    pub translation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Shear range `±shear_deg`.
    pub shear_deg: f64,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            translation: 0.1,
            scale_min: 0.5,
            scale_max: 1.1,
            shear_deg: 20.0,
        }
    }
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            translation: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            shear_deg: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineSample {
    pub rotation_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub scale: f64,
    pub shear_deg: f64,
}

/// Draw order: rotation, x translation, y translation, scale, shear.
pub fn sample_affine<R: Rng>(p: &AffineParams, rng: &mut R) -> AffineSample {
    AffineSample {
        rotation_deg: rng.gen_range(-p.rotation_deg..=p.rotation_deg),
        tx: rng.gen_range(-p.translation..=p.translation),
        ty: rng.gen_range(-p.translation..=p.translation),
        scale: rng.gen_range(p.scale_min..=p.scale_max),
        shear_deg: rng.gen_range(-p.shear_deg..=p.shear_deg),
    }
}

/// Warps with bilinear resampling and zero fill outside the image.
pub fn apply_affine(img: &Image, a: &AffineSample) -> Image {
    let n = img.size;
    let c = (n as f64 - 1.0) / 2.0;
    let (sin, cos) = a.rotation_deg.to_radians().sin_cos();
    let k = a.shear_deg.to_radians().tan();
    // forward linear part M = R·Sh·Sc; invert it once
    let m = [
        [cos * a.scale, (cos * k - sin) * a.scale],
        [sin * a.scale, (sin * k + cos) * a.scale],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ];
    let (tx, ty) = (a.tx * n as f64, a.ty * n as f64);
    let sample = |x: f64, y: f64| -> f64 {
        let (col, row) = (x + c, c - y);
        let (c0, r0) = (col.floor(), row.floor());
        let (fc, fr) = (col - c0, row - r0);
        let mut acc = 0.0;
        for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
            for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
                let (r, cc) = (r0 + dr, c0 + dc);
                let w = wr * wc;
                if w != 0.0 && r >= 0.0 && cc >= 0.0 && r < n as f64 && cc < n as f64 {
                    acc += w * img.get(r as usize, cc as usize);
                }
            }
        }
        acc
    };
    Image::from_fn(n, |row, col| {
        let (xo, yo) = (col as f64 - c, c - row as f64);
        let x = inv[0][0] * xo + inv[0][1] * yo - tx;
        let y = inv[1][0] * xo + inv[1][1] * yo - ty;
        sample(x, y)
    })
}

pub fn random_affine<R: Rng>(img: &Image, params: &AffineParams, rng: &mut R) -> Image {
    apply_affine(img, &sample_affine(params, rng))
}
