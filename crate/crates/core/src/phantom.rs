//! Synthetic phantoms: the modified Shepp-Logan head and seeded random
//! ellipse ensembles.
//!
//! Ellipses live in normalized coordinates `[-1, 1]²` with `y` pointing up;
//! pixel `(row, col)` of an `S×S` image maps to
//! `x = (col - (S-1)/2) / (S/2)`, `y = ((S-1)/2 - row) / (S/2)`.
//! Pixels take the sum of the intensities of every ellipse containing their
//! center, clamped to `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CtError, Result};
use crate::geometry::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    /// Counter-clockwise rotation in degrees.
    pub angle_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, semi_x: f64, semi_y: f64, cx: f64, cy: f64, angle: f64) -> Self {
        Self {
            intensity,
            semi_x,
            semi_y,
            center_x: cx,
            center_y: cy,
            angle_deg: angle,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

/// Modified (high-contrast) Shepp-Logan table: intensity, semi-axes,
/// center, rotation.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses,
}

impl std::str::FromStr for PhantomKind {
    type Err = CtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp_logan" | "shepp-logan" => Ok(Self::SheppLogan),
            "random_ellipses" | "random-ellipses" => Ok(Self::RandomEllipses),
            other => Err(CtError::InvalidArgument(format!(
                "unknown phantom kind '{other}' (expected shepp_logan or random_ellipses)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    pub ellipse_count: usize,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn shepp_logan(size: usize) -> Self {
        Self {
            kind: PhantomKind::SheppLogan,
            size,
            ellipse_count: SHEPP_LOGAN.len(),
            seed: 0,
        }
    }

    pub fn random(size: usize, ellipse_count: usize, seed: u64) -> Self {
        Self {
            kind: PhantomKind::RandomEllipses,
            size,
            ellipse_count,
            seed,
        }
    }
}

pub fn rasterize(size: usize, ellipses: &[Ellipse]) -> Image {
    let c = (size as f64 - 1.0) / 2.0;
    let half = size as f64 / 2.0;
    Image::from_fn(size, |r, col| {
        let x = (col as f64 - c) / half;
        let y = (c - r as f64) / half;
        let v: f64 = ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum();
        (v + 0.0).clamp(0.0, 1.0)
    })
}

/// Draw order per ellipse: semi-axes, center radius, center angle, rotation,
/// intensity. The first ellipse is a large low-intensity body that the
/// others sit inside, so every phantom has a CT-like support.
pub fn random_ellipses(count: usize, seed: u64) -> Vec<Ellipse> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let body_x = rng.gen_range(0.6..0.85);
    let body_y = rng.gen_range(0.6..0.85);
    out.push(Ellipse::new(
        rng.gen_range(0.1..0.3),
        body_x,
        body_y,
        0.0,
        0.0,
        rng.gen_range(0.0..180.0),
    ));
    for _ in 1..count {
        let a: f64 = rng.gen_range(0.04..0.35);
        let b: f64 = rng.gen_range(0.04..0.35);
        let reach = (0.6 - a.max(b)).max(0.0);
        let rad = reach * rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let angle = rng.gen_range(0.0..180.0);
        let intensity = rng.gen_range(-0.15..0.5);
        out.push(Ellipse::new(
            intensity,
            a,
            b,
            rad * phi.cos(),
            rad * phi.sin(),
            angle,
        ));
    }
    out
}

pub fn make_phantom(spec: &PhantomSpec) -> Image {
    match spec.kind {
        PhantomKind::SheppLogan => rasterize(spec.size, &SHEPP_LOGAN),
        PhantomKind::RandomEllipses => {
            rasterize(spec.size, &random_ellipses(spec.ellipse_count, spec.seed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shepp_logan_range_and_background() {
        let img = make_phantom(&PhantomSpec::shepp_logan(128));
        assert!(img.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(127, 127), 0.0);
        assert_eq!(img.get(64, 21), 1.0, "skull rim");
        assert!(img.pixels.iter().all(|v| v.is_sign_positive()));
    }

    #[test]
    fn random_phantom_is_seeded() {
        let a = make_phantom(&PhantomSpec::random(48, 7, 11));
        let b = make_phantom(&PhantomSpec::random(48, 7, 11));
        let c = make_phantom(&PhantomSpec::random(48, 7, 12));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.pixels.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("shepp_logan".parse::<PhantomKind>().unwrap(), PhantomKind::SheppLogan);
        assert!("cube".parse::<PhantomKind>().is_err());
    }
}
