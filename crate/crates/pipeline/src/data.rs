//! Desk geometry, synthetic datasets and conversions between CT data and
//! network tensors.
//!
//! Sinogram tensors are `[1, 1, detectors, angles]` with values divided by
//! the detector count, which keeps line integrals of `[0, 1]` phantoms at
//! order one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svct_core::config::Config;
use svct_core::phantom::{make_phantom, PhantomSpec};
use svct_core::sinogram_ops::{
    linear_upsample_angular, sparse_sample, two_ends_crop, two_ends_extend, CascadeStack,
};
use svct_core::{radon_forward, Geometry, Image, Sinogram};
use svct_nn::Tensor;

use crate::error::{PipelineError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeskGeometry {
    /// Image side and detector count.
    pub size: usize,
    /// Views of the dense sinogram over `[0, π)`.
    pub full_views: usize,
    /// Sparse acquisition keeps every `sparse_every`-th view.
    pub sparse_every: usize,
    /// Views added at each end by two-ends flipping.
    pub te_pad: usize,
}

impl Default for DeskGeometry {
    fn default() -> Self {
        Self {
            size: 64,
            full_views: 180,
            sparse_every: 8,
            te_pad: 6,
        }
    }
}

impl DeskGeometry {
    pub fn reference() -> Self {
        Self {
            size: 320,
            ..Self::default()
        }
    }

    pub fn sparse_views(&self) -> usize {
        self.full_views.div_ceil(self.sparse_every)
    }

    pub fn padded_views(&self) -> usize {
        self.full_views + 2 * self.te_pad
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Ok(Geometry::parallel(self.size, self.full_views)?)
    }

    /// Network tensors are raw line integrals divided by this. `S/8` puts
    /// random-ellipse sinograms at roughly unit standard deviation.
    pub fn sinogram_scale(&self) -> f64 {
        self.size as f64 / 8.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.size == 0 || self.size % 16 != 0 {
            return bad(format!("size {} must be a positive multiple of 16", self.size));
        }
        if self.padded_views() % 16 != 0 {
            return bad(format!(
                "full_views + 2·te_pad = {} must be a multiple of 16 for the U-Net",
                self.padded_views()
            ));
        }
        if self.full_views % 4 != 0 {
            return bad(format!("full_views {} must be divisible by 4 for the cascade", self.full_views));
        }
        if self.sparse_every == 0 || self.te_pad >= self.full_views {
            return bad("sparse_every must be positive and te_pad < full_views".into());
        }
        Ok(())
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let g = Self {
            size: cfg.get_or("geometry.size", d.size)?,
            full_views: cfg.get_or("geometry.full_views", d.full_views)?,
            sparse_every: cfg.get_or("geometry.sparse_every", d.sparse_every)?,
            te_pad: cfg.get_or("geometry.te_pad", d.te_pad)?,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_vec(&self) -> Vec<f32> {
        [self.size, self.full_views, self.sparse_every, self.te_pad]
            .iter()
            .map(|&v| v as f32)
            .collect()
    }

    pub fn from_slice(v: &[f32]) -> Result<Self> {
        if v.len() != 4 {
            return Err(PipelineError::Config("geometry record needs 4 values".into()));
        }
        let g = Self {
            size: v[0] as usize,
            full_views: v[1] as usize,
            sparse_every: v[2] as usize,
            te_pad: v[3] as usize,
        };
        g.validate()?;
        Ok(g)
    }
}

pub fn sinogram_to_tensor(s: &Sinogram, scale: f64) -> Tensor<f32> {
    let (d, p) = (s.num_detectors, s.num_angles());
    Tensor::from_fn([1, 1, d, p], |i| (s.data[(i % p) * d + i / p] / scale) as f32)
}

/// Inverse of [`sinogram_to_tensor`] for sample `n`, channel 0.
pub fn tensor_to_sinogram(t: &Tensor<f32>, n: usize, angles: Vec<f64>, scale: f64) -> Result<Sinogram> {
    let (d, p) = (t.h(), t.w());
    if angles.len() != p {
        return Err(PipelineError::Config(format!("{} angles for {p} tensor columns", angles.len())));
    }
    let mut data = vec![0.0; d * p];
    for a in 0..p {
        for j in 0..d {
            data[a * d + j] = t.at(n, 0, j, a) as f64 * scale;
        }
    }
    Ok(Sinogram::from_data(d, angles, data)?)
}

pub fn image_to_tensor(img: &Image) -> Tensor<f32> {
    Tensor::from_fn([1, 1, img.size, img.size], |i| img.pixels[i] as f32)
}

pub fn tensor_to_image(t: &Tensor<f32>, n: usize) -> Result<Image> {
    if t.h() != t.w() || t.c() != 1 {
        return Err(PipelineError::Config(format!("tensor {:?} is not a square image", t.shape)));
    }
    let base = t.idx(n, 0, 0, 0);
    Ok(Image::from_vec(t.h(), t.data[base..base + t.plane()].iter().map(|&v| v as f64).collect())?)
}

pub fn cascade_to_tensor(c: &CascadeStack) -> Tensor<f32> {
    let s = c.size();
    let p = s * s;
    Tensor::from_fn([1, 4, s, s], |i| c.channels[i / p].pixels[i % p] as f32)
}

/// `TE(linear_upsample(sparse))`: the SIN input.
pub fn sin_input(sparse: &Sinogram, g: &DeskGeometry) -> Result<Sinogram> {
    let up = linear_upsample_angular(sparse, g.full_views)?;
    Ok(two_ends_extend(&up, g.te_pad)?)
}

/// Everything simulated from one phantom.
#[derive(Clone, Debug)]
pub struct Acquisition {
    pub full: Sinogram,
    pub sparse: Sinogram,
    /// Linear angular interpolation of `sparse` back to the full grid.
    pub upsampled: Sinogram,
    pub sin_input: Sinogram,
    pub sin_target: Sinogram,
}

pub fn acquire(phantom: &Image, g: &DeskGeometry) -> Result<Acquisition> {
    let full = radon_forward(phantom, &g.geometry()?)?;
    let sparse = sparse_sample(&full, g.sparse_every)?;
    let upsampled = linear_upsample_angular(&sparse, g.full_views)?;
    let sin_input = two_ends_extend(&upsampled, g.te_pad)?;
    let sin_target = two_ends_extend(&full, g.te_pad)?;
    Ok(Acquisition {
        full,
        sparse,
        upsampled,
        sin_input,
        sin_target,
    })
}

/// Removes the two-ends padding from a SIN output.
pub fn crop_padding(sino: &Sinogram, g: &DeskGeometry) -> Result<Sinogram> {
    Ok(two_ends_crop(sino, g.te_pad)?)
}

/// Random-ellipse phantoms with 6 to 12 ellipses each. Draw order per
/// phantom: ellipse count, phantom seed.
pub fn random_phantoms(count: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(6..=12);
            make_phantom(&PhantomSpec::random(size, n, rng.gen()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use svct_core::geometry::uniform_angles;

    #[test]
    fn desk_geometry_dimensions() {
        let g = DeskGeometry::default();
        g.validate().unwrap();
        assert_eq!((g.sparse_views(), g.padded_views()), (23, 192));
        DeskGeometry::reference().validate().unwrap();
        assert!(DeskGeometry { te_pad: 5, ..g }.validate().is_err());
        assert_eq!(DeskGeometry::from_slice(&g.to_vec()).unwrap(), g);
    }

    #[test]
    fn tensor_conversions_round_trip() {
        let data: Vec<f64> = (0..16 * 5).map(|i| (i as f32 * 0.25) as f64).collect();
        let s = Sinogram::from_data(16, uniform_angles(5), data).unwrap();
        let t = sinogram_to_tensor(&s, 1.0);
        assert_eq!(t.at(0, 0, 3, 2), s.get(3, 2) as f32);
        assert_eq!(tensor_to_sinogram(&t, 0, s.angles.clone(), 1.0).unwrap(), s);
        let img = Image::from_fn(16, |r, c| (r * 16 + c) as f64 / 256.0);
        assert_eq!(tensor_to_image(&image_to_tensor(&img), 0).unwrap(), img);
    }

    #[test]
    fn acquisition_shapes() {
        let g = DeskGeometry::default();
        let a = acquire(&random_phantoms(1, 64, 3)[0], &g).unwrap();
        assert_eq!(a.sparse.num_angles(), 23);
        assert_eq!(a.sin_input.num_angles(), 192);
        assert_eq!(a.sin_target.num_angles(), 192);
        assert_eq!(crop_padding(&a.sin_target, &g).unwrap(), a.full);
    }
}
