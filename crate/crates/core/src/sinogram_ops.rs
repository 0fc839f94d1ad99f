//! Angular resampling and two-ends padding of sinograms, plus the 4-channel
//! FBP cascade that feeds the image-domain refinement network.
//!
//! All of these rely on the parallel-beam symmetry `p(θ+π, s) = p(θ, -s)`:
//! a projection half a turn away is the detector-flipped projection.

use std::f64::consts::PI;

use crate::error::{mismatch, CtError, Result};
use crate::filtering::fbp;
use crate::geometry::{flip_detectors, uniform_angles, Geometry, Image, Sinogram};

/// Keeps angle indices `0, k, 2k, ...`.
pub fn sparse_sample(full: &Sinogram, every_k: usize) -> Result<Sinogram> {
    if every_k == 0 {
        return Err(CtError::InvalidArgument(
            "sparse sampling step must be >= 1".into(),
        ));
    }
    keep_every(full, every_k)
}

/// Keeps every `factor`-th column starting at index 0.
pub fn downsample_angular(sino: &Sinogram, factor: usize) -> Result<Sinogram> {
    if factor == 0 {
        return Err(CtError::InvalidArgument(
            "downsampling factor must be >= 1".into(),
        ));
    }
    keep_every(sino, factor)
}

fn keep_every(sino: &Sinogram, step: usize) -> Result<Sinogram> {
    let columns = (0..sino.num_angles())
        .step_by(step)
        .map(|a| (sino.angles[a], sino.column(a).to_vec()))
        .collect();
    Sinogram::from_columns(sino.num_detectors, sino.detector_spacing, columns)
}

/// Index of `angle` on the uniform grid `i·π/n`, if it lies on it.
fn grid_index(angle: f64, n: usize) -> Option<usize> {
    let step = PI / n as f64;
    let t = angle / step;
    let i = t.round();
    // angles read back from tensor files are f32
    if (t - i).abs() <= 1e-4 && i >= 0.0 && (i as usize) < n {
        Some(i as usize)
    } else {
        None
    }
}

/// Per-detector linear interpolation along the angle axis onto the uniform
/// grid of `target_angles` views over `[0, π)`.
///
/// Target angles past the last measured view (or before the first) are
/// interpolated towards a virtual view half a turn away, namely the detector
/// flip of the first (or last) measured projection.
pub fn linear_upsample_angular(sparse: &Sinogram, target_angles: usize) -> Result<Sinogram> {
    if target_angles == 0 {
        return Err(CtError::InvalidArgument(
            "target angle count must be positive".into(),
        ));
    }
    let nodes: Vec<usize> = sparse
        .angles
        .iter()
        .map(|&a| {
            grid_index(a, target_angles).ok_or_else(|| {
                CtError::InvalidArgument(format!(
                    "source angle {a:.6} rad is not on the {target_angles}-view target grid"
                ))
            })
        })
        .collect::<Result<_>>()?;

    let s = sparse.num_detectors;
    let first_flipped = flip_detectors(sparse.column(0));
    let last = nodes.len() - 1;
    let last_flipped = flip_detectors(sparse.column(last));
    let n = target_angles as isize;

    let mut out = Sinogram::zeros(s, uniform_angles(target_angles));
    out.detector_spacing = sparse.detector_spacing;
    let mut seg = 0usize;
    for t in 0..target_angles {
        while seg + 1 < nodes.len() && nodes[seg + 1] <= t {
            seg += 1;
        }
        let (i0, left, i1, right): (isize, &[f64], isize, &[f64]) = if t < nodes[0] {
            (
                nodes[last] as isize - n,
                &last_flipped,
                nodes[0] as isize,
                sparse.column(0),
            )
        } else if seg == last {
            (
                nodes[last] as isize,
                sparse.column(last),
                nodes[0] as isize + n,
                &first_flipped,
            )
        } else {
            (
                nodes[seg] as isize,
                sparse.column(seg),
                nodes[seg + 1] as isize,
                sparse.column(seg + 1),
            )
        };
        let col = out.column_mut(t);
        if t as isize == i0 {
            col.copy_from_slice(left);
            continue;
        }
        let w = (t as isize - i0) as f64 / (i1 - i0) as f64;
        for ((o, &l), &r) in col.iter_mut().zip(left).zip(right) {
            *o = (1.0 - w) * l + w * r;
        }
    }
    Ok(out)
}

fn check_half_turn(sino: &Sinogram) -> Result<()> {
    let tol = 1e-9;
    if sino.angles.iter().any(|&a| a < -tol || a >= PI - tol) {
        return Err(CtError::InvalidArgument(
            "two-ends extension needs a sinogram spanning [0, pi)".into(),
        ));
    }
    Ok(())
}

/// Prepends flipped copies of the last `pad` views (angles `θ-π`) and appends
/// flipped copies of the first `pad` views (angles `θ+π`).
pub fn two_ends_extend(sino: &Sinogram, pad: usize) -> Result<Sinogram> {
    let p = sino.num_angles();
    if pad >= p {
        return Err(CtError::InvalidArgument(format!(
            "two-ends pad {pad} must be smaller than the {p} available views"
        )));
    }
    check_half_turn(sino)?;
    let mut columns = Vec::with_capacity(p + 2 * pad);
    for a in p - pad..p {
        columns.push((sino.angles[a] - PI, flip_detectors(sino.column(a))));
    }
    for a in 0..p {
        columns.push((sino.angles[a], sino.column(a).to_vec()));
    }
    for a in 0..pad {
        columns.push((sino.angles[a] + PI, flip_detectors(sino.column(a))));
    }
    Sinogram::from_columns(sino.num_detectors, sino.detector_spacing, columns)
}

/// Removes `pad` views from each end.
pub fn two_ends_crop(sino: &Sinogram, pad: usize) -> Result<Sinogram> {
    let p = sino.num_angles();
    if p <= 2 * pad {
        return Err(CtError::InvalidArgument(format!(
            "cannot crop {pad} views from each end of a {p}-view sinogram"
        )));
    }
    let columns = (pad..p - pad)
        .map(|a| (sino.angles[a], sino.column(a).to_vec()))
        .collect();
    Sinogram::from_columns(sino.num_detectors, sino.detector_spacing, columns)
}

/// Four FBP reconstructions in ascending view count.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeStack {
    pub channels: [Image; 4],
    pub source_view_counts: [usize; 4],
}

impl CascadeStack {
    pub fn size(&self) -> usize {
        self.channels[0].size
    }
}

/// `[fbp(sparse), fbp(inpainted↓4), fbp(inpainted↓2), fbp(inpainted)]`.
pub fn build_cascade(
    sparse: &Sinogram,
    inpainted_full: &Sinogram,
    geom: &Geometry,
) -> Result<CascadeStack> {
    for (name, s) in [("sparse", sparse), ("inpainted", inpainted_full)] {
        if s.num_detectors != geom.num_detectors {
            return Err(mismatch(
                if name == "sparse" {
                    "build_cascade sparse detectors"
                } else {
                    "build_cascade inpainted detectors"
                },
                geom.num_detectors,
                s.num_detectors,
            ));
        }
    }
    let quarter = downsample_angular(inpainted_full, 4)?;
    let half = downsample_angular(inpainted_full, 2)?;
    let channels = [
        fbp(sparse, geom)?,
        fbp(&quarter, geom)?,
        fbp(&half, geom)?,
        fbp(inpainted_full, geom)?,
    ];
    Ok(CascadeStack {
        channels,
        source_view_counts: [
            sparse.num_angles(),
            quarter.num_angles(),
            half.num_angles(),
            inpainted_full.num_angles(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_sino(s: usize, p: usize) -> Sinogram {
        let mut sino = Sinogram::zeros(s, uniform_angles(p));
        for (i, v) in sino.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        sino
    }

    #[test]
    fn sparse_every_eight_gives_23_views() {
        let full = ramp_sino(16, 180);
        let sp = sparse_sample(&full, 8).unwrap();
        assert_eq!(sp.num_angles(), 23);
        let degrees: Vec<f64> = sp.angles.iter().map(|a| a.to_degrees()).collect();
        for (i, d) in degrees.iter().enumerate() {
            assert!((d - 8.0 * i as f64).abs() < 1e-9);
        }
        assert_eq!(sparse_sample(&full, 1).unwrap(), full);
        assert_eq!(
            sparse_sample(&sparse_sample(&full, 2).unwrap(), 2).unwrap(),
            sparse_sample(&full, 4).unwrap()
        );
        assert!(sparse_sample(&full, 0).is_err());
    }

    #[test]
    fn downsample_factors() {
        let full = ramp_sino(8, 180);
        assert_eq!(downsample_angular(&full, 2).unwrap().num_angles(), 90);
        assert_eq!(downsample_angular(&full, 4).unwrap().num_angles(), 45);
        assert_eq!(downsample_angular(&full, 1).unwrap(), full);
        assert_eq!(
            downsample_angular(&downsample_angular(&full, 2).unwrap(), 2).unwrap(),
            downsample_angular(&full, 4).unwrap()
        );
    }

    #[test]
    fn upsample_preserves_nodes_and_midpoints() {
        let full = ramp_sino(12, 180);
        let sp = sparse_sample(&full, 8).unwrap();
        let up = linear_upsample_angular(&sp, 180).unwrap();
        for i in 0..23 {
            assert_eq!(up.column(8 * i), sp.column(i));
        }
        for j in 0..12 {
            let mid = 0.5 * (sp.get(j, 3) + sp.get(j, 4));
            assert!((up.get(j, 28) - mid).abs() < 1e-12);
        }
        // 177° lies 1/4 of the way from 176° to the flipped 0° view at 180°.
        let flipped = flip_detectors(sp.column(0));
        for j in 0..12 {
            let expected = 0.75 * sp.get(j, 22) + 0.25 * flipped[j];
            assert!((up.get(j, 177) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_rejects_off_grid_sources() {
        let sp = Sinogram::zeros(4, vec![0.0, 0.123]);
        assert!(linear_upsample_angular(&sp, 180).is_err());
    }

    #[test]
    fn two_ends_round_trip() {
        let full = ramp_sino(10, 180);
        let ext = two_ends_extend(&full, 6).unwrap();
        assert_eq!(ext.num_angles(), 192);
        assert_eq!(ext.column(0), flip_detectors(full.column(174)).as_slice());
        assert_eq!(ext.column(191), flip_detectors(full.column(5)).as_slice());
        assert!((ext.angles[0] - (full.angles[174] - PI)).abs() < 1e-15);
        assert_eq!(two_ends_crop(&ext, 6).unwrap(), full);
        assert_eq!(two_ends_extend(&full, 0).unwrap(), full);
        assert_eq!(two_ends_crop(&full, 0).unwrap(), full);
        assert!(two_ends_extend(&full, 180).is_err());
        assert!(two_ends_crop(&full, 90).is_err());
    }
}
