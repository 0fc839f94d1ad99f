//! The reconstruction chain from a sparse sinogram to the refined image.

use std::path::Path;

use svct_core::io::{image_record, save_records, sinogram_records, TensorRecord};
use svct_core::sinogram_ops::{build_cascade, linear_upsample_angular, two_ends_extend, CascadeStack};
use svct_core::{Image, Sinogram};
use svct_nn::{Network, Role};

use crate::data::{
    cascade_to_tensor, crop_padding, sinogram_to_tensor, tensor_to_image, tensor_to_sinogram, DeskGeometry,
};
use crate::error::{PipelineError, Result};

#[derive(Clone, Debug)]
pub struct Intermediates {
    pub upsampled: Sinogram,
    pub te_extended: Sinogram,
    pub sin_output: Sinogram,
    pub cropped: Sinogram,
    pub cascade: CascadeStack,
    pub image: Image,
}

fn check_network(net: &Network<f32>, role: Role, in_channels: usize) -> Result<()> {
    if net.spec.role != role || net.spec.in_channels != in_channels {
        return Err(PipelineError::Config(format!(
            "expected a {role:?} network with {in_channels} input channels, got {:?} with {}",
            net.spec.role, net.spec.in_channels
        )));
    }
    Ok(())
}

/// linear upsampling → two-ends extension → SIN → crop → FBP cascade → PRN.
/// With `dump`, every intermediate is written there as a tensor file.
pub fn run_pipeline(
    sparse: &Sinogram,
    sin: &mut Network<f32>,
    prn: &mut Network<f32>,
    g: &DeskGeometry,
    dump: Option<&Path>,
) -> Result<Intermediates> {
    g.validate()?;
    check_network(sin, Role::SinGenerator, 1)?;
    check_network(prn, Role::PrnGenerator, 4)?;
    if sparse.num_detectors != g.size || sparse.num_angles() != g.sparse_views() {
        return Err(PipelineError::Config(format!(
            "sparse sinogram is {}x{}, geometry expects {}x{}",
            sparse.num_detectors,
            sparse.num_angles(),
            g.size,
            g.sparse_views()
        )));
    }
    let upsampled = linear_upsample_angular(sparse, g.full_views)?;
    let te_extended = two_ends_extend(&upsampled, g.te_pad)?;
    let scale = g.sinogram_scale();
    let raw = sin.infer(&sinogram_to_tensor(&te_extended, scale))?;
    let sin_output = tensor_to_sinogram(&raw, 0, te_extended.angles.clone(), scale)?;
    let cropped = crop_padding(&sin_output, g)?;
    let cascade = build_cascade(sparse, &cropped, &g.geometry()?)?;
    let out = prn.infer(&cascade_to_tensor(&cascade))?;
    let image = tensor_to_image(&out, 0)?;
    let stages = Intermediates {
        upsampled,
        te_extended,
        sin_output,
        cropped,
        cascade,
        image,
    };
    if let Some(dir) = dump {
        dump_intermediates(&stages, dir)?;
    }
    Ok(stages)
}

pub fn dump_intermediates(s: &Intermediates, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let sinos = [
        ("1_upsampled", &s.upsampled),
        ("2_te_extended", &s.te_extended),
        ("3_sin_output", &s.sin_output),
        ("4_cropped", &s.cropped),
    ];
    for (name, sino) in sinos {
        save_records(&dir.join(format!("{name}.ctt")), &sinogram_records(sino))?;
    }
    let n = s.cascade.size();
    let data: Vec<f64> = s.cascade.channels.iter().flat_map(|c| c.pixels.iter().copied()).collect();
    save_records(
        &dir.join("5_cascade.ctt"),
        &[TensorRecord::from_f64("cascade", vec![4, n, n], &data)],
    )?;
    save_records(&dir.join("6_image.ctt"), &[image_record(&s.image)])?;
    Ok(())
}
