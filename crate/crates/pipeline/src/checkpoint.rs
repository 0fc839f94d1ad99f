//! Stage checkpoints: one tensor file holding the geometry, the generator
//! (`g.`), the global discriminator (`d.`) and, for SIN, the local
//! discriminator (`dl.`).

use std::path::Path;

use svct_core::filtering::ramp_kernel;
use svct_core::io::{find, load_records, save_records, TensorRecord};
use svct_nn::builders::{build_patch_discriminator, build_unet};
use svct_nn::{Network, NnError, Role};

use crate::data::DeskGeometry;
use crate::error::{PipelineError, Result};
use crate::train::GanModels;

pub fn stage_records(models: &GanModels, g: &DeskGeometry) -> Vec<TensorRecord> {
    let mut out = vec![TensorRecord::new("geometry", vec![4], g.to_vec())];
    out.extend(models.generator.to_records("g."));
    out.extend(models.global.to_records("d."));
    if let Some(l) = &models.local {
        out.extend(l.to_records("dl."));
    }
    out
}

pub fn save_stage(path: &Path, models: &GanModels, g: &DeskGeometry) -> Result<()> {
    Ok(save_records(path, &stage_records(models, g))?)
}

fn meta(records: &[TensorRecord], prefix: &str) -> Result<Vec<f32>> {
    find(records, &format!("{prefix}meta"))
        .map(|r| r.data.clone())
        .ok_or_else(|| NnError::Checkpoint(format!("missing record '{prefix}meta'")).into())
}

/// Rebuilds a network from the `meta` record under `prefix` and loads it.
pub fn network_from_records(records: &[TensorRecord], prefix: &str) -> Result<Network<f32>> {
    let m = meta(records, prefix)?;
    if m.len() != 6 {
        return Err(NnError::Checkpoint(format!("'{prefix}meta' has {} values", m.len())).into());
    }
    let (base, cin, cout) = (m[1] as usize, m[2] as usize, m[3] as usize);
    let residual = (m[4] >= 0.0).then_some(m[4] as usize);
    let spec = match m[0] as u32 {
        0 => build_unet(Role::SinGenerator, base, cin, cout, residual)?,
        1 => build_unet(Role::PrnGenerator, base, cin, cout, residual)?,
        2 => build_patch_discriminator(base, cin)?,
        other => return Err(NnError::Checkpoint(format!("unknown network role code {other}")).into()),
    };
    let mut net = Network::new(spec, 0);
    net.load_records(records, prefix)?;
    Ok(net)
}

pub fn geometry_from_records(records: &[TensorRecord]) -> Result<DeskGeometry> {
    let r = find(records, "geometry")
        .ok_or_else(|| PipelineError::Config("checkpoint has no geometry record".into()))?;
    DeskGeometry::from_slice(&r.data)
}

pub fn load_stage(path: &Path) -> Result<(GanModels, DeskGeometry)> {
    let records = load_records(path)?;
    let g = geometry_from_records(&records)?;
    let generator = network_from_records(&records, "g.")?;
    let is_sin = generator.spec.role == Role::SinGenerator;
    let local = if find(&records, "dl.meta").is_some() {
        Some(network_from_records(&records, "dl.")?)
    } else {
        None
    };
    Ok((
        GanModels {
            generator,
            global: network_from_records(&records, "d.")?,
            local,
            hf_kernel: if is_sin { Some(ramp_kernel(g.size - 1, 1.0)?) } else { None },
        },
        g,
    ))
}

/// Loads only the generator, checking its role.
pub fn load_generator(path: &Path, role: Role) -> Result<(Network<f32>, DeskGeometry)> {
    let records = load_records(path)?;
    let net = network_from_records(&records, "g.")?;
    if net.spec.role != role {
        return Err(PipelineError::Config(format!(
            "{} holds a {:?} generator, expected {role:?}",
            path.display(),
            net.spec.role
        )));
    }
    Ok((net, geometry_from_records(&records)?))
}
