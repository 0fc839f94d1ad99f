//! Architectures: the residual U-Net generator and the patch discriminator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::layers::{LayerSpec, LEAKY_SLOPE};
use crate::network::{NetworkSpec, OpSpec, Role};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const UNET_LEVELS: usize = 4;
pub const UNET_MAX_CHANNELS: usize = 512;
pub const DISC_MAX_CHANNELS: usize = 256;

fn double_conv(ops: &mut Vec<OpSpec>, cin: usize, cout: usize) {
    for c in [cin, cout] {
        ops.push(OpSpec::Layer(LayerSpec::conv3(c, cout)));
        ops.push(OpSpec::Layer(LayerSpec::Relu));
        ops.push(OpSpec::Layer(LayerSpec::BatchNorm { channels: cout }));
    }
}

/// U-Net with four average-pooling / bilinear-upsampling levels and one skip
/// per level. Level `l` has `min(base·2^l, 512)` channels. The last conv
/// starts at zero and, when `residual` names an input channel, that channel
/// is added to the output, so a fresh network is the identity on it.
pub fn build_unet(
    role: Role,
    base_channels: usize,
    in_channels: usize,
    out_channels: usize,
    residual: Option<usize>,
) -> Result<NetworkSpec> {
    if base_channels == 0 || in_channels == 0 || out_channels == 0 {
        return Err(shape_err("unet", "channel counts must be positive"));
    }
    if let Some(r) = residual {
        if r >= in_channels || out_channels != 1 {
            return Err(shape_err(
                "unet",
                format!("residual channel {r} needs a single-channel output and r < {in_channels}"),
            ));
        }
    }
    let width = |l: usize| (base_channels << l).min(UNET_MAX_CHANNELS);
    let mut ops = Vec::new();
    let mut c = in_channels;
    for l in 0..UNET_LEVELS {
        double_conv(&mut ops, c, width(l));
        ops.push(OpSpec::SaveSkip(l));
        ops.push(OpSpec::Layer(LayerSpec::AvgPool2));
        c = width(l);
    }
    double_conv(&mut ops, c, width(UNET_LEVELS));
    c = width(UNET_LEVELS);
    for l in (0..UNET_LEVELS).rev() {
        ops.push(OpSpec::Layer(LayerSpec::BilinearUp2));
        ops.push(OpSpec::ConcatSkip(l));
        double_conv(&mut ops, c + width(l), width(l));
        c = width(l);
    }
    ops.push(OpSpec::Layer(LayerSpec::Conv2d {
        in_channels: c,
        out_channels,
        kernel: 3,
        stride: 1,
        padding: 1,
        zero_init: true,
    }));
    Ok(NetworkSpec {
        role,
        ops,
        base_channels,
        in_channels,
        out_channels,
        spatial_multiple: 1 << UNET_LEVELS,
        residual,
        feature_ops: Vec::new(),
    })
}

/// conv3 s1 → conv4 s2 → conv4 s2 → conv3 s1; LeakyReLU and batch norm
/// after each hidden conv, sigmoid on the output. Widths `b, 2b, 4b` are
/// capped at 256. The three LeakyReLU outputs are the feature layers.
pub fn build_patch_discriminator(base_channels: usize, in_channels: usize) -> Result<NetworkSpec> {
    if base_channels == 0 || in_channels == 0 {
        return Err(shape_err("discriminator", "channel counts must be positive"));
    }
    let w = |l: usize| (base_channels << l).min(DISC_MAX_CHANNELS);
    let convs = [
        LayerSpec::conv3(in_channels, w(0)),
        LayerSpec::conv4s2(w(0), w(1)),
        LayerSpec::conv4s2(w(1), w(2)),
    ];
    let mut ops = Vec::new();
    let mut feature_ops = Vec::new();
    for (conv, c) in convs.into_iter().zip([w(0), w(1), w(2)]) {
        ops.push(OpSpec::Layer(conv));
        ops.push(OpSpec::Layer(LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }));
        feature_ops.push(ops.len() - 1);
        ops.push(OpSpec::Layer(LayerSpec::BatchNorm { channels: c }));
    }
    ops.push(OpSpec::Layer(LayerSpec::conv3(w(2), 1)));
    ops.push(OpSpec::Layer(LayerSpec::Sigmoid));
    Ok(NetworkSpec {
        role: Role::Discriminator,
        ops,
        base_channels,
        in_channels,
        out_channels: 1,
        spatial_multiple: 4,
        residual: None,
        feature_ops,
    })
}

/// Top-left corner of a uniformly placed `⌊H/4⌋×⌊W/4⌋` window.
pub fn patch_offset<R: Rng>(h: usize, w: usize, rng: &mut R) -> (usize, usize) {
    let (ph, pw) = (h / 4, w / 4);
    (rng.gen_range(0..=h - ph), rng.gen_range(0..=w - pw))
}

/// Cuts the same `⌊H/4⌋×⌊W/4⌋` window from both tensors.
pub fn random_patch<T: Scalar>(
    pair: (&Tensor<T>, &Tensor<T>),
    seed: u64,
) -> Result<((Tensor<T>, Tensor<T>), (usize, usize))> {
    let (a, b) = pair;
    if a.shape != b.shape {
        return Err(shape_err(
            "random_patch",
            format!("{:?} vs {:?}", a.shape, b.shape),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (top, left) = patch_offset(a.h(), a.w(), &mut rng);
    let (ph, pw) = (a.h() / 4, a.w() / 4);
    Ok((
        (a.crop(top, left, ph, pw), b.crop(top, left, ph, pw)),
        (top, left),
    ))
}
