//! Central finite-difference checks of every layer, loss and network
//! builder, in double precision on seeded small shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svct_core::filtering::ramp_kernel;

use crate::builders::{build_patch_discriminator, build_unet, patch_offset};
use crate::error::Result;
use crate::layers::{Layer, LayerSpec, Mode, LEAKY_SLOPE};
use crate::losses::{
    adv_loss_discriminator, adv_loss_generator, content_loss, discriminator_loss_and_grad, dp_loss,
    generator_objective, hf_loss, GeneratorTerms, LossWeights,
};
use crate::network::{Network, Role};
use crate::tensor::Tensor;

pub const GRAD_TOL: f64 = 1e-3;
const STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRAD_TOL
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic[i]` with central differences of `f` in `x[i]` for the
/// listed indices; `f` reads `x` through the shared buffer.
fn fd_entries(
    x: &mut [f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut n = 0;
    for i in indices {
        let orig = x[i];
        x[i] = orig + STEP;
        let up = f(x);
        x[i] = orig - STEP;
        let down = f(x);
        x[i] = orig;
        worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * STEP)));
        n += 1;
    }
    (worst, n)
}

/// Uniform values with magnitude in `[0.05, 1]`, away from activation kinks.
fn away_from_zero(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn uniform(shape: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn report(name: impl Into<String>, parts: &[(f64, usize)]) -> GradReport {
    GradReport {
        name: name.into(),
        max_rel_error: parts.iter().map(|p| p.0).fold(0.0, f64::max),
        checked: parts.iter().map(|p| p.1).sum(),
    }
}

/// Randomizes every parameter and buffer so no check runs at a degenerate
/// initialization (zero-initialized convs, unit batch-norm scales).
fn randomize_layer(layer: &mut Layer<f64>, rng: &mut ChaCha8Rng) {
    for p in &mut layer.params {
        let bound = if p.name == "gamma" { (0.5, 1.5) } else { (-0.5, 0.5) };
        p.value.iter_mut().for_each(|v| *v = rng.gen_range(bound.0..bound.1));
    }
    for (b, buf) in layer.buffers.iter_mut().enumerate() {
        let range = if b == 0 { -0.3..0.3 } else { 0.5..2.0 };
        buf.iter_mut().for_each(|v| *v = rng.gen_range(range.clone()));
    }
}

fn randomize_network(net: &mut Network<f64>, rng: &mut ChaCha8Rng) {
    for layer in net.layers.iter_mut().flatten() {
        randomize_layer(layer, rng);
    }
}

/// Checks input and parameter gradients of `L = Σ r·layer(x)`.
pub fn check_layer(name: &str, spec: LayerSpec, shape: [usize; 4], mode: Mode, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Layer::<f64>::new(spec, &mut rng);
    randomize_layer(&mut layer, &mut rng);
    let x = away_from_zero(shape, &mut rng);
    let exec = Default::default();
    let (y, aux) = layer.forward(&x, mode, exec)?;
    let r = uniform(y.shape, -1.0, 1.0, &mut rng);
    layer.params.iter_mut().for_each(|p| p.zero_grad());
    let gx = layer.backward(&x, &y, &aux, &r, true, exec)?;

    let mut parts = Vec::new();
    let mut probe = layer.clone();
    let mut xs = x.data.clone();
    parts.push(fd_entries(&mut xs, &gx.data, 0..x.len(), |v| {
        let xt = Tensor { shape, data: v.to_vec() };
        dot(&probe.forward(&xt, mode, exec).expect("shape checked").0, &r)
    }));
    for pi in 0..layer.params.len() {
        let grad = layer.params[pi].grad.clone();
        let mut vals = layer.params[pi].value.clone();
        let mut probe = layer.clone();
        parts.push(fd_entries(&mut vals, &grad, 0..grad.len(), |v| {
            probe.params[pi].value.copy_from_slice(v);
            dot(&probe.forward(&x, mode, exec).expect("shape checked").0, &r)
        }));
    }
    Ok(report(name, &parts))
}

pub fn layer_checks(seed: u64) -> Result<Vec<GradReport>> {
    let conv3 = LayerSpec::conv3(2, 3);
    let conv4 = LayerSpec::conv4s2(2, 3);
    Ok(vec![
        check_layer("conv3", conv3, [2, 2, 6, 8], Mode::Train, seed)?,
        check_layer("conv4_s2", conv4, [2, 2, 8, 8], Mode::Train, seed + 1)?,
        check_layer("avg_pool2", LayerSpec::AvgPool2, [2, 3, 8, 6], Mode::Train, seed + 2)?,
        check_layer("bilinear_up2", LayerSpec::BilinearUp2, [2, 3, 4, 5], Mode::Train, seed + 3)?,
        check_layer("relu", LayerSpec::Relu, [2, 3, 8, 8], Mode::Train, seed + 4)?,
        check_layer(
            "leaky_relu",
            LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            [2, 3, 8, 8],
            Mode::Train,
            seed + 5,
        )?,
        check_layer("batch_norm_train", LayerSpec::BatchNorm { channels: 3 }, [4, 3, 8, 8], Mode::Train, seed + 6)?,
        check_layer("batch_norm_eval", LayerSpec::BatchNorm { channels: 3 }, [2, 3, 8, 8], Mode::Eval, seed + 7)?,
        check_layer("sigmoid", LayerSpec::Sigmoid, [2, 3, 8, 8], Mode::Train, seed + 8)?,
    ])
}

fn check_tensor_fn(
    name: &str,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> GradReport {
    let mut xs = x.data.clone();
    let part = fd_entries(&mut xs, &analytic.data, 0..x.len(), |v| {
        f(&Tensor {
            shape: x.shape,
            data: v.to_vec(),
        })
    });
    report(name, &[part])
}

fn tiny_disc(seed: u64, rng: &mut ChaCha8Rng) -> Result<Network<f64>> {
    let mut d = Network::new(build_patch_discriminator(2, 1)?, seed);
    randomize_network(&mut d, rng);
    Ok(d)
}

pub fn loss_checks(seed: u64) -> Result<Vec<GradReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let target = uniform([1, 2, 4, 6], 0.0, 1.0, &mut rng);
    let mut pred = target.clone();
    pred.add_assign(&away_from_zero(target.shape, &mut rng).scale(0.3));
    let (_, g) = content_loss(&pred, &target)?;
    out.push(check_tensor_fn("content", &pred, &g, |p| content_loss(p, &target).unwrap().0));

    let kernel = ramp_kernel(15, 1.0)?;
    let ts = uniform([1, 1, 16, 12], 0.0, 1.0, &mut rng);
    let ps = {
        let mut p = ts.clone();
        p.add_assign(&away_from_zero(ts.shape, &mut rng).scale(0.2));
        p
    };
    let (_, g) = hf_loss(&ps, &ts, &kernel)?;
    out.push(check_tensor_fn("hf", &ps, &g, |p| hf_loss(p, &ts, &kernel).unwrap().0));

    let shapes = [[1, 2, 4, 4], [1, 3, 2, 2], [1, 1, 3, 5]];
    let fa: Vec<_> = shapes.iter().map(|&s| uniform(s, -1.0, 1.0, &mut rng)).collect();
    let fb: Vec<_> = shapes.iter().map(|&s| uniform(s, -1.0, 1.0, &mut rng)).collect();
    let (_, grads) = dp_loss(&fa, &fb)?;
    let mut parts = Vec::new();
    for j in 0..fa.len() {
        let r = check_tensor_fn("dp", &fa[j], &grads[j], |p| {
            let mut f = fa.clone();
            f[j] = p.clone();
            dp_loss(&f, &fb).unwrap().0
        });
        parts.push((r.max_rel_error, r.checked));
    }
    out.push(report("dp", &parts));

    let dr = uniform([1, 1, 4, 4], 0.05, 0.95, &mut rng);
    let df = uniform([1, 1, 4, 4], 0.05, 0.95, &mut rng);
    let (_, gr, gf) = adv_loss_discriminator(&dr, &df)?;
    let a = check_tensor_fn("adv_d", &dr, &gr, |p| adv_loss_discriminator(p, &df).unwrap().0);
    let b = check_tensor_fn("adv_d", &df, &gf, |p| adv_loss_discriminator(&dr, p).unwrap().0);
    out.push(report("adv_d_global", &[(a.max_rel_error, a.checked), (b.max_rel_error, b.checked)]));
    let (_, g) = adv_loss_generator(&df)?;
    out.push(check_tensor_fn("adv_g_global", &df, &g, |p| adv_loss_generator(p).unwrap().0));

    // Local terms go through a discriminator on a shared window.
    let real = uniform([2, 1, 16, 16], 0.0, 1.0, &mut rng);
    let fake = uniform([2, 1, 16, 16], 0.0, 1.0, &mut rng);
    let window = patch_offset(16, 16, &mut rng);
    let mut dl = tiny_disc(seed + 11, &mut rng)?;
    let crop = |t: &Tensor<f64>| t.crop(window.0, window.1, 4, 4);
    let tape = dl.forward(&crop(&fake), Mode::Train)?;
    let (_, g_out) = adv_loss_generator(&tape.output)?;
    let mut g_full = Tensor::zeros(fake.shape);
    g_full.add_window(&dl.backward(&tape, Some(&g_out), &[], false)?, window.0, window.1);
    let mut probe = dl.clone();
    out.push(check_tensor_fn("adv_g_local", &fake, &g_full, |p| {
        let o = probe.forward(&crop(p), Mode::Train).unwrap().output;
        adv_loss_generator(&o).unwrap().0
    }));
    out.push(check_disc_params("adv_d_local", &mut dl, &crop(&real), &crop(&fake), &mut rng)?);
    let mut dg = tiny_disc(seed + 12, &mut rng)?;
    out.push(check_disc_params("adv_d_global_params", &mut dg, &real, &fake, &mut rng)?);

    // Weighted totals, with every term active.
    let weights = LossWeights::default();
    let target = uniform([2, 1, 16, 16], 0.0, 1.0, &mut rng);
    let pred = {
        let mut p = target.clone();
        p.add_assign(&away_from_zero(target.shape, &mut rng).scale(0.2));
        p
    };
    for (name, hf) in [("sin_total", Some(&kernel)), ("prn_total", None)] {
        let mut dg = tiny_disc(seed + 13, &mut rng)?;
        let mut dl = tiny_disc(seed + 14, &mut rng)?;
        let (_, _, grad) = generator_objective(
            &pred,
            &target,
            GeneratorTerms {
                weights,
                global: &mut dg,
                local: Some((&mut dl, window)),
                hf_kernel: hf,
            },
        )?;
        out.push(check_tensor_fn(name, &pred, &grad, |p| {
            generator_objective(
                p,
                &target,
                GeneratorTerms {
                    weights,
                    global: &mut dg,
                    local: Some((&mut dl, window)),
                    hf_kernel: hf,
                },
            )
            .unwrap()
            .1
        }));
    }
    Ok(out)
}

/// Discriminator loss gradient w.r.t. a sample of the network's parameters.
fn check_disc_params(
    name: &str,
    d: &mut Network<f64>,
    real: &Tensor<f64>,
    fake: &Tensor<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport> {
    d.zero_grad();
    discriminator_loss_and_grad(d, real, fake)?;
    let mut parts = Vec::new();
    let addresses: Vec<(usize, usize)> = d
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.as_ref().map(|l| (i, l.params.len())))
        .flat_map(|(i, n)| (0..n).map(move |j| (i, j)))
        .collect();
    for (li, pi) in addresses {
        let p = &d.layers[li].as_ref().expect("layer").params[pi];
        let grad = p.grad.clone();
        let mut vals = p.value.clone();
        let picks: Vec<usize> = (0..4).map(|_| rng.gen_range(0..grad.len())).collect();
        let mut probe = d.clone();
        parts.push(fd_entries(&mut vals, &grad, picks, |v| {
            probe.layers[li].as_mut().expect("layer").params[pi].value.copy_from_slice(v);
            let r = probe.forward(real, Mode::Train).unwrap().output;
            let f = probe.forward(fake, Mode::Train).unwrap().output;
            adv_loss_discriminator(&r, &f).unwrap().0
        }));
    }
    Ok(report(name, &parts))
}

/// Gradient of `Σ r·net(x)` w.r.t. the input (all entries) and `n_params`
/// randomly chosen parameter entries.
pub fn check_network(
    name: &str,
    net: &mut Network<f64>,
    shape: [usize; 4],
    n_params: usize,
    check_input: bool,
    seed: u64,
) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    randomize_network(net, &mut rng);
    let x = uniform(shape, -1.0, 1.0, &mut rng);
    let tape = net.forward(&x, Mode::Train)?;
    let r = uniform(tape.output.shape, -1.0, 1.0, &mut rng);
    net.zero_grad();
    let gx = net.backward(&tape, Some(&r), &[], true)?;
    let mut parts = Vec::new();
    let mut probe = net.clone();
    if check_input {
        let rep = check_tensor_fn(name, &x, &gx, |p| dot(&probe.forward(p, Mode::Train).unwrap().output, &r));
        parts.push((rep.max_rel_error, rep.checked));
    }
    let layer_ids: Vec<usize> = net
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.as_ref().is_some_and(|l| !l.params.is_empty()))
        .map(|(i, _)| i)
        .collect();
    for _ in 0..n_params {
        let li = layer_ids[rng.gen_range(0..layer_ids.len())];
        let layer = net.layers[li].as_ref().expect("layer");
        let pi = rng.gen_range(0..layer.params.len());
        let k = rng.gen_range(0..layer.params[pi].value.len());
        let grad = layer.params[pi].grad.clone();
        let mut vals = layer.params[pi].value.clone();
        parts.push(fd_entries(&mut vals, &grad, [k], |v| {
            probe.layers[li].as_mut().expect("layer").params[pi].value.copy_from_slice(v);
            dot(&probe.forward(&x, Mode::Train).unwrap().output, &r)
        }));
        probe.layers[li].as_mut().expect("layer").params[pi].value.copy_from_slice(&vals);
    }
    Ok(report(name, &parts))
}

pub fn network_checks(seed: u64, include_desk_unet: bool) -> Result<Vec<GradReport>> {
    let mut out = Vec::new();
    let mut d = Network::new(build_patch_discriminator(2, 1)?, seed);
    out.push(check_network("discriminator", &mut d, [1, 1, 16, 16], 12, true, seed)?);
    let mut u = Network::new(build_unet(Role::PrnGenerator, 1, 2, 1, Some(1))?, seed);
    out.push(check_network("unet_skips", &mut u, [2, 2, 16, 16], 8, true, seed + 1)?);
    if include_desk_unet {
        let mut u = Network::new(build_unet(Role::SinGenerator, 8, 1, 1, Some(0))?, seed);
        out.push(check_network("unet_desk", &mut u, [1, 1, 64, 192], 3, false, seed + 2)?);
    }
    Ok(out)
}

/// Every check in the suite.
pub fn run_all(seed: u64) -> Result<Vec<GradReport>> {
    let mut out = layer_checks(seed)?;
    out.extend(loss_checks(seed + 100)?);
    out.extend(network_checks(seed + 200, true)?);
    Ok(out)
}
