//! Training objectives. Every loss returns its value (accumulated in f64)
//! together with the gradient w.r.t. its differentiable inputs.

use svct_core::filtering::RampKernel;

use crate::error::{shape_err, NnError, Result};
use crate::layers::Mode;
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[ADV_EPS, 1 - ADV_EPS]` before the log.
pub const ADV_EPS: f64 = 1e-7;

fn same_shape<T>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape == b.shape {
        Ok(())
    } else {
        Err(shape_err(what, format!("{:?} vs {:?}", a.shape, b.shape)))
    }
}

/// Mean absolute error. The gradient at ties is zero.
pub fn content_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape("content_loss", pred, target)?;
    let inv = 1.0 / pred.len() as f64;
    let mut sum = 0.0;
    let grad = Tensor::from_fn(pred.shape, |i| {
        let d = pred.data[i].as_f64() - target.data[i].as_f64();
        sum += d.abs();
        T::lit(if d > 0.0 {
            inv
        } else if d < 0.0 {
            -inv
        } else {
            0.0
        })
    });
    Ok((sum * inv, grad))
}

/// Ramp-filters every column along the height (detector) axis with zero
/// padding. The kernel is symmetric, so this map is its own adjoint.
pub fn ramp_filter_rows<T: Scalar>(x: &Tensor<T>, kernel: &RampKernel) -> Tensor<T> {
    let (h, w) = (x.h(), x.w());
    let hw = kernel.half_width as isize;
    let mut out = Tensor::zeros(x.shape);
    let mut col = vec![0.0f64; h];
    for nc in 0..x.n() * x.c() {
        let base = nc * h * w;
        for j in 0..w {
            for (r, v) in col.iter_mut().enumerate() {
                *v = x.data[base + r * w + j].as_f64();
            }
            for k in 0..h as isize {
                let lo = (k - hw).max(0);
                let hi = (k + hw).min(h as isize - 1);
                let mut acc = 0.0;
                for m in lo..=hi {
                    acc += col[m as usize] * kernel.taps[(k - m + hw) as usize];
                }
                out.data[base + k as usize * w + j] = T::lit(acc * kernel.spacing);
            }
        }
    }
    out
}

/// `mean |ramp(pred) - ramp(target)|` with the ramp applied along height.
pub fn hf_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    kernel: &RampKernel,
) -> Result<(f64, Tensor<T>)> {
    same_shape("hf_loss", pred, target)?;
    if kernel.half_width + 1 < pred.h() {
        return Err(shape_err(
            "hf_loss",
            format!(
                "kernel half width {} is shorter than the {} detector rows",
                kernel.half_width,
                pred.h()
            ),
        ));
    }
    let (value, g) = content_loss(&ramp_filter_rows(pred, kernel), &ramp_filter_rows(target, kernel))?;
    Ok((value, ramp_filter_rows(&g, kernel)))
}

/// Mean over layers of the per-layer mean squared error. Gradients are
/// returned for `pred` only; the target features are constants.
pub fn dp_loss<T: Scalar>(pred: &[Tensor<T>], target: &[Tensor<T>]) -> Result<(f64, Vec<Tensor<T>>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(shape_err(
            "dp_loss",
            format!("{} predicted vs {} target feature maps", pred.len(), target.len()),
        ));
    }
    let n_layers = pred.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (a, b) in pred.iter().zip(target) {
        same_shape("dp_loss", a, b)?;
        let inv = 1.0 / a.len() as f64;
        let mut sse = 0.0;
        grads.push(Tensor::from_fn(a.shape, |i| {
            let d = a.data[i].as_f64() - b.data[i].as_f64();
            sse += d * d;
            T::lit(2.0 * d * inv / n_layers)
        }));
        total += sse * inv;
    }
    Ok((total / n_layers, grads))
}

fn check_probabilities<T: Scalar>(what: &str, p: &Tensor<T>) -> Result<()> {
    match p.data.iter().find(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
        Some(bad) => Err(NnError::Loss(format!(
            "{what}: discriminator output {} is not a probability",
            bad.as_f64()
        ))),
        None => Ok(()),
    }
}

/// Mean of `log(clamp(p))` or `log(1 - clamp(p))` and its gradient; the
/// gradient is zero where the clamp is active.
fn mean_log<T: Scalar>(p: &Tensor<T>, complement: bool) -> (f64, Tensor<T>) {
    let inv = 1.0 / p.len() as f64;
    let mut sum = 0.0;
    let grad = Tensor::from_fn(p.shape, |i| {
        let v = p.data[i].as_f64();
        let c = v.clamp(ADV_EPS, 1.0 - ADV_EPS);
        let active = c != v;
        let (l, d) = if complement {
            ((1.0 - c).ln(), -1.0 / (1.0 - c))
        } else {
            (c.ln(), 1.0 / c)
        };
        sum += l;
        T::lit(if active { 0.0 } else { d * inv })
    });
    (sum * inv, grad)
}

/// `-(mean log d_real + mean log(1 - d_fake)) / 2`, with gradients for both maps.
pub fn adv_loss_discriminator<T: Scalar>(
    d_real: &Tensor<T>,
    d_fake: &Tensor<T>,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    check_probabilities("adv_loss_discriminator", d_real)?;
    check_probabilities("adv_loss_discriminator", d_fake)?;
    let (lr, gr) = mean_log(d_real, false);
    let (lf, gf) = mean_log(d_fake, true);
    let half = T::lit(-0.5);
    Ok((-0.5 * (lr + lf), gr.scale(half), gf.scale(half)))
}

/// `mean log(1 - d_fake)`, the saturating generator loss.
pub fn adv_loss_generator<T: Scalar>(d_fake: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    check_probabilities("adv_loss_generator", d_fake)?;
    Ok(mean_log(d_fake, true))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub adversarial: f64,
    pub content: f64,
    pub dp: f64,
    pub hf: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adversarial: 1.0,
            content: 50.0,
            dp: 20.0,
            hf: 50.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.adversarial, self.content, self.dp, self.hf];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(NnError::Loss(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

/// Component values of one generator evaluation. `adversarial` is the sum
/// of the global and local terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub adversarial: f64,
    pub adversarial_global: f64,
    pub adversarial_local: f64,
    pub content: f64,
    pub dp: f64,
    pub hf: f64,
}

pub fn sin_objective(parts: &LossParts, w: &LossWeights) -> f64 {
    w.adversarial * parts.adversarial + w.content * parts.content + w.dp * parts.dp + w.hf * parts.hf
}

pub fn prn_objective(parts: &LossParts, w: &LossWeights) -> f64 {
    w.adversarial * parts.adversarial + w.content * parts.content + w.dp * parts.dp
}

/// Generator and discriminator adversarial values on one shared window.
pub fn local_adv_losses<T: Scalar>(
    generated: &Tensor<T>,
    target: &Tensor<T>,
    disc_local: &mut Network<T>,
    window: (usize, usize),
) -> Result<(f64, f64)> {
    same_shape("local_adv_losses", generated, target)?;
    let (ph, pw) = (generated.h() / 4, generated.w() / 4);
    let (top, left) = window;
    if top + ph > generated.h() || left + pw > generated.w() {
        return Err(shape_err("local_adv_losses", format!("window {window:?} out of range")));
    }
    let fake = disc_local.forward(&generated.crop(top, left, ph, pw), Mode::Train)?.output;
    let real = disc_local.forward(&target.crop(top, left, ph, pw), Mode::Train)?.output;
    let (g, _) = adv_loss_generator(&fake)?;
    let (d, _, _) = adv_loss_discriminator(&real, &fake)?;
    Ok((g, d))
}

/// What the generator objective is evaluated with.
pub struct GeneratorTerms<'a, T> {
    pub weights: LossWeights,
    /// Discriminator on the full output; also supplies the DP features.
    pub global: &'a mut Network<T>,
    /// Discriminator on a `⌊H/4⌋×⌊W/4⌋` window at the given offset.
    pub local: Option<(&'a mut Network<T>, (usize, usize))>,
    /// Ramp kernel for the high-frequency term (SIN only).
    pub hf_kernel: Option<&'a RampKernel>,
}

/// Weighted generator objective (the SIN total when `hf_kernel` is set and
/// the PRN total otherwise) and its gradient w.r.t. `pred`. Discriminators
/// run in training mode and receive no parameter gradients.
pub fn generator_objective<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    terms: GeneratorTerms<'_, T>,
) -> Result<(LossParts, f64, Tensor<T>)> {
    let w = terms.weights;
    w.validate()?;
    let mut parts = LossParts::default();

    let (c, gc) = content_loss(pred, target)?;
    parts.content = c;
    let mut grad = gc.scale(T::lit(w.content));

    if let Some(kernel) = terms.hf_kernel {
        let (h, gh) = hf_loss(pred, target, kernel)?;
        parts.hf = h;
        grad.add_assign(&gh.scale(T::lit(w.hf)));
    }

    let d = terms.global;
    let fake_tape = d.forward(pred, Mode::Train)?;
    let real_features = d.forward(target, Mode::Train)?.features(&d.spec);
    let (ag, g_out) = adv_loss_generator(&fake_tape.output)?;
    let (dp, g_feat) = dp_loss(&fake_tape.features(&d.spec), &real_features)?;
    parts.adversarial_global = ag;
    parts.dp = dp;
    let g_feat: Vec<_> = g_feat.iter().map(|g| g.scale(T::lit(w.dp))).collect();
    let g_in = d.backward(&fake_tape, Some(&g_out.scale(T::lit(w.adversarial))), &g_feat, false)?;
    grad.add_assign(&g_in);

    if let Some((dl, (top, left))) = terms.local {
        let (ph, pw) = (pred.h() / 4, pred.w() / 4);
        let patch = pred.crop(top, left, ph, pw);
        let tape = dl.forward(&patch, Mode::Train)?;
        let (al, g_out) = adv_loss_generator(&tape.output)?;
        parts.adversarial_local = al;
        let g_patch = dl.backward(&tape, Some(&g_out.scale(T::lit(w.adversarial))), &[], false)?;
        grad.add_window(&g_patch, top, left);
    }
    parts.adversarial = parts.adversarial_global + parts.adversarial_local;

    let total = if terms.hf_kernel.is_some() {
        sin_objective(&parts, &w)
    } else {
        prn_objective(&parts, &w)
    };
    Ok((parts, total, grad))
}

/// Discriminator loss on a real and a fake batch (two separate forward
/// passes, so batch norm sees each batch on its own). Parameter gradients
/// are accumulated into `disc`.
pub fn discriminator_loss_and_grad<T: Scalar>(
    disc: &mut Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<f64> {
    let real_tape = disc.forward(real, Mode::Train)?;
    let fake_tape = disc.forward(fake, Mode::Train)?;
    let (loss, gr, gf) = adv_loss_discriminator(&real_tape.output, &fake_tape.output)?;
    disc.backward(&real_tape, Some(&gr), &[], true)?;
    disc.backward(&fake_tape, Some(&gf), &[], true)?;
    Ok(loss)
}
