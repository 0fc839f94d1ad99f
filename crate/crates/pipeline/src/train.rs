//! Adversarial training with the incremental discriminator schedule and the
//! two-step (SIN, then PRN) driver.
//!
//! PRNG draw order per generator iteration: `batch_size` sample indices,
//! `batch_size` per-sample seeds, then the local-patch offset (row, column)
//! when a local discriminator is present. Samples are built from their own
//! seeds, so batch assembly may run in parallel without changing results.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svct_core::config::Config;
use svct_core::filtering::{ramp_kernel, RampKernel};
use svct_core::par;
use svct_core::sinogram_ops::build_cascade;
use svct_core::{Execution, Image};
use svct_nn::adam::{Adam, AdamConfig};
use svct_nn::builders::{build_patch_discriminator, build_unet, patch_offset};
use svct_nn::losses::{discriminator_loss_and_grad, generator_objective, GeneratorTerms, LossWeights};
use svct_nn::{Mode, Network, Role, Tensor};

use crate::augment::{random_affine, AffineParams};
use crate::data::{
    acquire, cascade_to_tensor, crop_padding, image_to_tensor, sinogram_to_tensor, tensor_to_sinogram,
    DeskGeometry,
};
use crate::error::{PipelineError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Generator iterations (fixed budget).
    pub iterations: usize,
    /// Period `k` of the schedule: iteration `i` runs `⌈i/k⌉` discriminator updates.
    pub schedule_period: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub base_channels: usize,
    pub disc_base_channels: usize,
    /// Random affine augmentation of training phantoms.
    pub augment: Option<AffineParams>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            iterations: 200,
            schedule_period: 10,
            batch_size: 4,
            seed: 0,
            weights: LossWeights::default(),
            base_channels: 8,
            disc_base_channels: 8,
            augment: Some(AffineParams::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.weights.validate()?;
        if self.iterations == 0 || self.schedule_period == 0 || self.batch_size == 0 {
            return Err(PipelineError::Config(
                "iterations, schedule_period and batch_size must be at least 1".into(),
            ));
        }
        if self.base_channels == 0 || self.disc_base_channels == 0 {
            return Err(PipelineError::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Reads `train.*` keys, falling back to the defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let augment = if cfg.get_or("train.augment", true)? {
            Some(AffineParams::default())
        } else {
            None
        };
        let c = Self {
            adam: AdamConfig {
                learning_rate: cfg.get_or("train.learning_rate", d.adam.learning_rate)?,
                beta1: cfg.get_or("train.beta1", d.adam.beta1)?,
                beta2: cfg.get_or("train.beta2", d.adam.beta2)?,
                epsilon: cfg.get_or("train.epsilon", d.adam.epsilon)?,
            },
            iterations: cfg.get_or("train.iterations", d.iterations)?,
            schedule_period: cfg.get_or("train.schedule_period", d.schedule_period)?,
            batch_size: cfg.get_or("train.batch_size", d.batch_size)?,
            seed: cfg.get_or("train.seed", d.seed)?,
            weights: LossWeights {
                adversarial: cfg.get_or("loss.adversarial", d.weights.adversarial)?,
                content: cfg.get_or("loss.content", d.weights.content)?,
                dp: cfg.get_or("loss.dp", d.weights.dp)?,
                hf: cfg.get_or("loss.hf", d.weights.hf)?,
            },
            base_channels: cfg.get_or("train.base_channels", d.base_channels)?,
            disc_base_channels: cfg.get_or("train.disc_base_channels", d.disc_base_channels)?,
            augment,
        };
        c.validate()?;
        Ok(c)
    }
}

/// `⌈i/k⌉`.
pub fn disc_updates(iteration: usize, period: usize) -> usize {
    iteration.div_ceil(period)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn push(&mut self, iteration: usize, name: &'static str, value: f64) {
        self.rows.push(TraceRow { iteration, name, value });
    }

    /// Values of one loss in iteration order.
    pub fn series(&self, name: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.name == name).map(|r| r.value).collect()
    }

    /// CSV with header `iteration,loss_name,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "loss_name", "value"])?;
        for r in &self.rows {
            out.write_record([r.iteration.to_string(), r.name.to_string(), format!("{:e}", r.value)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Source of training pairs, each a batch of one.
pub trait PairSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds pair `index`; any randomness comes from `seed`.
    fn pair(&self, index: usize, seed: u64) -> Result<(Tensor<f32>, Tensor<f32>)>;
}

/// Generator, its discriminators and the objective variant.
#[derive(Clone, Debug)]
pub struct GanModels {
    pub generator: Network<f32>,
    pub global: Network<f32>,
    /// Local (patch) discriminator; present for SIN.
    pub local: Option<Network<f32>>,
    /// High-frequency loss kernel; present for SIN.
    pub hf_kernel: Option<RampKernel>,
}

impl GanModels {
    /// SIN: 1-channel residual U-Net on `size × padded_views` sinograms,
    /// global and local discriminators, HF loss along the detector axis.
    pub fn sin(g: &DeskGeometry, cfg: &TrainConfig) -> Result<Self> {
        let seed = cfg.seed;
        Ok(Self {
            generator: Network::new(build_unet(Role::SinGenerator, cfg.base_channels, 1, 1, Some(0))?, seed ^ 0x51),
            global: Network::new(build_patch_discriminator(cfg.disc_base_channels, 1)?, seed ^ 0xd1),
            local: Some(Network::new(build_patch_discriminator(cfg.disc_base_channels, 1)?, seed ^ 0xd2)),
            hf_kernel: Some(ramp_kernel(g.size - 1, 1.0)?),
        })
    }

    /// PRN: 4-channel cascade in, residual on the densest FBP channel.
    pub fn prn(cfg: &TrainConfig) -> Result<Self> {
        let seed = cfg.seed;
        Ok(Self {
            generator: Network::new(build_unet(Role::PrnGenerator, cfg.base_channels, 4, 1, Some(3))?, seed ^ 0x52),
            global: Network::new(build_patch_discriminator(cfg.disc_base_channels, 1)?, seed ^ 0xd3),
            local: None,
            hf_kernel: None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub trace: LossTrace,
    /// Discriminator updates performed at each generator iteration.
    pub disc_updates: Vec<usize>,
}

fn assemble_batch(data: &dyn PairSource, indices: &[usize], seeds: &[u64]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let pairs: Vec<_> = par::map_indexed(Execution::default(), indices.len(), |b| data.pair(indices[b], seeds[b]));
    let pairs: Vec<_> = pairs.into_iter().collect::<Result<_>>()?;
    let xs: Vec<_> = pairs.iter().map(|p| p.0.clone()).collect();
    let ys: Vec<_> = pairs.iter().map(|p| p.1.clone()).collect();
    Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
}

/// Alternating training. At generator iteration `i` (1-based) every
/// discriminator is updated `⌈i/k⌉` times on the current batch and the
/// detached generator output, then the generator takes one step on its
/// weighted objective.
pub fn train_gan_incremental(models: &mut GanModels, data: &dyn PairSource, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_g = Adam::new(cfg.adam);
    let mut opt_d = Adam::new(cfg.adam);
    let mut opt_l = Adam::new(cfg.adam);
    let mut report = TrainReport::default();

    for i in 1..=cfg.iterations {
        let indices: Vec<usize> = (0..cfg.batch_size).map(|_| rng.gen_range(0..data.len())).collect();
        let seeds: Vec<u64> = (0..cfg.batch_size).map(|_| rng.gen()).collect();
        let (x, y) = assemble_batch(data, &indices, &seeds)?;
        let window = models.local.as_ref().map(|_| patch_offset(y.h(), y.w(), &mut rng));
        let (ph, pw) = (y.h() / 4, y.w() / 4);

        let tape = models.generator.forward(&x, Mode::Train)?;
        let fake = &tape.output;
        if !fake.is_finite() || !y.is_finite() {
            return Err(PipelineError::Diverged {
                iteration: i,
                message: "non-finite generator output or target".into(),
                trace: Box::new(report.trace),
            });
        }

        let n_disc = disc_updates(i, cfg.schedule_period);
        let (mut d_global, mut d_local) = (0.0, 0.0);
        for _ in 0..n_disc {
            models.global.zero_grad();
            d_global = discriminator_loss_and_grad(&mut models.global, &y, fake)?;
            opt_d.step(models.global.params_mut())?;
            if let (Some(dl), Some((top, left))) = (models.local.as_mut(), window) {
                dl.zero_grad();
                d_local =
                    discriminator_loss_and_grad(dl, &y.crop(top, left, ph, pw), &fake.crop(top, left, ph, pw))?;
                opt_l.step(dl.params_mut())?;
            }
        }
        report.disc_updates.push(n_disc);

        let (parts, total, grad) = generator_objective(
            fake,
            &y,
            GeneratorTerms {
                weights: cfg.weights,
                global: &mut models.global,
                local: models.local.as_mut().zip(window),
                hf_kernel: models.hf_kernel.as_ref(),
            },
        )?;
        models.generator.zero_grad();
        models.generator.backward(&tape, Some(&grad), &[], true)?;
        opt_g.step(models.generator.params_mut())?;

        let t = &mut report.trace;
        t.push(i, "content", parts.content);
        if models.hf_kernel.is_some() {
            t.push(i, "hf", parts.hf);
        }
        t.push(i, "dp", parts.dp);
        t.push(i, "adv_global", parts.adversarial_global);
        if models.local.is_some() {
            t.push(i, "adv_local", parts.adversarial_local);
            t.push(i, "d_local", d_local);
        }
        t.push(i, "adv", parts.adversarial);
        t.push(i, "total", total);
        t.push(i, "d_global", d_global);
        t.push(i, "d_updates", n_disc as f64);

        if let Some(bad) = t.rows.iter().rev().take_while(|r| r.iteration == i).find(|r| !r.value.is_finite()) {
            return Err(PipelineError::Diverged {
                iteration: i,
                message: format!("{} = {}", bad.name, bad.value),
                trace: Box::new(report.trace),
            });
        }
        if !models.generator.params().all(|p| p.value.iter().all(|v| v.is_finite())) {
            return Err(PipelineError::Diverged {
                iteration: i,
                message: "non-finite generator parameters".into(),
                trace: Box::new(report.trace),
            });
        }
    }
    Ok(report)
}

/// SIN pairs: `(TE(linear_upsample(sparse)), TE(full))` of (augmented) phantoms.
pub struct SinSource<'a> {
    pub phantoms: &'a [Image],
    pub geometry: DeskGeometry,
    pub augment: Option<AffineParams>,
}

fn augmented(img: &Image, augment: &Option<AffineParams>, seed: u64) -> Image {
    match augment {
        Some(p) => random_affine(img, p, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => img.clone(),
    }
}

impl PairSource for SinSource<'_> {
    fn len(&self) -> usize {
        self.phantoms.len()
    }

    fn pair(&self, index: usize, seed: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let g = &self.geometry;
        let a = acquire(&augmented(&self.phantoms[index], &self.augment, seed), g)?;
        let s = g.sinogram_scale();
        Ok((sinogram_to_tensor(&a.sin_input, s), sinogram_to_tensor(&a.sin_target, s)))
    }
}

/// Applies a SIN network to a padded sinogram tensor and returns the
/// cropped full-view sinogram.
pub fn inpaint(sin: &mut Network<f32>, input: &svct_core::Sinogram, g: &DeskGeometry) -> Result<svct_core::Sinogram> {
    let s = g.sinogram_scale();
    let out = sin.infer(&sinogram_to_tensor(input, s))?;
    crop_padding(&tensor_to_sinogram(&out, 0, input.angles.clone(), s)?, g)
}

/// PRN pairs: cascades built through a frozen SIN, and the phantom.
pub struct PrnSource<'a> {
    pub phantoms: &'a [Image],
    pub geometry: DeskGeometry,
    pub augment: Option<AffineParams>,
    pub sin: &'a Network<f32>,
}

impl PairSource for PrnSource<'_> {
    fn len(&self) -> usize {
        self.phantoms.len()
    }

    fn pair(&self, index: usize, seed: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let g = &self.geometry;
        let phantom = augmented(&self.phantoms[index], &self.augment, seed);
        let a = acquire(&phantom, g)?;
        let mut sin = self.sin.clone();
        let inpainted = inpaint(&mut sin, &a.sin_input, g)?;
        let cascade = build_cascade(&a.sparse, &inpainted, &g.geometry()?)?;
        Ok((cascade_to_tensor(&cascade), image_to_tensor(&phantom)))
    }
}

pub fn train_sin(phantoms: &[Image], g: &DeskGeometry, cfg: &TrainConfig) -> Result<(GanModels, TrainReport)> {
    g.validate()?;
    let mut models = GanModels::sin(g, cfg)?;
    let source = SinSource {
        phantoms,
        geometry: *g,
        augment: cfg.augment,
    };
    let report = train_gan_incremental(&mut models, &source, cfg)?;
    Ok((models, report))
}

pub fn train_prn(
    phantoms: &[Image],
    g: &DeskGeometry,
    sin: &Network<f32>,
    cfg: &TrainConfig,
) -> Result<(GanModels, TrainReport)> {
    g.validate()?;
    let mut models = GanModels::prn(cfg)?;
    let source = PrnSource {
        phantoms,
        geometry: *g,
        augment: cfg.augment,
        sin,
    };
    let report = train_gan_incremental(&mut models, &source, cfg)?;
    Ok((models, report))
}

#[derive(Clone, Debug)]
pub struct TwoStepResult {
    pub sin: GanModels,
    pub sin_report: TrainReport,
    pub prn: GanModels,
    pub prn_report: TrainReport,
}

/// SIN first; PRN then trains on cascades from the frozen SIN.
pub fn train_two_step(
    phantoms: &[Image],
    g: &DeskGeometry,
    sin_cfg: &TrainConfig,
    prn_cfg: &TrainConfig,
) -> Result<TwoStepResult> {
    let (sin, sin_report) = train_sin(phantoms, g, sin_cfg)?;
    let (prn, prn_report) = train_prn(phantoms, g, &sin.generator, prn_cfg)?;
    Ok(TwoStepResult {
        sin,
        sin_report,
        prn,
        prn_report,
    })
}
