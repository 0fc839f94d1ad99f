use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use svct_core::baselines::{fista_tv, FistaConfig};
use svct_core::config::Config;
use svct_core::filtering::fbp;
use svct_core::io::{
    find, image_from_record, image_record, parse_pgm, parse_records, sinogram_from_records,
    sinogram_records, write_pgm, write_records, TensorRecord,
};
use svct_core::metrics::report;
use svct_core::phantom::{make_phantom, PhantomKind, PhantomSpec};
use svct_core::sinogram_ops::{linear_upsample_angular, sparse_sample, two_ends_extend};
use svct_core::{radon_forward, Geometry, Image, Sinogram};
use svct_nn::gradcheck::run_all;
use svct_nn::Role;
use svct_pipeline::checkpoint::{load_generator, save_stage};
use svct_pipeline::data::random_phantoms;
use svct_pipeline::inference::run_pipeline;
use svct_pipeline::train::{train_prn, train_sin, TrainConfig, TrainReport};
use svct_pipeline::DeskGeometry;

/// Sparse-view CT toolkit. Files are tensor files (`.ctt`); `-` means
/// stdin or stdout.
#[derive(Parser)]
#[command(name = "svct", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// INI-style `key = value` configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Io {
    #[arg(short, long, default_value = "-")]
    input: String,
    #[arg(short, long, default_value = "-")]
    output: String,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom image.
    Phantom {
        #[arg(long, default_value = "shepp_logan")]
        kind: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Ellipse count for random phantoms.
        #[arg(long, default_value_t = 8)]
        ellipses: usize,
        #[arg(short, long, default_value = "-")]
        output: String,
        /// Also write a 16-bit PGM.
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Parallel-beam projection over `[0, π)`.
    Project {
        #[arg(long, default_value_t = 180)]
        angles: usize,
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: Common,
    },
    /// Keep every k-th view.
    Sparse {
        #[arg(long, default_value_t = 8)]
        every: usize,
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: Common,
    },
    /// Filtered backprojection onto a detector-count sized image.
    Fbp {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Linear angular interpolation to a denser view grid.
    Upsample {
        #[arg(long, default_value_t = 180)]
        views: usize,
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: Common,
    },
    /// Two-ends flipping extension.
    TeExtend {
        #[arg(long, default_value_t = 6)]
        pad: usize,
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: Common,
    },
    /// FISTA with total-variation regularization.
    Fista {
        #[arg(long)]
        tv_weight: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        /// CSV of the objective per iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: Common,
    },
    /// Train the sinogram inpainting network on random phantoms.
    TrainSin {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the refinement network behind a trained SIN checkpoint.
    TrainPrn {
        #[arg(long)]
        sin: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Full reconstruction of a sparse sinogram.
    Recon {
        #[arg(long)]
        sin: PathBuf,
        #[arg(long)]
        prn: PathBuf,
        /// Write every intermediate stage here.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        common: Common,
    },
    /// PSNR and SSIM inside the circular ROI, as one CSV row.
    Eval {
        #[arg(long)]
        pred: String,
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "case")]
        case_id: String,
        #[arg(long, default_value = "pred")]
        method: String,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient suite for every layer and loss.
    Gradcheck {
        /// Run the whole suite (the only mode).
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Number of random-ellipse training phantoms.
    #[arg(long)]
    phantoms: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
    /// Loss trace CSV (`iteration,loss_name,value`).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn read_bytes(path: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path == "-" {
        io::stdin().read_to_end(&mut buf).context("reading stdin")?;
    } else {
        File::open(path)
            .with_context(|| format!("opening {path}"))?
            .read_to_end(&mut buf)
            .with_context(|| format!("reading {path}"))?;
    }
    Ok(buf)
}

fn write_out(path: &str, records: &[TensorRecord]) -> Result<()> {
    if path == "-" {
        let mut out = io::stdout().lock();
        write_records(&mut out, records)?;
        out.flush()?;
    } else {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {path}"))?);
        write_records(&mut w, records)?;
        w.flush()?;
    }
    Ok(())
}

fn label(path: &str) -> &str {
    if path == "-" {
        "<stdin>"
    } else {
        path
    }
}

fn read_sinogram(path: &str) -> Result<Sinogram> {
    let records = parse_records(&read_bytes(path)?, label(path))?;
    Ok(sinogram_from_records(&records).with_context(|| format!("{path} holds no sinogram"))?)
}

/// Tensor-file image record or binary PGM.
fn read_image(path: &str) -> Result<Image> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P5") {
        let (rows, cols, data) = parse_pgm(&bytes, label(path))?;
        if rows != cols {
            bail!("{path}: image is {rows}x{cols}, expected square");
        }
        return Ok(Image::from_vec(rows, data)?);
    }
    let records = parse_records(&bytes, label(path))?;
    let rec = find(&records, "image")
        .or_else(|| records.first())
        .with_context(|| format!("{path} holds no records"))?;
    Ok(image_from_record(rec)?)
}

fn write_image_pgm(path: &Path, img: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_pgm(&mut w, img.size, img.size, &img.pixels, 0.0, 1.0)?;
    Ok(w.flush()?)
}

fn load_config(common: &Common) -> Result<Config> {
    Ok(match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn write_image_outputs(img: &Image, output: &str, pgm: &Option<PathBuf>) -> Result<()> {
    write_out(output, &[image_record(img)])?;
    if let Some(p) = pgm {
        write_image_pgm(p, img)?;
    }
    Ok(())
}

/// Config file, then flag overrides, then validation.
fn training_setup(t: &TrainArgs) -> Result<(TrainConfig, DeskGeometry, Vec<Image>)> {
    let mut cfg = load_config(&t.common)?;
    cfg.set("train.seed", t.common.seed);
    let overrides = [
        ("train.iterations", t.iterations),
        ("train.batch_size", t.batch_size),
        ("train.base_channels", t.base_channels),
        ("geometry.size", t.size),
        ("data.phantoms", t.phantoms),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, v);
        }
    }
    let train = TrainConfig::from_config(&cfg)?;
    let g = DeskGeometry::from_config(&cfg)?;
    let count: usize = cfg.get_or("data.phantoms", 64)?;
    let data_seed: u64 = cfg.get_or("data.seed", t.common.seed)?;
    Ok((train, g, random_phantoms(count, g.size, data_seed)))
}

fn write_trace(path: &Option<PathBuf>, report: &TrainReport) -> Result<()> {
    if let Some(p) = path {
        report
            .trace
            .write_csv(File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom {
            kind,
            size,
            ellipses,
            output,
            pgm,
            common,
        } => {
            let kind: PhantomKind = kind.parse()?;
            let spec = match kind {
                PhantomKind::SheppLogan => PhantomSpec::shepp_logan(size),
                PhantomKind::RandomEllipses => PhantomSpec::random(size, ellipses, common.seed),
            };
            write_image_outputs(&make_phantom(&spec), &output, &pgm)
        }
        Command::Project { angles, io, .. } => {
            let img = read_image(&io.input)?;
            let sino = radon_forward(&img, &Geometry::parallel(img.size, angles)?)?;
            write_out(&io.output, &sinogram_records(&sino))
        }
        Command::Sparse { every, io, .. } => {
            let sino = sparse_sample(&read_sinogram(&io.input)?, every)?;
            write_out(&io.output, &sinogram_records(&sino))
        }
        Command::Fbp { io, pgm, .. } => {
            let sino = read_sinogram(&io.input)?;
            let geom = Geometry::new(
                sino.num_detectors,
                sino.num_detectors,
                sino.detector_spacing,
                sino.angles.clone(),
            )?;
            write_image_outputs(&fbp(&sino, &geom)?, &io.output, &pgm)
        }
        Command::Upsample { views, io, .. } => {
            let sino = linear_upsample_angular(&read_sinogram(&io.input)?, views)?;
            write_out(&io.output, &sinogram_records(&sino))
        }
        Command::TeExtend { pad, io, .. } => {
            let sino = two_ends_extend(&read_sinogram(&io.input)?, pad)?;
            write_out(&io.output, &sinogram_records(&sino))
        }
        Command::Fista {
            tv_weight,
            iterations,
            trace,
            pgm,
            io,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(w) = tv_weight {
                cfg.set("fista.tv_weight", w);
            }
            if let Some(n) = iterations {
                cfg.set("fista.outer_iterations", n);
            }
            let fcfg = FistaConfig::from_config(&cfg)?;
            let sino = read_sinogram(&io.input)?;
            let geom = Geometry::new(
                sino.num_detectors,
                sino.num_detectors,
                sino.detector_spacing,
                sino.angles.clone(),
            )?;
            let result = fista_tv(&sino, &geom, &fcfg)?;
            if let Some(p) = trace {
                let mut w = csv::Writer::from_path(&p)?;
                w.write_record(["iteration", "objective"])?;
                for (i, v) in result.objective.iter().enumerate() {
                    w.write_record([i.to_string(), format!("{v:e}")])?;
                }
                w.flush()?;
            }
            write_image_outputs(&result.image, &io.output, &pgm)
        }
        Command::TrainSin { train } => {
            let (cfg, g, phantoms) = training_setup(&train)?;
            let (models, report) = train_sin(&phantoms, &g, &cfg)?;
            save_stage(&train.output, &models, &g)?;
            write_trace(&train.trace, &report)
        }
        Command::TrainPrn { sin, train } => {
            let (cfg, g, phantoms) = training_setup(&train)?;
            let (sin_net, sin_geom) = load_generator(&sin, Role::SinGenerator)?;
            if sin_geom != g {
                bail!("{} was trained for {sin_geom:?}, configuration is {g:?}", sin.display());
            }
            let (models, report) = train_prn(&phantoms, &g, &sin_net, &cfg)?;
            save_stage(&train.output, &models, &g)?;
            write_trace(&train.trace, &report)
        }
        Command::Recon {
            sin,
            prn,
            dump_dir,
            pgm,
            io,
            ..
        } => {
            let (mut sin_net, g) = load_generator(&sin, Role::SinGenerator)?;
            let (mut prn_net, g2) = load_generator(&prn, Role::PrnGenerator)?;
            if g != g2 {
                bail!("SIN and PRN checkpoints disagree on geometry: {g:?} vs {g2:?}");
            }
            let sparse = read_sinogram(&io.input)?;
            let stages = run_pipeline(&sparse, &mut sin_net, &mut prn_net, &g, dump_dir.as_deref())?;
            write_image_outputs(&stages.image, &io.output, &pgm)
        }
        Command::Eval {
            pred,
            target,
            case_id,
            method,
            ..
        } => {
            let r = report(&read_image(&pred)?, &read_image(&target)?)?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["case_id", "method", "psnr_db", "ssim"])?;
            w.write_record([case_id, method, format!("{:.12}", r.psnr_db), format!("{:.12}", r.ssim)])?;
            w.flush()?;
            Ok(())
        }
        Command::Gradcheck { all, common } => {
            if !all {
                bail!("pass --all to run the gradient suite");
            }
            let reports = run_all(common.seed)?;
            let mut failed = 0;
            for r in &reports {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!("{status} {:<22} max rel err {:.3e} ({} entries)", r.name, r.max_rel_error, r.checked);
                failed += usize::from(!r.passed());
            }
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svct: {e:#}");
            ExitCode::FAILURE
        }
    }
}
