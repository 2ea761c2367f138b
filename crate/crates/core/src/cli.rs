//! Command-line surface: `train`, `translate`, `laplacian`, `gradcheck`, `diagnose`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::checkpoint::Checkpoint;
use crate::diagnostics::{measure_state, DiagnoseConfig};
use crate::error::{Error, Result};
use crate::gradcheck::{self, TOLERANCE};
use crate::image_io::{self, unit_range};
use crate::losses::{GanForm, LossWeights};
use crate::matting::{affine_loss, build_matting_laplacian, MattingConfig};
use crate::networks::ArchConfig;
use crate::trainer::{self, checkpoint_arch, Direction, StyleSource, TrainConfig};

/// Largest Laplacian order for which the dense smallest eigenvalue is printed.
const EIGEN_LIMIT: usize = 400;

#[derive(Debug, Parser)]
#[command(name = "ssit", version, about = "Semi-supervised image-to-image translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on one content/style image pair.
    Train(TrainArgs),
    /// Translate an image with a trained checkpoint.
    Translate(TranslateArgs),
    /// Summarize the matting Laplacian of an image.
    Laplacian(LaplacianArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
    /// Sample statistics of a checkpoint on an image pair.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Content image (domain 1), binary PPM.
    #[arg(long)]
    pub content: PathBuf,
    /// Style image (domain 2), binary PPM.
    #[arg(long)]
    pub style: PathBuf,
    /// Output directory for checkpoints and metrics.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Total iterations, counting any resumed steps.
    #[arg(long, default_value_t = 500)]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = 1e4)]
    pub lambda_a: f64,
    /// lsgan, log, or log-saturating.
    #[arg(long, default_value_t = GanForm::Lsgan)]
    pub gan: GanForm,
    /// Checkpoint period in steps; 0 keeps only the final checkpoint.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Discriminator scales; defaults by image size (3 at 256 and up, 2 at 64 and up, else 1).
    #[arg(long)]
    pub disc_scales: Option<usize>,
    /// Leave the affine terms out of the graph entirely.
    #[arg(long)]
    pub no_matting: bool,
    /// Log a loss line every this many steps.
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("style_source").required(true).args(["style", "style_seed"]))]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Encode the style from this target-domain image.
    #[arg(long)]
    pub style: Option<PathBuf>,
    /// Draw the style from the prior with this seed.
    #[arg(long)]
    pub style_seed: Option<u64>,
    /// 12 translates domain 1 into domain 2, 21 the reverse.
    #[arg(long, default_value = "12")]
    pub direction: Direction,
}

#[derive(Debug, Args)]
pub struct LaplacianArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    /// Score this image against the Laplacian of the first.
    #[arg(long)]
    pub other: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Comma-separated op names; all ops when omitted.
    #[arg(long, value_delimiter = ',')]
    pub ops: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// List the op names and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    /// Translations per direction.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    /// Draws used for the prior's own moments.
    #[arg(long, default_value_t = 100_000)]
    pub prior_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

impl TrainArgs {
    pub fn to_config(&self) -> TrainConfig {
        let arch = ArchConfig::for_size(self.size);
        TrainConfig {
            content_path: self.content.clone(),
            style_path: self.style.clone(),
            image_size: self.size,
            disc_scales: self.disc_scales.unwrap_or(arch.disc_scales),
            iterations: self.iters,
            seed: self.seed,
            weights: LossWeights {
                lambda_x: self.lambda_x,
                lambda_c: self.lambda_c,
                lambda_s: self.lambda_s,
                lambda_a: self.lambda_a,
            },
            matting_enabled: !self.no_matting,
            checkpoint_every: self.checkpoint_every,
            gan_form: self.gan,
            ..TrainConfig::default()
        }
    }
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.to_config();
    let every = args.log_every.max(1);
    let outcome = trainer::train(&config, &args.out, args.resume.as_deref(), |step, r| {
        if step % every == 0 {
            info!(
                "step {step}: total_g {:.4} recon_x {:.4}/{:.4} affine {:.3e}/{:.3e}",
                r.total_g, r.recon_x1, r.recon_x2, r.affine_x1, r.affine_x2
            );
        }
    })?;
    let r = &outcome.last_report;
    writeln!(
        out,
        "step {} total_g {:?} total_d {:?} recon_x1 {:?} recon_x2 {:?} affine_x1 {:?} affine_x2 {:?}",
        outcome.steps, r.total_g, r.total_d, r.recon_x1, r.recon_x2, r.affine_x1, r.affine_x2
    )
    .map_err(io_err)?;
    writeln!(out, "checkpoint {}", outcome.checkpoint.display()).map_err(io_err)?;
    writeln!(out, "metrics {}", outcome.metrics.display()).map_err(io_err)?;
    Ok(())
}

fn cmd_translate(args: &TranslateArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let size = checkpoint_arch(&ckpt)?.image_size;
    let content = image_io::load_image(&args.content, size)?;
    let (style, label) = match (&args.style, args.style_seed) {
        (Some(path), None) => (
            StyleSource::Image(image_io::load_image(path, size)?),
            format!("style=image:{}", path.display()),
        ),
        (None, Some(seed)) => (StyleSource::Prior(seed), format!("style=prior:seed={seed}")),
        _ => return Err(Error::invalid("translate", "give exactly one of --style or --style-seed")),
    };
    let direction = match args.direction {
        Direction::OneToTwo => "12",
        Direction::TwoToOne => "21",
    };
    let image = trainer::translate(&ckpt, &content, &style, args.direction)?;
    let comment = format!("ssit translate direction={direction} {label} step={}", ckpt.step);
    image_io::save_image(&image, &args.out, Some(&comment))?;
    writeln!(out, "wrote {} ({size}×{size}, {label})", args.out.display()).map_err(io_err)?;
    Ok(())
}

fn cmd_laplacian(args: &LaplacianArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = MattingConfig {
        window_radius: args.radius,
        eps: args.eps,
    };
    let read = |p: &PathBuf| -> Result<_> { unit_range(&image_io::image_to_tensor_native::<f64>(&image_io::read_ppm(p)?)?) };
    let image = read(&args.image)?;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let m = build_matting_laplacian(&image, &cfg)?;
    let windows = cfg.window_count(h, w);
    writeln!(out, "image {w}×{h}, radius {}, eps {:e}", cfg.window_radius, cfg.eps).map_err(io_err)?;
    writeln!(out, "order {}", m.order()).map_err(io_err)?;
    writeln!(out, "nonzeros {}", m.nnz()).map_err(io_err)?;
    writeln!(out, "windows {windows}").map_err(io_err)?;
    writeln!(out, "max |row sum| {:e}", m.max_abs_row_sum()).map_err(io_err)?;
    writeln!(out, "max asymmetry {:e}", m.max_asymmetry()).map_err(io_err)?;
    if m.order() <= EIGEN_LIMIT {
        writeln!(out, "smallest eigenvalue {:e}", m.smallest_eigenvalue()).map_err(io_err)?;
    }
    if let Some(path) = &args.other {
        let other = read(path)?;
        if other.shape() != image.shape() {
            return Err(Error::shape(
                "laplacian",
                format!("--other is {:?} but --image is {:?}", other.shape(), image.shape()),
            ));
        }
        let loss = affine_loss(&m, &other)?;
        writeln!(out, "affine loss {loss:e}").map_err(io_err)?;
        writeln!(out, "self-image bound 3·eps·windows {:e}", 3.0 * cfg.eps * windows as f64).map_err(io_err)?;
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    if args.list {
        for op in gradcheck::op_names() {
            writeln!(out, "{op}").map_err(io_err)?;
        }
        return Ok(());
    }
    let reports = gradcheck::check_ops(args.ops.as_deref(), args.seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        writeln!(out, "{:<18} {} instances  max rel error {:.3e}  {verdict}", r.op, r.instances, r.max_rel_error)
            .map_err(io_err)?;
        if !r.passed() {
            failed.push(r.op);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(
            "gradcheck",
            format!("{} above {TOLERANCE:e}: {}", failed.len(), failed.join(", ")),
        ))
    }
}

fn cmd_diagnose(args: &DiagnoseArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let size = checkpoint_arch(&ckpt)?.image_size;
    let x1 = image_io::load_image(&args.content, size)?;
    let x2 = image_io::load_image(&args.style, size)?;
    let cfg = DiagnoseConfig {
        prior_samples: args.prior_samples,
        translation_samples: args.samples,
        seed: args.seed,
    };
    let text = measure_state(&ckpt, &x1, &x2, &cfg)?.to_text();
    out.write_all(text.as_bytes()).map_err(io_err)?;
    if let Some(path) = &args.out {
        fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Runs a parsed invocation, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Translate(a) => cmd_translate(a, out),
        Command::Laplacian(a) => cmd_laplacian(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
///
/// Usage errors print the usage text and return 2, `--help` returns 0, and
/// any runtime error is printed to stderr with exit code 1.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
