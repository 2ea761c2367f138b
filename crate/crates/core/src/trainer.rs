//! Two-image training loop, checkpointed runs and translation.
//!
//! Each iteration draws two prior style codes, runs one bidirectional
//! generator pass, updates both discriminators on the detached
//! translations, and then updates every encoder and decoder against the
//! freshly updated discriminators.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, info};
use rand::Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::image_io;
use crate::losses::{
    discriminator_objective, gan_discriminator_term, gan_generator_term, generator_pass, total_generator_loss,
    AffineMatrices, GanForm, LossReport, LossWeights,
};
use crate::matting::{build_matting_laplacian, MattingConfig};
use crate::networks::{
    init_params, is_discriminator_param, ArchConfig, Domain, Model, ModelParams, StyleCode, Trainable, STYLE_DIM,
};
use crate::rng::{self, site};
use crate::tensor::{Adam, AdamConfig, Element, Graph, Tensor, Var};

pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub content_path: PathBuf,
    pub style_path: PathBuf,
    pub image_size: usize,
    pub disc_scales: usize,
    pub iterations: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub matting: MattingConfig,
    /// When false no Laplacian is built and the affine terms are absent.
    pub matting_enabled: bool,
    pub adam: AdamConfig,
    /// Checkpoint period in steps; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub gan_form: GanForm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            content_path: PathBuf::new(),
            style_path: PathBuf::new(),
            image_size: 256,
            disc_scales: ArchConfig::for_size(256).disc_scales,
            iterations: 500,
            seed: 0,
            weights: LossWeights::default(),
            matting: MattingConfig::default(),
            matting_enabled: true,
            adam: AdamConfig::default(),
            checkpoint_every: 0,
            gan_form: GanForm::Lsgan,
        }
    }
}

fn echo_get<'a>(map: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::Checkpoint(format!("config echo lacks `{key}`")))
}

fn echo_parse<V: FromStr>(map: &BTreeMap<&str, &str>, key: &str) -> Result<V> {
    let raw = echo_get(map, key)?;
    raw.parse()
        .map_err(|_| Error::Checkpoint(format!("config echo `{key}={raw}` is malformed")))
}

impl TrainConfig {
    /// Small-image settings: 32×32 and a single discriminator scale.
    pub fn desk(content_path: impl Into<PathBuf>, style_path: impl Into<PathBuf>) -> Self {
        Self {
            content_path: content_path.into(),
            style_path: style_path.into(),
            image_size: 32,
            disc_scales: 1,
            ..Self::default()
        }
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            image_size: self.image_size,
            disc_scales: self.disc_scales,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch().validate()?;
        self.weights.validate()?;
        if self.iterations == 0 {
            return Err(Error::invalid("TrainConfig", "iterations must be at least 1"));
        }
        if !(self.matting.eps > 0.0) {
            return Err(Error::invalid("TrainConfig", format!("matting eps must be positive, got {}", self.matting.eps)));
        }
        Ok(())
    }

    /// `key=value` lines stored in checkpoints.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let w = &self.weights;
        let lines: [(&str, String); 19] = [
            ("content", self.content_path.display().to_string()),
            ("style", self.style_path.display().to_string()),
            ("size", self.image_size.to_string()),
            ("disc_scales", self.disc_scales.to_string()),
            ("iterations", self.iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("lambda_x", format!("{:?}", w.lambda_x)),
            ("lambda_c", format!("{:?}", w.lambda_c)),
            ("lambda_s", format!("{:?}", w.lambda_s)),
            ("lambda_a", format!("{:?}", w.lambda_a)),
            ("matting", if self.matting_enabled { "on" } else { "off" }.to_string()),
            ("matting_radius", self.matting.window_radius.to_string()),
            ("matting_eps", format!("{:?}", self.matting.eps)),
            ("lr", format!("{:?}", self.adam.lr)),
            ("beta1", format!("{:?}", self.adam.beta1)),
            ("beta2", format!("{:?}", self.adam.beta2)),
            ("adam_eps", format!("{:?}", self.adam.eps)),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("gan", self.gan_form.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn from_echo(echo: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = echo.lines().filter_map(|l| l.split_once('=')).collect();
        let matting_enabled = match echo_get(&map, "matting")? {
            "on" => true,
            "off" => false,
            other => return Err(Error::Checkpoint(format!("config echo `matting={other}` is malformed"))),
        };
        Ok(Self {
            content_path: echo_get(&map, "content")?.into(),
            style_path: echo_get(&map, "style")?.into(),
            image_size: echo_parse(&map, "size")?,
            disc_scales: echo_parse(&map, "disc_scales")?,
            iterations: echo_parse(&map, "iterations")?,
            seed: echo_parse(&map, "seed")?,
            weights: LossWeights {
                lambda_x: echo_parse(&map, "lambda_x")?,
                lambda_c: echo_parse(&map, "lambda_c")?,
                lambda_s: echo_parse(&map, "lambda_s")?,
                lambda_a: echo_parse(&map, "lambda_a")?,
            },
            matting: MattingConfig {
                window_radius: echo_parse(&map, "matting_radius")?,
                eps: echo_parse(&map, "matting_eps")?,
            },
            matting_enabled,
            adam: AdamConfig {
                lr: echo_parse(&map, "lr")?,
                beta1: echo_parse(&map, "beta1")?,
                beta2: echo_parse(&map, "beta2")?,
                eps: echo_parse(&map, "adam_eps")?,
            },
            checkpoint_every: echo_parse(&map, "checkpoint_every")?,
            gan_form: echo_get(&map, "gan")?
                .parse()
                .map_err(|_| Error::Checkpoint("config echo `gan` is malformed".into()))?,
        })
    }
}

/// Eight independent standard normal values as a `1 × 8` tensor.
pub fn sample_style_prior<T: Element>(rng: &mut impl Rng) -> Tensor<T> {
    Tensor::randn([1, STYLE_DIM], 1.0, rng)
}

/// Laplacians of both images, built concurrently.
pub fn build_affine_matrices(x1: &Tensor<f32>, x2: &Tensor<f32>, cfg: &MattingConfig) -> Result<AffineMatrices> {
    let build = |x: &Tensor<f32>| -> Result<_> {
        let unit = image_io::unit_range(&x.cast::<f64>())?;
        Ok(Arc::new(build_matting_laplacian(&unit, cfg)?))
    };
    let (m1, m2) = std::thread::scope(|s| {
        let h = s.spawn(|| build(x2));
        let m1 = build(x1);
        (m1, h.join().expect("matting build panicked"))
    });
    Ok(AffineMatrices { m1: m1?, m2: m2? })
}

fn scalar(v: Var<'_, f32>) -> Result<f64> {
    Ok(f64::from(v.item()?))
}

fn apply_adam(params: &mut ModelParams<f32>, adam: &mut Adam<f32>, grads: Vec<(String, Tensor<f32>)>) -> Result<()> {
    params.adam_step(adam, &grads.into_iter().collect())
}

/// Leaf gradients of `loss` keyed by parameter name.
fn named_gradients<'g>(graph: &'g Graph<f32>, model: &Model<'g, f32>, loss: Var<'g, f32>) -> Result<Vec<(String, Tensor<f32>)>> {
    let ids: BTreeMap<usize, &str> = model
        .params()
        .filter(|(_, v)| v.requires_grad())
        .map(|(name, v)| (v.id(), name))
        .collect();
    Ok(graph
        .backward(loss)?
        .into_leaves()
        .into_iter()
        .filter_map(|(id, g)| ids.get(&id).map(|name| (name.to_string(), g)))
        .collect())
}

pub struct Trainer {
    config: TrainConfig,
    arch: ArchConfig,
    params: ModelParams<f32>,
    adam_g: Adam<f32>,
    adam_d: Adam<f32>,
    step: u64,
    x1: Arc<Tensor<f32>>,
    x2: Arc<Tensor<f32>>,
    affine: Option<AffineMatrices>,
}

impl Trainer {
    /// Fresh parameters from `config.seed`. `x1` is the content image and `x2` the style image.
    pub fn new(config: TrainConfig, x1: Tensor<f32>, x2: Tensor<f32>) -> Result<Self> {
        config.validate()?;
        let arch = config.arch();
        let params = init_params(&arch, config.seed)?;
        Self::assemble(config, params, x1, x2)
    }

    fn assemble(config: TrainConfig, params: ModelParams<f32>, x1: Tensor<f32>, x2: Tensor<f32>) -> Result<Self> {
        let s = config.image_size;
        for (name, x) in [("content", &x1), ("style", &x2)] {
            if x.shape() != [1, 3, s, s] {
                return Err(Error::shape(
                    "Trainer",
                    format!("{name} image is {:?}, expected [1, 3, {s}, {s}]", x.shape()),
                ));
            }
        }
        let affine = if config.matting_enabled {
            Some(build_affine_matrices(&x1, &x2, &config.matting)?)
        } else {
            None
        };
        Ok(Self {
            arch: config.arch(),
            adam_g: Adam::new(config.adam),
            adam_d: Adam::new(config.adam),
            config,
            params,
            step: 0,
            x1: Arc::new(x1),
            x2: Arc::new(x2),
            affine,
        })
    }

    /// Continues from `ckpt`. Architecture and seed must match the checkpointed run.
    pub fn resume(config: TrainConfig, x1: Tensor<f32>, x2: Tensor<f32>, ckpt: Checkpoint) -> Result<Self> {
        config.validate()?;
        let saved = TrainConfig::from_echo(&ckpt.config_echo)?;
        if saved.arch() != config.arch() || ckpt.seed != config.seed {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained at size {} with {} scales and seed {}; requested size {} with {} scales and seed {}",
                saved.image_size, saved.disc_scales, ckpt.seed, config.image_size, config.disc_scales, config.seed
            )));
        }
        let expected = init_params::<f32>(&config.arch(), 0)?;
        for (name, t) in expected.iter() {
            let got = ckpt.params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        let mut trainer = Self::assemble(config, ckpt.params, x1, x2)?;
        for (adam, slots) in [(&mut trainer.adam_g, ckpt.adam_g), (&mut trainer.adam_d, ckpt.adam_d)] {
            adam.set_step_count(ckpt.step);
            for (name, slot) in slots {
                adam.insert_slot(name, slot);
            }
        }
        trainer.step = ckpt.step;
        Ok(trainer)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn affine_matrices(&self) -> Option<&AffineMatrices> {
        self.affine.as_ref()
    }

    /// Completed iterations.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            seed: self.config.seed,
            params: self.params.clone(),
            adam_g: self.adam_g.slots().clone(),
            adam_d: self.adam_d.slots().clone(),
            config_echo: self.config.echo(),
        }
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self) -> Result<LossReport> {
        let seed = self.config.seed;
        let form = self.config.gan_form;
        let w = self.config.weights;
        let s1_prior: Tensor<f32> = sample_style_prior(&mut rng::stream(seed, self.step, site::PRIOR_STYLE_1));
        let s2_prior: Tensor<f32> = sample_style_prior(&mut rng::stream(seed, self.step, site::PRIOR_STYLE_2));

        let graph = Graph::new();
        let mut model = Model::bind(&graph, &self.params, &self.arch, Trainable::Generators);
        let x1 = graph.constant_shared(Arc::clone(&self.x1));
        let x2 = graph.constant_shared(Arc::clone(&self.x2));
        let pass = generator_pass(
            &model,
            x1,
            x2,
            StyleCode::new(graph.constant(s1_prior))?,
            StyleCode::new(graph.constant(s2_prior))?,
            self.affine.as_ref(),
        )?;

        let (gan_d1, gan_d2, total_d) = self.discriminator_step(pass.x21.value(), pass.x12.value())?;

        model.refresh(&graph, &self.params, is_discriminator_param);
        let gan_g1 = gan_generator_term(form, &model.discriminate(Domain::One, pass.x21)?)?;
        let gan_g2 = gan_generator_term(form, &model.discriminate(Domain::Two, pass.x12)?)?;
        let total = pass.total(gan_g1, gan_g2, &w)?;

        let mut report = LossReport {
            recon_x1: scalar(pass.recon_x1)?,
            recon_x2: scalar(pass.recon_x2)?,
            recon_c1: scalar(pass.recon_c1)?,
            recon_c2: scalar(pass.recon_c2)?,
            recon_s1: scalar(pass.recon_s1)?,
            recon_s2: scalar(pass.recon_s2)?,
            gan_g1: scalar(gan_g1)?,
            gan_g2: scalar(gan_g2)?,
            gan_d1,
            gan_d2,
            affine_x1: pass.affine_x1.map(scalar).transpose()?.unwrap_or(0.0),
            affine_x2: pass.affine_x2.map(scalar).transpose()?.unwrap_or(0.0),
            total_g: 0.0,
            total_d,
        };
        report.total_g = total_generator_loss(&report, &w)?;
        if let Some(term) = report.non_finite_term() {
            return Err(Error::NonFinite(format!("{term} at step {}", self.step + 1)));
        }

        let grads = named_gradients(&graph, &model, total)?;
        drop(model);
        drop(graph);
        apply_adam(&mut self.params, &mut self.adam_g, grads)?;
        self.step += 1;
        debug!("step {} total_g {:.6} total_d {:.6}", self.step, report.total_g, report.total_d);
        Ok(report)
    }

    /// Updates both discriminators with `x1`, `x2` as real and the given translations as fake.
    fn discriminator_step(&mut self, x21: Arc<Tensor<f32>>, x12: Arc<Tensor<f32>>) -> Result<(f64, f64, f64)> {
        let form = self.config.gan_form;
        let grads;
        let values;
        {
            let graph = Graph::new();
            let model = Model::bind(&graph, &self.params, &self.arch, Trainable::Discriminators);
            let mut terms = Vec::with_capacity(2);
            for (domain, real, fake) in [(Domain::One, &self.x1, x21), (Domain::Two, &self.x2, x12)] {
                let real = model.discriminate(domain, graph.constant_shared(Arc::clone(real)))?;
                let fake = model.discriminate(domain, graph.constant_shared(fake))?;
                terms.push(gan_discriminator_term(form, &fake, &real)?);
            }
            let d1 = scalar(terms[0])?;
            let d2 = scalar(terms[1])?;
            for (name, v) in [("gan_d1", d1), ("gan_d2", d2)] {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{name} at step {}", self.step + 1)));
                }
            }
            let objective = discriminator_objective(form, terms[0]).add(discriminator_objective(form, terms[1]))?;
            values = (d1, d2, scalar(objective)?);
            grads = named_gradients(&graph, &model, objective)?;
        }
        apply_adam(&mut self.params, &mut self.adam_d, grads)?;
        Ok(values)
    }
}

/// Loads both images of `config` at its training size.
pub fn load_pair(config: &TrainConfig) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let x1 = image_io::load_image(&config.content_path, config.image_size)?;
    let x2 = image_io::load_image(&config.style_path, config.image_size)?;
    Ok((x1, x2))
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("checkpoint-{step:06}.ssit"))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last_report: LossReport,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub steps: u64,
}

/// Opens the metrics log, keeping the header and rows up to `keep_through` from an earlier run.
fn open_metrics(path: &Path, keep_through: u64) -> Result<BufWriter<File>> {
    let mut kept = vec![LossReport::csv_header()];
    if keep_through > 0 && path.exists() {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for line in BufReader::new(file).lines().skip(1) {
            let line = line.map_err(|e| Error::io(path, e))?;
            let (step, _) = LossReport::parse_csv_row(&line)?;
            if step <= keep_through {
                kept.push(line);
            }
        }
    }
    let mut out = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?,
    );
    for line in kept {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

/// Runs `config.iterations` total steps, writing metrics and checkpoints to `out_dir`.
///
/// With `resume`, training continues from that checkpoint's step; rows the
/// earlier run logged after it are discarded from the metrics file.
pub fn train(
    config: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    mut on_step: impl FnMut(u64, &LossReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (x1, x2) = load_pair(config)?;
    let mut trainer = match resume {
        Some(path) => Trainer::resume(config.clone(), x1, x2, Checkpoint::load(path)?)?,
        None => Trainer::new(config.clone(), x1, x2)?,
    };
    let start = trainer.step_count();
    if start >= config.iterations {
        return Err(Error::invalid(
            "train",
            format!("checkpoint is already at step {start}, nothing to do for {} iterations", config.iterations),
        ));
    }
    info!(
        "training {}×{} from step {start} to {} (seed {})",
        config.image_size, config.image_size, config.iterations, config.seed
    );
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = open_metrics(&metrics_path, start)?;
    let mut last = None;
    let mut last_ckpt = None;
    while trainer.step_count() < config.iterations {
        let report = trainer.step()?;
        let step = trainer.step_count();
        writeln!(metrics, "{}", report.csv_row(step)).map_err(|e| Error::io(&metrics_path, e))?;
        on_step(step, &report);
        let periodic = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
        if periodic || step == config.iterations {
            metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
            let path = checkpoint_path(out_dir, step);
            trainer.checkpoint().save(&path)?;
            info!("step {step}: wrote {}", path.display());
            last_ckpt = Some(path);
        }
        last = Some(report);
    }
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
    Ok(TrainOutcome {
        last_report: last.expect("at least one step ran"),
        checkpoint: last_ckpt.expect("final step is checkpointed"),
        metrics: metrics_path,
        steps: trainer.step_count(),
    })
}

/// Reads a metrics log back as `(step, report)` rows.
pub fn read_metrics(path: &Path) -> Result<Vec<(u64, LossReport)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(LossReport::csv_header().as_str()) {
        return Err(Error::invalid("read_metrics", format!("{} has an unexpected header", path.display())));
    }
    lines.map(LossReport::parse_csv_row).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Content from image 1, style into domain 2.
    #[default]
    OneToTwo,
    TwoToOne,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::OneToTwo => Domain::One,
            Direction::TwoToOne => Domain::Two,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "12" | "1to2" => Ok(Direction::OneToTwo),
            "21" | "2to1" => Ok(Direction::TwoToOne),
            other => Err(Error::invalid("Direction", format!("`{other}` (expected 12 or 21)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum StyleSource {
    /// Style encoded from an image of the target domain.
    Image(Tensor<f32>),
    /// Style drawn from the standard normal prior with this seed.
    Prior(u64),
}

/// Architecture recorded in a checkpoint.
pub fn checkpoint_arch(ckpt: &Checkpoint) -> Result<ArchConfig> {
    let cfg = TrainConfig::from_echo(&ckpt.config_echo)?;
    let arch = cfg.arch();
    arch.validate()?;
    Ok(arch)
}

/// Encodes `content` in the source domain and decodes it with a target-domain style.
pub fn translate(ckpt: &Checkpoint, content: &Tensor<f32>, style: &StyleSource, direction: Direction) -> Result<Tensor<f32>> {
    let arch = checkpoint_arch(ckpt)?;
    let s = arch.image_size;
    let check = |t: &Tensor<f32>, what: &str| {
        if t.shape() == [1, 3, s, s] {
            Ok(())
        } else {
            Err(Error::shape(
                "translate",
                format!("{what} is {:?} but the checkpoint was trained at {s}×{s}", t.shape()),
            ))
        }
    };
    check(content, "content image")?;
    let from = direction.source();
    let to = from.other();
    let graph = Graph::new();
    let model = Model::bind(&graph, &ckpt.params, &arch, Trainable::Nothing);
    let c = model.content_encode(from, graph.constant(content.clone()))?;
    let code = match style {
        StyleSource::Image(img) => {
            check(img, "style image")?;
            model.style_encode(to, graph.constant(img.clone()))?
        }
        StyleSource::Prior(seed) => {
            let prior: Tensor<f32> = sample_style_prior(&mut rng::stream(*seed, 0, site::TRANSLATE_STYLE));
            StyleCode::new(graph.constant(prior))?
        }
    };
    let out = model.decode(to, c, code)?.value();
    Ok(Tensor::clone(&out))
}
