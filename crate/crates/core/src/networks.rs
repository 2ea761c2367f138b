//! Auto-encoders and multi-scale discriminators for the two image domains.
//!
//! Each domain `i` owns a content encoder, a style encoder, a decoder
//! (with the MLP that turns a style code into AdaIN parameters) and a
//! discriminator. Parameter names are prefixed `g1.`/`g2.` for the
//! generator side and `d1.`/`d2.` for the discriminators; these names are
//! also the checkpoint schema.
//!
//! Layer stack (`k×k sN ×C` = k×k convolution, stride N, C filters):
//!
//! | network          | layers                                                                  |
//! |------------------|-------------------------------------------------------------------------|
//! | content encoder  | 7×7 s1 ×64, 4×4 s2 ×128, 4×4 s2 ×256, 4 residual blocks (3×3 ×256 twice) |
//! | style encoder    | 7×7 s1 ×64, 4×4 s2 ×128, 3 × (4×4 s2 ×256), global average pool, FC → 8  |
//! | decoder          | 4 AdaIN residual blocks, 2 × (×2 nearest upsample, 5×5 conv), 7×7 s1 ×3  |
//! | discriminator    | per scale: 4×4 s2 ×64/128/256/512, 1×1 conv → 1                          |
//!
//! Generator convolutions use reflect padding, the discriminator zero padding.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::info;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Adam, Element, Graph, PadMode, Tensor, Var};

pub const STYLE_DIM: usize = 8;
const BASE: usize = 64;
const CONTENT_CHANNELS: usize = 256;
const RES_BLOCKS: usize = 4;
const MLP_HIDDEN: usize = 256;
const DISC_CHANNELS: [usize; 4] = [64, 128, 256, 512];
const LEAKY_SLOPE: f64 = 0.2;

/// Number of AdaIN values the decoder consumes: gamma and beta for both
/// convolutions of every residual block.
pub const ADAIN_PARAMS: usize = RES_BLOCKS * 2 * CONTENT_CHANNELS * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    One,
    Two,
}

impl Domain {
    pub fn other(self) -> Self {
        match self {
            Domain::One => Domain::Two,
            Domain::Two => Domain::One,
        }
    }

    fn gen(self) -> &'static str {
        match self {
            Domain::One => "g1",
            Domain::Two => "g2",
        }
    }

    fn disc(self) -> &'static str {
        match self {
            Domain::One => "d1",
            Domain::Two => "d2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub image_size: usize,
    pub disc_scales: usize,
}

impl ArchConfig {
    /// Three discriminator scales at 256×256 and above, fewer for small images.
    pub fn for_size(image_size: usize) -> Self {
        let disc_scales = match image_size {
            s if s >= 256 => 3,
            s if s >= 64 => 2,
            _ => 1,
        };
        Self {
            image_size,
            disc_scales,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.image_size % 16 != 0 {
            return Err(Error::invalid(
                "ArchConfig",
                format!("image size must be a positive multiple of 16, got {}", self.image_size),
            ));
        }
        if self.disc_scales == 0 || self.image_size >> (self.disc_scales - 1) < 16 {
            return Err(Error::invalid(
                "ArchConfig",
                format!(
                    "{} discriminator scales do not fit a {} image",
                    self.disc_scales, self.image_size
                ),
            ));
        }
        Ok(())
    }
}

/// Which parameters get gradients in a bound model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    Nothing,
    Generators,
    Discriminators,
}

pub fn is_generator_param(name: &str) -> bool {
    name.starts_with("g1.") || name.starts_with("g2.")
}

pub fn is_discriminator_param(name: &str) -> bool {
    name.starts_with("d1.") || name.starts_with("d2.")
}

/// Named learnable tensors for both auto-encoders and both discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    tensors: BTreeMap<String, Arc<Tensor<T>>>,
}

impl<T: Element> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ModelParams<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Result<&Arc<Tensor<T>>> {
        self.tensors.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Mutable access, copying the tensor first if a graph still shares it.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .map(Arc::make_mut)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }

    /// Applies one optimizer step to the parameters named in `grads`.
    pub fn adam_step(&mut self, adam: &mut Adam<T>, grads: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        if let Some(name) = grads.keys().find(|k| !self.tensors.contains_key(*k)) {
            return Err(Error::MissingParam(name.clone()));
        }
        adam.step(
            self.tensors
                .iter_mut()
                .filter_map(|(name, value)| grads.get(name).map(|g| (name.as_str(), Arc::make_mut(value), g))),
        )
    }

    pub fn cast<U: Element>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Arc::new(v.cast())))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Gaussian with std `sqrt(2 / fan_in)`.
    Kaiming(usize),
    Zeros,
    Ones,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

struct Layout(Vec<ParamSpec>);

impl Layout {
    fn conv(&mut self, name: String, cin: usize, cout: usize, k: usize) {
        self.0.push(ParamSpec {
            name: format!("{name}.w"),
            shape: vec![cout, cin, k, k],
            init: Init::Kaiming(cin * k * k),
        });
        self.0.push(ParamSpec {
            name: format!("{name}.b"),
            shape: vec![cout],
            init: Init::Zeros,
        });
    }

    fn norm(&mut self, name: String, c: usize) {
        self.0.push(ParamSpec {
            name: format!("{name}.gamma"),
            shape: vec![c],
            init: Init::Ones,
        });
        self.0.push(ParamSpec {
            name: format!("{name}.beta"),
            shape: vec![c],
            init: Init::Zeros,
        });
    }

    fn fc(&mut self, name: String, fan_in: usize, fan_out: usize) {
        self.0.push(ParamSpec {
            name: format!("{name}.w"),
            shape: vec![fan_out, fan_in],
            init: Init::Kaiming(fan_in),
        });
        self.0.push(ParamSpec {
            name: format!("{name}.b"),
            shape: vec![fan_out],
            init: Init::Zeros,
        });
    }
}

fn layout(arch: &ArchConfig) -> Layout {
    let mut l = Layout(Vec::new());
    for domain in [Domain::One, Domain::Two] {
        let g = domain.gen();

        l.conv(format!("{g}.enc_c.conv0"), 3, BASE, 7);
        l.norm(format!("{g}.enc_c.conv0.norm"), BASE);
        l.conv(format!("{g}.enc_c.down1"), BASE, 2 * BASE, 4);
        l.norm(format!("{g}.enc_c.down1.norm"), 2 * BASE);
        l.conv(format!("{g}.enc_c.down2"), 2 * BASE, CONTENT_CHANNELS, 4);
        l.norm(format!("{g}.enc_c.down2.norm"), CONTENT_CHANNELS);
        for r in 0..RES_BLOCKS {
            for half in ["a", "b"] {
                l.conv(format!("{g}.enc_c.res{r}.{half}"), CONTENT_CHANNELS, CONTENT_CHANNELS, 3);
                l.norm(format!("{g}.enc_c.res{r}.{half}.norm"), CONTENT_CHANNELS);
            }
        }

        l.conv(format!("{g}.enc_s.conv0"), 3, BASE, 7);
        l.conv(format!("{g}.enc_s.down1"), BASE, 2 * BASE, 4);
        l.conv(format!("{g}.enc_s.down2"), 2 * BASE, 4 * BASE, 4);
        l.conv(format!("{g}.enc_s.down3"), 4 * BASE, 4 * BASE, 4);
        l.conv(format!("{g}.enc_s.down4"), 4 * BASE, 4 * BASE, 4);
        l.fc(format!("{g}.enc_s.fc"), 4 * BASE, STYLE_DIM);

        l.fc(format!("{g}.mlp.fc0"), STYLE_DIM, MLP_HIDDEN);
        l.fc(format!("{g}.mlp.fc1"), MLP_HIDDEN, MLP_HIDDEN);
        l.fc(format!("{g}.mlp.fc2"), MLP_HIDDEN, ADAIN_PARAMS);
        for r in 0..RES_BLOCKS {
            for half in ["a", "b"] {
                l.conv(format!("{g}.dec.res{r}.{half}"), CONTENT_CHANNELS, CONTENT_CHANNELS, 3);
            }
        }
        l.conv(format!("{g}.dec.up1"), CONTENT_CHANNELS, 2 * BASE, 5);
        l.conv(format!("{g}.dec.up2"), 2 * BASE, BASE, 5);
        l.conv(format!("{g}.dec.out"), BASE, 3, 7);
    }
    for domain in [Domain::One, Domain::Two] {
        let d = domain.disc();
        for s in 0..arch.disc_scales {
            let mut cin = 3;
            for (i, &cout) in DISC_CHANNELS.iter().enumerate() {
                l.conv(format!("{d}.s{s}.conv{i}"), cin, cout, 4);
                cin = cout;
            }
            l.conv(format!("{d}.s{s}.head"), cin, 1, 1);
        }
    }
    l
}

/// Deterministic parameter set for `seed`: Kaiming-normal weights, zero biases,
/// unit normalization scales.
pub fn init_params<T: Element>(arch: &ArchConfig, seed: u64) -> Result<ModelParams<T>> {
    arch.validate()?;
    let mut params = ModelParams::new();
    for (site, spec) in layout(arch).0.into_iter().enumerate() {
        let value = match spec.init {
            Init::Kaiming(fan_in) => {
                let mut rng = rng::stream(seed, rng::INIT_STEP, site as u64);
                Tensor::randn(spec.shape, (2.0 / fan_in as f64).sqrt(), &mut rng)
            }
            Init::Zeros => Tensor::zeros(spec.shape),
            Init::Ones => Tensor::full(spec.shape, T::one()),
        };
        params.insert(spec.name, value);
    }
    info!(
        "initialized {} parameter tensors ({} scalars) for {}×{} images, seed {seed}",
        params.len(),
        params.scalar_count(),
        arch.image_size,
        arch.image_size
    );
    Ok(params)
}

/// Content code `1 × 256 × H/4 × W/4`.
#[derive(Debug, Clone, Copy)]
pub struct ContentCode<'g, T: Element>(pub Var<'g, T>);

/// Style code `1 × 8`.
#[derive(Debug, Clone, Copy)]
pub struct StyleCode<'g, T: Element>(pub Var<'g, T>);

impl<'g, T: Element> StyleCode<'g, T> {
    pub fn new(var: Var<'g, T>) -> Result<Self> {
        let shape = var.shape();
        if shape.iter().product::<usize>() != STYLE_DIM {
            return Err(Error::shape("StyleCode", format!("expected {STYLE_DIM} values, got shape {shape:?}")));
        }
        Ok(Self(var.reshape([1, STYLE_DIM])?))
    }
}

/// One score map per discriminator scale.
#[derive(Debug, Clone)]
pub struct DiscOutput<'g, T: Element> {
    pub maps: Vec<Var<'g, T>>,
}

/// Parameters bound to a graph.
pub struct Model<'g, T: Element> {
    vars: BTreeMap<String, Var<'g, T>>,
    arch: ArchConfig,
}

impl<'g, T: Element> Model<'g, T> {
    pub fn bind(graph: &'g Graph<T>, params: &ModelParams<T>, arch: &ArchConfig, trainable: Trainable) -> Self {
        let vars = params
            .tensors
            .iter()
            .map(|(name, value)| {
                let learn = match trainable {
                    Trainable::Nothing => false,
                    Trainable::Generators => is_generator_param(name),
                    Trainable::Discriminators => is_discriminator_param(name),
                };
                let var = if learn {
                    graph.leaf_shared(Arc::clone(value), Some(name.clone()))
                } else {
                    graph.constant_shared(Arc::clone(value))
                };
                (name.clone(), var)
            })
            .collect();
        Self { vars, arch: *arch }
    }

    /// Rebinds the selected parameters to their current values as constants.
    pub fn refresh(&mut self, graph: &'g Graph<T>, params: &ModelParams<T>, select: impl Fn(&str) -> bool) {
        for (name, value) in &params.tensors {
            if select(name) {
                self.vars.insert(name.clone(), graph.constant_shared(Arc::clone(value)));
            }
        }
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn param(&self, name: &str) -> Result<Var<'g, T>> {
        self.vars.get(name).copied().ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// `(name, var)` for every bound parameter.
    pub fn params(&self) -> impl Iterator<Item = (&str, Var<'g, T>)> + '_ {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn conv(&self, name: &str, x: Var<'g, T>, stride: usize, pad: usize, mode: PadMode) -> Result<Var<'g, T>> {
        x.conv2d(
            self.param(&format!("{name}.w"))?,
            Some(self.param(&format!("{name}.b"))?),
            stride,
            pad,
            mode,
        )
    }

    fn norm(&self, name: &str, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.instance_norm(
            self.param(&format!("{name}.norm.gamma"))?,
            self.param(&format!("{name}.norm.beta"))?,
        )
    }

    fn fc(&self, name: &str, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.fully_connected(self.param(&format!("{name}.w"))?, self.param(&format!("{name}.b"))?)
    }

    fn check_image(x: Var<'g, T>, multiple: usize, op: &'static str) -> Result<()> {
        let shape = x.shape();
        match *shape {
            [_, 3, h, w] if h % multiple == 0 && w % multiple == 0 && h > 0 && w > 0 => Ok(()),
            [_, 3, h, w] => Err(Error::shape(op, format!("{h}×{w} image extents must be divisible by {multiple}"))),
            _ => Err(Error::shape(op, format!("expected an n×3×H×W image, got {shape:?}"))),
        }
    }

    pub fn content_encode(&self, domain: Domain, x: Var<'g, T>) -> Result<ContentCode<'g, T>> {
        Self::check_image(x, 4, "content_encode")?;
        let p = format!("{}.enc_c", domain.gen());
        let reflect = PadMode::Reflect;
        let mut h = self.conv(&format!("{p}.conv0"), x, 1, 3, reflect)?;
        h = self.norm(&format!("{p}.conv0"), h)?.relu();
        for name in ["down1", "down2"] {
            let layer = format!("{p}.{name}");
            h = self.conv(&layer, h, 2, 1, reflect)?;
            h = self.norm(&layer, h)?.relu();
        }
        for r in 0..RES_BLOCKS {
            let (a, b) = (format!("{p}.res{r}.a"), format!("{p}.res{r}.b"));
            let mut y = self.conv(&a, h, 1, 1, reflect)?;
            y = self.norm(&a, y)?.relu();
            y = self.conv(&b, y, 1, 1, reflect)?;
            y = self.norm(&b, y)?;
            h = h.add(y)?;
        }
        Ok(ContentCode(h))
    }

    pub fn style_encode(&self, domain: Domain, x: Var<'g, T>) -> Result<StyleCode<'g, T>> {
        Self::check_image(x, 16, "style_encode")?;
        let p = format!("{}.enc_s", domain.gen());
        let reflect = PadMode::Reflect;
        let mut h = self.conv(&format!("{p}.conv0"), x, 1, 3, reflect)?.relu();
        for name in ["down1", "down2", "down3", "down4"] {
            h = self.conv(&format!("{p}.{name}"), h, 2, 1, reflect)?.relu();
        }
        let pooled = h.global_avg_pool()?;
        Ok(StyleCode(self.fc(&format!("{p}.fc"), pooled)?))
    }

    /// AdaIN gamma/beta for every decoder residual convolution, as one `1 × 4096` vector.
    pub fn mlp_adain_params(&self, domain: Domain, s: StyleCode<'g, T>) -> Result<Var<'g, T>> {
        let p = format!("{}.mlp", domain.gen());
        let h = self.fc(&format!("{p}.fc0"), s.0)?.relu();
        let h = self.fc(&format!("{p}.fc1"), h)?.relu();
        self.fc(&format!("{p}.fc2"), h)
    }

    pub fn decode(&self, domain: Domain, c: ContentCode<'g, T>, s: StyleCode<'g, T>) -> Result<Var<'g, T>> {
        let shape = c.0.shape();
        if !matches!(*shape, [1, CONTENT_CHANNELS, _, _]) {
            return Err(Error::shape(
                "decode",
                format!("content code must be 1×{CONTENT_CHANNELS}×h×w, got {shape:?}"),
            ));
        }
        let adain = self.mlp_adain_params(domain, s)?;
        if adain.shape() != [1, ADAIN_PARAMS] {
            return Err(Error::shape(
                "decode",
                format!("style MLP produced {:?}, expected [1, {ADAIN_PARAMS}]", adain.shape()),
            ));
        }
        let p = format!("{}.dec", domain.gen());
        let reflect = PadMode::Reflect;
        let affine = |layer: usize| -> Result<(Var<'g, T>, Var<'g, T>)> {
            let offset = layer * 2 * CONTENT_CHANNELS;
            Ok((
                adain.slice(offset, [CONTENT_CHANNELS])?,
                adain.slice(offset + CONTENT_CHANNELS, [CONTENT_CHANNELS])?,
            ))
        };
        let mut h = c.0;
        for r in 0..RES_BLOCKS {
            let (ga, ba) = affine(2 * r)?;
            let (gb, bb) = affine(2 * r + 1)?;
            let mut y = self.conv(&format!("{p}.res{r}.a"), h, 1, 1, reflect)?;
            y = y.adain(ga, ba)?.relu();
            y = self.conv(&format!("{p}.res{r}.b"), y, 1, 1, reflect)?;
            y = y.adain(gb, bb)?;
            h = h.add(y)?;
        }
        for name in ["up1", "up2"] {
            h = h.upsample_nearest(2)?;
            h = self.conv(&format!("{p}.{name}"), h, 1, 2, reflect)?.relu();
        }
        Ok(self.conv(&format!("{p}.out"), h, 1, 3, reflect)?.tanh())
    }

    pub fn discriminate(&self, domain: Domain, x: Var<'g, T>) -> Result<DiscOutput<'g, T>> {
        let shape = x.shape();
        let [_, 3, h, w] = *shape else {
            return Err(Error::shape("discriminate", format!("expected an n×3×H×W image, got {shape:?}")));
        };
        let p = domain.disc();
        let mut maps = Vec::with_capacity(self.arch.disc_scales);
        let mut input = x;
        for s in 0..self.arch.disc_scales {
            if s > 0 {
                input = input.avg_pool3()?;
            }
            let side = (h >> s).min(w >> s);
            if side < 16 {
                return Err(Error::shape(
                    "discriminate",
                    format!("{h}×{w} input is too small for discriminator scale {s}"),
                ));
            }
            let mut y = input;
            for i in 0..DISC_CHANNELS.len() {
                y = self.conv(&format!("{p}.s{s}.conv{i}"), y, 2, 1, PadMode::Zero)?.leaky_relu(LEAKY_SLOPE);
            }
            maps.push(self.conv(&format!("{p}.s{s}.head"), y, 1, 0, PadMode::Zero)?);
        }
        Ok(DiscOutput { maps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(size: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::rand_uniform([1, 3, size, size], -1.0, 1.0, &mut rng)
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let arch = ArchConfig::for_size(32);
        let a = init_params::<f32>(&arch, 7).unwrap();
        let b = init_params::<f32>(&arch, 7).unwrap();
        let c = init_params::<f32>(&arch, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.all_finite());
    }

    #[test]
    fn shapes_at_32() {
        let arch = ArchConfig::for_size(32);
        let params = init_params::<f32>(&arch, 0).unwrap();
        let g = Graph::new();
        let m = Model::bind(&g, &params, &arch, Trainable::Nothing);
        let x = g.constant(image(32, 1));
        let c = m.content_encode(Domain::One, x).unwrap();
        assert_eq!(c.0.shape(), vec![1, 256, 8, 8]);
        let s = m.style_encode(Domain::One, x).unwrap();
        assert_eq!(s.0.shape(), vec![1, 8]);
        assert_eq!(m.mlp_adain_params(Domain::One, s).unwrap().shape(), vec![1, 4096]);
        let y = m.decode(Domain::Two, c, s).unwrap();
        assert_eq!(y.shape(), vec![1, 3, 32, 32]);
        assert!(y.value().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let d = m.discriminate(Domain::One, x).unwrap();
        assert_eq!(d.maps.len(), 1);
        assert_eq!(d.maps[0].shape(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn indivisible_extents_are_rejected() {
        let arch = ArchConfig::for_size(32);
        let params = init_params::<f32>(&arch, 0).unwrap();
        let g = Graph::new();
        let m = Model::bind(&g, &params, &arch, Trainable::Nothing);
        let x = g.constant(Tensor::zeros([1, 3, 30, 30]));
        assert!(m.content_encode(Domain::One, x).is_err());
        let y = g.constant(Tensor::zeros([1, 3, 36, 36]));
        assert!(m.content_encode(Domain::One, y).is_ok());
        assert!(m.style_encode(Domain::One, y).is_err());
    }

    #[test]
    fn constant_images_give_size_independent_style_codes() {
        let arch = ArchConfig::for_size(32);
        let params = init_params::<f64>(&arch, 3).unwrap();
        let g = Graph::new();
        let m = Model::bind(&g, &params, &arch, Trainable::Nothing);
        let small = m.style_encode(Domain::Two, g.constant(Tensor::full([1, 3, 16, 16], 0.3))).unwrap();
        let large = m.style_encode(Domain::Two, g.constant(Tensor::full([1, 3, 48, 48], 0.3))).unwrap();
        for (a, b) in small.0.value().data().iter().zip(large.0.value().data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_mlp_weights_yield_the_bias() {
        let arch = ArchConfig::for_size(32);
        let mut params = init_params::<f32>(&arch, 0).unwrap();
        params.insert("g1.mlp.fc2.w", Tensor::zeros([ADAIN_PARAMS, MLP_HIDDEN]));
        params.insert("g1.mlp.fc2.b", Tensor::full([ADAIN_PARAMS], 0.75));
        let g = Graph::new();
        let m = Model::bind(&g, &params, &arch, Trainable::Nothing);
        let s = StyleCode::new(g.constant(Tensor::full([8], 1.0))).unwrap();
        let out = m.mlp_adain_params(Domain::One, s).unwrap().value();
        assert!(out.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn disc_scale_count_is_respected() {
        for scales in 1..=3 {
            let arch = ArchConfig {
                image_size: 64,
                disc_scales: scales,
            };
            if arch.validate().is_err() {
                assert_eq!(scales, 3);
                continue;
            }
            let params = init_params::<f32>(&arch, 0).unwrap();
            let g = Graph::new();
            let m = Model::bind(&g, &params, &arch, Trainable::Nothing);
            let out = m.discriminate(Domain::Two, g.constant(image(64, 2))).unwrap();
            assert_eq!(out.maps.len(), scales);
        }
    }
}
