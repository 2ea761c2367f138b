//! Reconstruction, adversarial and affine loss terms, and the weighted total.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matting::SparseSym;
use crate::networks::{ContentCode, DiscOutput, Domain, Model, StyleCode};
use crate::tensor::{Element, Var};

/// Probabilities are kept inside `[CLAMP, 1 - CLAMP]` before taking logs.
pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_x: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_a: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_x: 10.0,
            lambda_c: 1.0,
            lambda_s: 1.0,
            lambda_a: 1e4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_x", self.lambda_x),
            ("lambda_c", self.lambda_c),
            ("lambda_s", self.lambda_s),
            ("lambda_a", self.lambda_a),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("LossWeights", format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Adversarial objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GanForm {
    /// Least squares on raw scores.
    #[default]
    Lsgan,
    /// Log form on sigmoid probabilities; the generator minimizes `−E[log D(G)]`.
    Log,
    /// Log form with the generator minimizing `E[log(1 − D(G))]` literally.
    LogSaturating,
}

impl fmt::Display for GanForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GanForm::Lsgan => "lsgan",
            GanForm::Log => "log",
            GanForm::LogSaturating => "log-saturating",
        })
    }
}

impl FromStr for GanForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsgan" => Ok(GanForm::Lsgan),
            "log" => Ok(GanForm::Log),
            "log-saturating" => Ok(GanForm::LogSaturating),
            other => Err(Error::invalid(
                "GanForm",
                format!("unknown form `{other}` (expected lsgan, log or log-saturating)"),
            )),
        }
    }
}

/// Per-iteration scalar values of every term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub recon_x1: f64,
    pub recon_x2: f64,
    pub recon_c1: f64,
    pub recon_c2: f64,
    pub recon_s1: f64,
    pub recon_s2: f64,
    pub gan_g1: f64,
    pub gan_g2: f64,
    pub gan_d1: f64,
    pub gan_d2: f64,
    pub affine_x1: f64,
    pub affine_x2: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    pub const FIELDS: [&'static str; 14] = [
        "recon_x1", "recon_x2", "recon_c1", "recon_c2", "recon_s1", "recon_s2", "gan_g1", "gan_g2", "gan_d1",
        "gan_d2", "affine_x1", "affine_x2", "total_g", "total_d",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.recon_x1,
            self.recon_x2,
            self.recon_c1,
            self.recon_c2,
            self.recon_s1,
            self.recon_s2,
            self.gan_g1,
            self.gan_g2,
            self.gan_d1,
            self.gan_d2,
            self.affine_x1,
            self.affine_x2,
            self.total_g,
            self.total_d,
        ]
    }

    pub fn from_values(v: [f64; 14]) -> Self {
        let [recon_x1, recon_x2, recon_c1, recon_c2, recon_s1, recon_s2, gan_g1, gan_g2, gan_d1, gan_d2, affine_x1, affine_x2, total_g, total_d] =
            v;
        Self {
            recon_x1,
            recon_x2,
            recon_c1,
            recon_c2,
            recon_s1,
            recon_s2,
            gan_g1,
            gan_g2,
            gan_d1,
            gan_d2,
            affine_x1,
            affine_x2,
            total_g,
            total_d,
        }
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        Self::FIELDS.iter().position(|f| *f == field).map(|i| self.values()[i])
    }

    pub fn csv_header() -> String {
        format!("step,{}", Self::FIELDS.join(","))
    }

    /// One metrics row. Values use the shortest representation that round-trips.
    pub fn csv_row(&self, step: u64) -> String {
        let mut row = step.to_string();
        for v in self.values() {
            row.push(',');
            row.push_str(&format!("{v:?}"));
        }
        row
    }

    pub fn parse_csv_row(line: &str) -> Result<(u64, Self)> {
        let bad = |detail: String| Error::invalid("LossReport::parse_csv_row", detail);
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells.len() != Self::FIELDS.len() + 1 {
            return Err(bad(format!("expected {} cells, got {}", Self::FIELDS.len() + 1, cells.len())));
        }
        let step = cells[0].parse().map_err(|e| bad(format!("step `{}`: {e}", cells[0])))?;
        let mut v = [0.0; 14];
        for (slot, (cell, name)) in v.iter_mut().zip(cells[1..].iter().zip(Self::FIELDS)) {
            *slot = cell.parse().map_err(|e| bad(format!("{name} `{cell}`: {e}")))?;
        }
        let report = Self::from_values(v);
        Ok((step, report))
    }

    /// First non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        Self::FIELDS
            .iter()
            .zip(self.values())
            .find(|(_, v)| !v.is_finite())
            .map(|(name, _)| *name)
    }
}

/// Weighted generator objective from already-evaluated terms.
pub fn total_generator_loss(r: &LossReport, w: &LossWeights) -> Result<f64> {
    if let Some(term) = LossReport::FIELDS[..12]
        .iter()
        .zip(r.values())
        .find(|(name, v)| !name.starts_with("gan_d") && !v.is_finite())
        .map(|(name, _)| *name)
    {
        return Err(Error::NonFinite(term.to_string()));
    }
    Ok(r.gan_g1
        + r.gan_g2
        + w.lambda_x * (r.recon_x1 + r.recon_x2)
        + w.lambda_c * (r.recon_c1 + r.recon_c2)
        + w.lambda_s * (r.recon_s1 + r.recon_s2)
        + w.lambda_a * (r.affine_x1 + r.affine_x2))
}

/// `‖G_i(E_i(x)) − x‖₁` in mean form.
pub fn image_recon_loss<'g, T: Element>(model: &Model<'g, T>, x: Var<'g, T>, domain: Domain) -> Result<Var<'g, T>> {
    let c = model.content_encode(domain, x)?;
    let s = model.style_encode(domain, x)?;
    model.decode(domain, c, s)?.l1_distance(x)
}

/// Content and style reconstruction after decoding `(c, s)` into domain `to`.
pub fn latent_recon_losses<'g, T: Element>(
    model: &Model<'g, T>,
    to: Domain,
    c: ContentCode<'g, T>,
    s: StyleCode<'g, T>,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    let translated = model.decode(to, c, s)?;
    latent_recon_from(model, to, translated, c, s)
}

fn latent_recon_from<'g, T: Element>(
    model: &Model<'g, T>,
    to: Domain,
    translated: Var<'g, T>,
    c: ContentCode<'g, T>,
    s: StyleCode<'g, T>,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    let c_back = model.content_encode(to, translated)?;
    let s_back = model.style_encode(to, translated)?;
    Ok((c_back.0.l1_distance(c.0)?, s_back.0.l1_distance(s.0)?))
}

fn mean_over_scales<'g, T: Element>(
    maps: &[Var<'g, T>],
    f: impl Fn(Var<'g, T>) -> Result<Var<'g, T>>,
) -> Result<Var<'g, T>> {
    let mut iter = maps.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("gan loss", "discriminator produced no score maps"))?;
    let mut acc = f(*first)?.mean();
    for &m in iter {
        acc = acc.add(f(m)?.mean())?;
    }
    Ok(acc.scale(1.0 / maps.len() as f64))
}

fn check_scales<T: Element>(fake: &DiscOutput<'_, T>, real: &DiscOutput<'_, T>) -> Result<()> {
    if fake.maps.len() != real.maps.len() {
        return Err(Error::shape(
            "gan loss",
            format!("{} fake maps vs {} real maps", fake.maps.len(), real.maps.len()),
        ));
    }
    Ok(())
}

/// `(g_term, d_term)` under least squares. Both are minimized.
pub fn gan_loss_lsgan<'g, T: Element>(
    fake: &DiscOutput<'g, T>,
    real: &DiscOutput<'g, T>,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    check_scales(fake, real)?;
    Ok((gan_generator_term(GanForm::Lsgan, fake)?, gan_discriminator_term(GanForm::Lsgan, fake, real)?))
}

/// `(g_term, d_term)` in log form. `d_term = E[log(1−D(G))] + E[log D(x)]` is
/// the quantity the discriminator maximizes.
pub fn gan_loss_log<'g, T: Element>(
    fake: &DiscOutput<'g, T>,
    real: &DiscOutput<'g, T>,
    non_saturating: bool,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    check_scales(fake, real)?;
    let form = if non_saturating { GanForm::Log } else { GanForm::LogSaturating };
    Ok((gan_generator_term(form, fake)?, gan_discriminator_term(form, fake, real)?))
}

/// Adversarial term the generator minimizes.
pub fn gan_generator_term<'g, T: Element>(form: GanForm, fake: &DiscOutput<'g, T>) -> Result<Var<'g, T>> {
    match form {
        GanForm::Lsgan => mean_over_scales(&fake.maps, |m| Ok(m.add_scalar(-1.0).square())),
        GanForm::Log => Ok(mean_over_scales(&fake.maps, |m| Ok(m.sigmoid().log_clamped(LOG_CLAMP)))?.scale(-1.0)),
        GanForm::LogSaturating => mean_over_scales(&fake.maps, |m| Ok(m.scale(-1.0).sigmoid().log_clamped(LOG_CLAMP))),
    }
}

/// Reported discriminator term: the least-squares loss, or the log-likelihood in log form.
///
/// The log forms read the maps as logits, `D = sigmoid(map)`.
pub fn gan_discriminator_term<'g, T: Element>(
    form: GanForm,
    fake: &DiscOutput<'g, T>,
    real: &DiscOutput<'g, T>,
) -> Result<Var<'g, T>> {
    check_scales(fake, real)?;
    match form {
        GanForm::Lsgan => {
            let r = mean_over_scales(&real.maps, |m| Ok(m.add_scalar(-1.0).square()))?;
            let f = mean_over_scales(&fake.maps, |m| Ok(m.square()))?;
            r.add(f)
        }
        GanForm::Log | GanForm::LogSaturating => {
            let f = mean_over_scales(&fake.maps, |m| Ok(m.scale(-1.0).sigmoid().log_clamped(LOG_CLAMP)))?;
            let r = mean_over_scales(&real.maps, |m| Ok(m.sigmoid().log_clamped(LOG_CLAMP)))?;
            f.add(r)
        }
    }
}

/// Converts a reported discriminator term into the quantity to minimize.
pub fn discriminator_objective<'g, T: Element>(form: GanForm, d_term: Var<'g, T>) -> Var<'g, T> {
    match form {
        GanForm::Lsgan => d_term,
        GanForm::Log | GanForm::LogSaturating => d_term.scale(-1.0),
    }
}

/// Laplacians of the two content images; `None` disables the affine terms entirely.
#[derive(Debug, Clone)]
pub struct AffineMatrices {
    pub m1: Arc<SparseSym>,
    pub m2: Arc<SparseSym>,
}

/// Every generator-side term of one bidirectional pass, still on the graph.
pub struct GeneratorPass<'g, T: Element> {
    pub x12: Var<'g, T>,
    pub x21: Var<'g, T>,
    pub recon_x1: Var<'g, T>,
    pub recon_x2: Var<'g, T>,
    pub recon_c1: Var<'g, T>,
    pub recon_c2: Var<'g, T>,
    pub recon_s1: Var<'g, T>,
    pub recon_s2: Var<'g, T>,
    pub affine_x1: Option<Var<'g, T>>,
    pub affine_x2: Option<Var<'g, T>>,
}

/// Encodes both images, reconstructs them, translates each into the other
/// domain with a prior style and re-encodes the translations.
///
/// `s1_prior` styles the `x₂ → x₁` translation and `s2_prior` the `x₁ → x₂` one.
pub fn generator_pass<'g, T: Element>(
    model: &Model<'g, T>,
    x1: Var<'g, T>,
    x2: Var<'g, T>,
    s1_prior: StyleCode<'g, T>,
    s2_prior: StyleCode<'g, T>,
    affine: Option<&AffineMatrices>,
) -> Result<GeneratorPass<'g, T>> {
    let c1 = model.content_encode(Domain::One, x1)?;
    let s1 = model.style_encode(Domain::One, x1)?;
    let c2 = model.content_encode(Domain::Two, x2)?;
    let s2 = model.style_encode(Domain::Two, x2)?;

    let recon_x1 = model.decode(Domain::One, c1, s1)?.l1_distance(x1)?;
    let recon_x2 = model.decode(Domain::Two, c2, s2)?.l1_distance(x2)?;

    let x12 = model.decode(Domain::Two, c1, s2_prior)?;
    let x21 = model.decode(Domain::One, c2, s1_prior)?;
    let (recon_c1, recon_s2) = latent_recon_from(model, Domain::Two, x12, c1, s2_prior)?;
    let (recon_c2, recon_s1) = latent_recon_from(model, Domain::One, x21, c2, s1_prior)?;

    let (affine_x1, affine_x2) = match affine {
        Some(m) => (
            Some(to_unit_range(x12).affine_loss(&m.m1)?),
            Some(to_unit_range(x21).affine_loss(&m.m2)?),
        ),
        None => (None, None),
    };
    Ok(GeneratorPass {
        x12,
        x21,
        recon_x1,
        recon_x2,
        recon_c1,
        recon_c2,
        recon_s1,
        recon_s2,
        affine_x1,
        affine_x2,
    })
}

/// `[−1, 1] → [0, 1]`, the color range the Laplacian was built in.
pub fn to_unit_range<'g, T: Element>(x: Var<'g, T>) -> Var<'g, T> {
    x.add_scalar(1.0).scale(0.5)
}

impl<'g, T: Element> GeneratorPass<'g, T> {
    /// Weighted generator objective on the graph. Terms whose weight is zero
    /// are left out, so a zero affine weight gives the same graph as a run
    /// without Laplacians.
    pub fn total(&self, gan_g1: Var<'g, T>, gan_g2: Var<'g, T>, w: &LossWeights) -> Result<Var<'g, T>> {
        let mut total = gan_g1.add(gan_g2)?;
        let pairs = [
            (w.lambda_x, Some(self.recon_x1), Some(self.recon_x2)),
            (w.lambda_c, Some(self.recon_c1), Some(self.recon_c2)),
            (w.lambda_s, Some(self.recon_s1), Some(self.recon_s2)),
            (w.lambda_a, self.affine_x1, self.affine_x2),
        ];
        for (weight, a, b) in pairs {
            if weight == 0.0 {
                continue;
            }
            if let (Some(a), Some(b)) = (a, b) {
                total = total.add(a.add(b)?.scale(weight))?;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    fn disc<'g>(g: &'g Graph<f64>, values: &[f64]) -> DiscOutput<'g, f64> {
        DiscOutput {
            maps: values.iter().map(|&v| g.constant(Tensor::full([1, 1, 2, 2], v))).collect(),
        }
    }

    #[test]
    fn default_weights_give_20026_on_unit_terms() {
        let mut r = LossReport::default();
        for f in LossReport::FIELDS {
            if !f.starts_with("total") {
                set(&mut r, f, 1.0);
            }
        }
        assert_eq!(total_generator_loss(&r, &LossWeights::default()).unwrap(), 20026.0);
        assert_eq!(total_generator_loss(&LossReport::default(), &LossWeights::default()).unwrap(), 0.0);
    }

    fn set(r: &mut LossReport, field: &str, v: f64) {
        let mut values = r.values();
        let i = LossReport::FIELDS.iter().position(|f| *f == field).unwrap();
        values[i] = v;
        *r = LossReport::from_values(values);
    }

    #[test]
    fn doubling_lambda_a_doubles_only_the_affine_part() {
        let mut r = LossReport::default();
        set(&mut r, "recon_x1", 0.3);
        set(&mut r, "affine_x2", 0.02);
        let w = LossWeights::default();
        let base = total_generator_loss(&r, &w).unwrap();
        let doubled = total_generator_loss(&r, &LossWeights { lambda_a: 2e4, ..w }).unwrap();
        assert!((doubled - base - 1e4 * 0.02).abs() < 1e-9);
    }

    #[test]
    fn non_finite_term_is_named() {
        let mut r = LossReport::default();
        set(&mut r, "recon_s2", f64::NAN);
        let err = total_generator_loss(&r, &LossWeights::default()).unwrap_err();
        assert!(err.to_string().contains("recon_s2"), "{err}");
        assert_eq!(r.non_finite_term(), Some("recon_s2"));
    }

    #[test]
    fn csv_round_trips() {
        let mut r = LossReport::default();
        set(&mut r, "gan_d1", 0.1 + 0.2);
        let row = r.csv_row(17);
        assert_eq!(LossReport::parse_csv_row(&row).unwrap(), (17, r));
        assert_eq!(LossReport::csv_header().split(',').count(), 15);
    }

    #[test]
    fn lsgan_reference_values() {
        let g = Graph::new();
        let (_, d) = gan_loss_lsgan(&disc(&g, &[0.0]), &disc(&g, &[1.0])).unwrap();
        assert_eq!(d.item().unwrap(), 0.0);
        let (gt, _) = gan_loss_lsgan(&disc(&g, &[1.0, 1.0]), &disc(&g, &[0.0, 0.0])).unwrap();
        assert_eq!(gt.item().unwrap(), 0.0);
        let half = disc(&g, &[0.5, 0.5, 0.5]);
        let (_, d) = gan_loss_lsgan(&half, &half).unwrap();
        assert_eq!(d.item().unwrap(), 0.5);
    }

    #[test]
    fn log_form_reference_values() {
        let g = Graph::new();
        // raw score 0 is probability 0.5
        let zero = disc(&g, &[0.0]);
        let (_, d) = gan_loss_log(&zero, &zero, true).unwrap();
        assert!((d.item().unwrap() - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        let (_, d) = gan_loss_log(&disc(&g, &[-60.0]), &disc(&g, &[60.0]), true).unwrap();
        assert!(d.item().unwrap() <= 0.0 && d.item().unwrap() > -1e-6);
        let (gt, d) = gan_loss_log(&disc(&g, &[1e4]), &disc(&g, &[-1e4]), false).unwrap();
        assert!(gt.item().unwrap().is_finite() && d.item().unwrap().is_finite());
        assert!((d.item().unwrap() - 2.0 * LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn gan_form_parses() {
        for form in [GanForm::Lsgan, GanForm::Log, GanForm::LogSaturating] {
            assert_eq!(form.to_string().parse::<GanForm>().unwrap(), form);
        }
        assert!("wgan".parse::<GanForm>().is_err());
    }

    #[test]
    fn negative_weights_are_rejected() {
        let w = LossWeights {
            lambda_c: -1.0,
            ..LossWeights::default()
        };
        assert!(w.validate().unwrap_err().to_string().contains("lambda_c"));
    }
}
