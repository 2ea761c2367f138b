//! Sample statistics of a trained (or freshly initialized) model.
//!
//! Nothing here is pass/fail. The report measures how far the model is from
//! the ideal state: encoded styles of translations distributed like the
//! N(0, I) prior, matching content-code statistics across the two domains,
//! vanishing cycle errors, and low affine loss on translations.

use std::fmt::Write as _;

use rand::Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::losses::{to_unit_range, AffineMatrices};
use crate::networks::{Domain, Model, StyleCode, Trainable, STYLE_DIM};
use crate::rng::{self, site};
use crate::tensor::{Graph, Tensor};
use crate::trainer::{build_affine_matrices, checkpoint_arch, sample_style_prior, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagnoseConfig {
    /// Prior draws used only for the prior's own moments.
    pub prior_samples: usize,
    /// Prior draws pushed through the networks in each direction.
    pub translation_samples: usize,
    pub seed: u64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            prior_samples: 100_000,
            translation_samples: 16,
            seed: 0,
        }
    }
}

/// Sample mean and covariance of `d`-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Row-major `d × d`, normalized by `count − 1`.
    pub covariance: Vec<f64>,
}

impl Moments {
    pub fn of(samples: &[Vec<f64>]) -> Result<Self> {
        let count = samples.len();
        if count < 2 {
            return Err(Error::invalid("Moments::of", format!("need at least 2 samples, got {count}")));
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::shape("Moments::of", "samples differ in length"));
        }
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut covariance = vec![0.0; d * d];
        for s in samples {
            for i in 0..d {
                let di = s[i] - mean[i];
                for j in 0..d {
                    covariance[i * d + j] += di * (s[j] - mean[j]);
                }
            }
        }
        covariance.iter_mut().for_each(|c| *c /= (count - 1) as f64);
        Ok(Self { count, mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn max_abs_mean(&self) -> f64 {
        self.mean.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `max |Σ − I|` over all entries.
    pub fn max_cov_deviation(&self) -> f64 {
        let d = self.dim();
        self.covariance
            .iter()
            .enumerate()
            .map(|(k, c)| (c - if k / d == k % d { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateReport {
    pub prior_1: Moments,
    pub prior_2: Moments,
    /// Domain-1 style codes of translations into domain 1.
    pub style_1: Moments,
    /// Domain-2 style codes of translations into domain 2.
    pub style_2: Moments,
    /// Mean absolute difference of per-channel content-code mean and std between the domains.
    pub content_moment_distance: f64,
    /// `x → (c, s) → x` mean absolute errors.
    pub image_cycle: [f64; 2],
    /// Content errors after a round trip through the other domain, averaged over samples.
    pub content_cycle: [f64; 2],
    /// Style errors of the prior code recovered from the translation, averaged over samples.
    pub style_cycle: [f64; 2],
    /// Affine loss of `x₁→₂` against `M₁` and `x₂→₁` against `M₂`, averaged over samples.
    pub affine: [f64; 2],
}

fn l1(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let n = a.len().max(1) as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f64::from((x - y).abs()))
        .sum::<f64>()
        / n
}

/// Per-channel spatial mean and std of a `1 × C × h × w` code.
fn channel_stats(t: &Tensor<f32>) -> Result<Vec<f64>> {
    let (_, c, h, w) = t.dims4("channel_stats")?;
    let plane = h * w;
    let mut out = Vec::with_capacity(2 * c);
    for ch in t.data().chunks(plane).take(c) {
        let mean = ch.iter().map(|&v| f64::from(v)).sum::<f64>() / plane as f64;
        let var = ch.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / plane as f64;
        out.push(mean);
        out.push(var.sqrt());
    }
    Ok(out)
}

fn to_vec(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| f64::from(v)).collect()
}

fn draw_prior(seed: u64, index: usize, site: u64) -> Tensor<f32> {
    sample_style_prior(&mut rng::stream(seed, index as u64, site))
}

/// Moments of `n` prior draws, taken from the same stream the translations use.
pub fn prior_moments(seed: u64, n: usize, site: u64) -> Result<Moments> {
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64, site);
            (0..STYLE_DIM).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
        })
        .collect();
    Moments::of(&samples)
}

/// Measures the state of the model stored in `ckpt` on the pair `(x1, x2)`.
pub fn measure_state(ckpt: &Checkpoint, x1: &Tensor<f32>, x2: &Tensor<f32>, cfg: &DiagnoseConfig) -> Result<StateReport> {
    if cfg.translation_samples < 2 || cfg.prior_samples < 2 {
        return Err(Error::invalid("measure_state", "sample counts must be at least 2"));
    }
    let arch = checkpoint_arch(ckpt)?;
    let train = TrainConfig::from_echo(&ckpt.config_echo)?;
    let matrices: AffineMatrices = build_affine_matrices(x1, x2, &train.matting)?;

    let graph = Graph::new();
    let model = Model::bind(&graph, &ckpt.params, &arch, Trainable::Nothing);
    let v1 = graph.constant(x1.clone());
    let v2 = graph.constant(x2.clone());
    let c1 = model.content_encode(Domain::One, v1)?;
    let c2 = model.content_encode(Domain::Two, v2)?;
    let s1 = model.style_encode(Domain::One, v1)?;
    let s2 = model.style_encode(Domain::Two, v2)?;
    let image_cycle = [
        l1(&model.decode(Domain::One, c1, s1)?.value(), x1),
        l1(&model.decode(Domain::Two, c2, s2)?.value(), x2),
    ];
    let stats1 = channel_stats(&c1.0.value())?;
    let stats2 = channel_stats(&c2.0.value())?;
    let content_moment_distance =
        stats1.iter().zip(&stats2).map(|(a, b)| (a - b).abs()).sum::<f64>() / stats1.len() as f64;

    let n = cfg.translation_samples;
    let mut codes = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut content_cycle = [0.0; 2];
    let mut style_cycle = [0.0; 2];
    let mut affine = [0.0; 2];
    for i in 0..n {
        // each sample gets its own graph so memory stays flat
        let g = Graph::new();
        let m = Model::bind(&g, &ckpt.params, &arch, Trainable::Nothing);
        let c1 = g.constant(Tensor::clone(&c1.0.value()));
        let c2 = g.constant(Tensor::clone(&c2.0.value()));
        let jobs = [
            (Domain::Two, c1, site::DIAGNOSE_STYLE_2, &matrices.m1),
            (Domain::One, c2, site::DIAGNOSE_STYLE_1, &matrices.m2),
        ];
        for (to, c, site, matrix) in jobs {
            let prior = g.constant(draw_prior(cfg.seed, i, site));
            let code = StyleCode::new(prior)?;
            let content = crate::networks::ContentCode(c);
            let x = m.decode(to, content, code)?;
            let back_c = m.content_encode(to, x)?;
            let back_s = m.style_encode(to, x)?;
            let slot = match to {
                Domain::One => 1,
                Domain::Two => 0,
            };
            content_cycle[slot] += l1(&back_c.0.value(), &c.value());
            style_cycle[slot] += l1(&back_s.0.value(), &prior.value());
            affine[slot] += f64::from(to_unit_range(x).affine_loss(matrix)?.item()?);
            codes[1 - slot].push(to_vec(&back_s.0.value()));
        }
    }
    for arr in [&mut content_cycle, &mut style_cycle, &mut affine] {
        arr.iter_mut().for_each(|v| *v /= n as f64);
    }
    let [codes1, codes2] = codes;
    let report = StateReport {
        prior_1: prior_moments(cfg.seed, cfg.prior_samples, site::DIAGNOSE_STYLE_1)?,
        prior_2: prior_moments(cfg.seed, cfg.prior_samples, site::DIAGNOSE_STYLE_2)?,
        style_1: Moments::of(&codes1)?,
        style_2: Moments::of(&codes2)?,
        content_moment_distance,
        image_cycle,
        content_cycle,
        style_cycle,
        affine,
    };
    if let Some((name, _)) = report.metrics().into_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("diagnostic {name}")));
    }
    Ok(report)
}

impl StateReport {
    /// `(name, value)` pairs in report order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut m = vec![
            ("prior_samples".to_string(), self.prior_1.count as f64),
            ("translation_samples".to_string(), self.style_1.count as f64),
        ];
        for (tag, mo) in [
            ("prior_1", &self.prior_1),
            ("prior_2", &self.prior_2),
            ("style_1", &self.style_1),
            ("style_2", &self.style_2),
        ] {
            m.push((format!("{tag}_max_abs_mean"), mo.max_abs_mean()));
            m.push((format!("{tag}_max_cov_deviation"), mo.max_cov_deviation()));
        }
        m.push(("content_moment_distance".into(), self.content_moment_distance));
        for i in 0..2 {
            m.push((format!("image_cycle_{}", i + 1), self.image_cycle[i]));
        }
        for i in 0..2 {
            m.push((format!("content_cycle_{}", i + 1), self.content_cycle[i]));
        }
        for i in 0..2 {
            m.push((format!("style_cycle_{}", i + 1), self.style_cycle[i]));
        }
        for i in 0..2 {
            m.push((format!("affine_x{}", i + 1), self.affine[i]));
        }
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "state report");
        let _ = writeln!(
            s,
            "  samples: {} prior draws, {} translations per direction",
            self.prior_1.count, self.style_1.count
        );
        for (label, mo) in [
            ("prior (domain 1)", &self.prior_1),
            ("prior (domain 2)", &self.prior_2),
            ("encoded style of x2→1", &self.style_1),
            ("encoded style of x1→2", &self.style_2),
        ] {
            let mean: Vec<String> = mo.mean.iter().map(|v| format!("{v:+.3}")).collect();
            let _ = writeln!(
                s,
                "  {label:<24} mean [{}]  max|Σ−I| {:.4}",
                mean.join(" "),
                mo.max_cov_deviation()
            );
        }
        let _ = writeln!(s, "  content moment distance  {:.6}", self.content_moment_distance);
        let _ = writeln!(s, "  image cycle error        {:.6} / {:.6}", self.image_cycle[0], self.image_cycle[1]);
        let _ = writeln!(s, "  content cycle error      {:.6} / {:.6}", self.content_cycle[0], self.content_cycle[1]);
        let _ = writeln!(s, "  style cycle error        {:.6} / {:.6}", self.style_cycle[0], self.style_cycle[1]);
        let _ = writeln!(s, "  affine loss              {:.6e} / {:.6e}", self.affine[0], self.affine[1]);
        let _ = writeln!(s);
        let _ = writeln!(s, "metric,value");
        for (k, v) in self.metrics() {
            let _ = writeln!(s, "{k},{v:?}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_moments_match_standard_normal() {
        let m = prior_moments(0, 100_000, site::DIAGNOSE_STYLE_1).unwrap();
        assert_eq!(m.dim(), 8);
        assert!(m.max_abs_mean() < 0.02, "{:?}", m.mean);
        assert!(m.max_cov_deviation() < 0.03);
    }

    #[test]
    fn moments_of_known_samples() {
        let m = Moments::of(&[vec![1.0, 0.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(m.mean, vec![2.0, 1.0]);
        assert_eq!(m.covariance, vec![2.0, 2.0, 2.0, 2.0]);
        assert!(Moments::of(&[vec![1.0]]).is_err());
    }

    #[test]
    fn identical_reconstruction_has_zero_cycle_error() {
        let t = Tensor::new([1, 3, 1, 2], vec![0.1, -0.5, 0.9, 0.0, 0.3, -1.0]).unwrap();
        assert_eq!(l1(&t, &t), 0.0);
    }
}
