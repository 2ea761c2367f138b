//! Per-sample, per-channel spatial normalization with an affine transform.
//!
//! `instance_norm` (learned gamma/beta, one per channel) and `adain`
//! (gamma/beta produced from a style code, one per sample and channel)
//! share the same kernel.

use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor, Var};

/// Variance stabilizer added before the square root.
pub const NORM_EPS: f64 = 1e-5;

struct PlaneStats<T> {
    mean: T,
    inv_std: T,
}

fn plane_stats<T: Element>(plane: &[T]) -> PlaneStats<T> {
    let m = T::of(plane.len() as f64);
    let mean = plane.iter().copied().sum::<T>() / m;
    let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
    PlaneStats {
        mean,
        inv_std: T::one() / (var + T::of(NORM_EPS)).sqrt(),
    }
}

/// Number of affine parameters per (sample, channel) pair: either shared
/// across the batch (`len == c`) or per sample (`len == n·c`).
fn param_index(len: usize, n: usize, c: usize, op: &'static str) -> Result<bool> {
    if len == c {
        Ok(false)
    } else if len == n * c {
        Ok(true)
    } else {
        Err(Error::shape(
            op,
            format!("expected {c} (or {}) affine parameters for {c} channels, got {len}", n * c),
        ))
    }
}

/// `gamma · (x − μ) / sqrt(σ² + eps) + beta` over each spatial plane.
pub fn normalize_affine_forward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    op: &'static str,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4(op)?;
    if h * w < 2 {
        return Err(Error::shape(
            op,
            format!("spatial extent {h}×{w} is too small to normalize"),
        ));
    }
    let per_sample = param_index(gamma.len(), n, c, op)?;
    if gamma.len() != beta.len() {
        return Err(Error::shape(
            op,
            format!("gamma has {} values but beta has {}", gamma.len(), beta.len()),
        ));
    }
    let m = h * w;
    let mut out = Vec::with_capacity(x.len());
    for (idx, plane) in x.data().chunks(m).enumerate() {
        let p = if per_sample { idx } else { idx % c };
        let (g, b) = (gamma.data()[p], beta.data()[p]);
        let st = plane_stats(plane);
        out.extend(plane.iter().map(|&v| g * (v - st.mean) * st.inv_std + b));
    }
    Tensor::new(x.shape().to_vec(), out)
}

struct NormalizeAffine {
    name: &'static str,
    per_sample: bool,
    channels: usize,
}

impl<T: Element> Backward<T> for NormalizeAffine {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let shape = x.shape();
        let m = shape[2] * shape[3];
        let mf = T::of(m as f64);
        let mut dx = needs[0].then(|| vec![T::zero(); x.len()]);
        let mut dgamma = vec![T::zero(); gamma.len()];
        let mut dbeta = vec![T::zero(); gamma.len()];
        let mut xhat = vec![T::zero(); m];
        for (idx, (plane, dy)) in x.data().chunks(m).zip(grad.chunks(m)).enumerate() {
            let p = if self.per_sample { idx } else { idx % self.channels };
            let g = gamma.data()[p];
            let st = plane_stats(plane);
            for (h, &v) in xhat.iter_mut().zip(plane) {
                *h = (v - st.mean) * st.inv_std;
            }
            let sum_dy: T = dy.iter().copied().sum();
            let sum_dy_xhat: T = dy.iter().zip(&xhat).map(|(&d, &h)| d * h).sum();
            dgamma[p] = dgamma[p] + sum_dy_xhat;
            dbeta[p] = dbeta[p] + sum_dy;
            if let Some(dx) = dx.as_mut() {
                // dxhat = γ·dy; dx = inv_std·(dxhat − mean(dxhat) − xhat·mean(dxhat·xhat))
                let mean_d = g * sum_dy / mf;
                let mean_dh = g * sum_dy_xhat / mf;
                let dst = &mut dx[idx * m..(idx + 1) * m];
                for ((o, &d), &h) in dst.iter_mut().zip(dy).zip(&xhat) {
                    *o = st.inv_std * (g * d - mean_d - h * mean_dh);
                }
            }
        }
        vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
    }
}

impl<'g, T: Element> Var<'g, T> {
    fn normalize_affine(self, gamma: Var<'g, T>, beta: Var<'g, T>, name: &'static str) -> Result<Var<'g, T>> {
        let x = self.value();
        let out = normalize_affine_forward(&x, &gamma.value(), &beta.value(), name)?;
        let (n, c, _, _) = x.dims4(name)?;
        let per_sample = param_index(gamma.value().len(), n, c, name)?;
        let op = NormalizeAffine {
            name,
            per_sample,
            channels: c,
        };
        Ok(self.graph().record(out, &[self, gamma, beta], op))
    }

    /// Instance normalization with learned per-channel `gamma`/`beta`.
    pub fn instance_norm(self, gamma: Var<'g, T>, beta: Var<'g, T>) -> Result<Var<'g, T>> {
        self.normalize_affine(gamma, beta, "instance_norm")
    }

    /// Adaptive instance normalization: `gamma`/`beta` come from a style code
    /// and may be given per sample (`n·c` values) or shared (`c` values).
    pub fn adain(self, gamma: Var<'g, T>, beta: Var<'g, T>) -> Result<Var<'g, T>> {
        self.normalize_affine(gamma, beta, "adain")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel_stats(t: &Tensor<f64>, plane: usize) -> (f64, f64) {
        let (_, _, h, w) = t.dims4("t").unwrap();
        let m = h * w;
        let p = &t.data()[plane * m..(plane + 1) * m];
        let mean = p.iter().sum::<f64>() / m as f64;
        let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        (mean, var)
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::<f64>::full([1, 2, 3, 3], 7.0);
        let out = normalize_affine_forward(&x, &Tensor::full([2], 1.0), &Tensor::zeros([2]), "t").unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_affine_gives_standard_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::randn([2, 3, 5, 4], 3.0, &mut rng).map(|v| v + 2.0);
        let out = normalize_affine_forward(&x, &Tensor::full([3], 1.0), &Tensor::zeros([3]), "t").unwrap();
        for plane in 0..6 {
            let (mean, var) = channel_stats(&out, plane);
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn gamma_two_beta_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::randn([1, 1, 6, 6], 1.0, &mut rng);
        let out = normalize_affine_forward(&x, &Tensor::full([1], 2.0), &Tensor::full([1], 1.0), "t").unwrap();
        let (mean, var) = channel_stats(&out, 0);
        assert!((mean - 1.0).abs() < 1e-3);
        assert!((var.sqrt() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn adain_matches_requested_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::randn([1, 4, 8, 8], 2.0, &mut rng);
        let gamma = Tensor::<f64>::randn([4], 1.5, &mut rng);
        let beta = Tensor::<f64>::randn([4], 1.0, &mut rng);
        let g = Graph::new();
        let out = g
            .constant(x)
            .adain(g.constant(gamma.clone()), g.constant(beta.clone()))
            .unwrap()
            .value();
        for c in 0..4 {
            let (mean, var) = channel_stats(&out, c);
            assert!((mean - beta.data()[c]).abs() < 1e-3);
            assert!((var.sqrt() - gamma.data()[c].abs()).abs() < 1e-3);
        }
    }

    #[test]
    fn adain_zero_gamma_broadcasts_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::randn([1, 2, 4, 4], 1.0, &mut rng);
        let beta = Tensor::new([2], vec![0.5, -3.0]).unwrap();
        let out = normalize_affine_forward(&x, &Tensor::zeros([2]), &beta, "adain").unwrap();
        assert!(out.data()[..16].iter().all(|&v| v == 0.5));
        assert!(out.data()[16..].iter().all(|&v| v == -3.0));
    }

    #[test]
    fn rejects_bad_parameter_counts_and_unit_planes() {
        let x = Tensor::<f32>::zeros([1, 3, 4, 4]);
        assert!(normalize_affine_forward(&x, &Tensor::zeros([2]), &Tensor::zeros([2]), "adain").is_err());
        let tiny = Tensor::<f32>::zeros([1, 3, 1, 1]);
        assert!(normalize_affine_forward(&tiny, &Tensor::zeros([3]), &Tensor::zeros([3]), "in").is_err());
    }
}
