//! Closed-form matting Laplacian and the affine photorealism loss.
//!
//! For every `(2r+1)²` window `w_k` fully inside the image, with color mean
//! `μ_k` and covariance `Σ_k`, pixels `i, j ∈ w_k` receive
//!
//! ```text
//! δ_ij − (1/|w|) · (1 + (I_i − μ_k)ᵀ (Σ_k + ε/|w| · Id₃)⁻¹ (I_j − μ_k))
//! ```
//!
//! summed over all windows. The resulting matrix `M` is symmetric, positive
//! semi-definite, and annihilates constant vectors. For a single channel
//! `α`, `αᵀMα` equals the summed per-window minimum of the regularized
//! least-squares fit `α ≈ aᵀI + b` (see [`brute_force_affine_cost`]).
//!
//! Colors are expected in `[0, 1]`.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MattingConfig {
    pub window_radius: usize,
    pub eps: f64,
}

impl Default for MattingConfig {
    fn default() -> Self {
        Self {
            window_radius: 1,
            eps: 1e-5,
        }
    }
}

impl MattingConfig {
    fn window_len(&self) -> usize {
        (2 * self.window_radius + 1).pow(2)
    }

    /// Number of windows that fit in an `h × w` image.
    pub fn window_count(&self, h: usize, w: usize) -> usize {
        let d = 2 * self.window_radius;
        h.saturating_sub(d) * w.saturating_sub(d)
    }

    fn validate(&self, h: usize, w: usize, op: &'static str) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(op, format!("eps must be positive, got {}", self.eps)));
        }
        let side = 2 * self.window_radius + 1;
        if h < side || w < side {
            return Err(Error::shape(
                op,
                format!("{h}×{w} image is smaller than the {side}×{side} window"),
            ));
        }
        Ok(())
    }
}

/// Symmetric sparse matrix in compressed-sparse-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Assembles a matrix from CSR arrays, checking structure but not symmetry.
    pub fn from_csr(n: usize, row_offsets: Vec<usize>, col_indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let ok = row_offsets.len() == n + 1
            && row_offsets.first() == Some(&0)
            && row_offsets.last() == Some(&col_indices.len())
            && col_indices.len() == values.len()
            && row_offsets.windows(2).all(|w| w[0] <= w[1])
            && col_indices.iter().all(|&c| c < n);
        if !ok {
            return Err(Error::invalid("SparseSym::from_csr", "inconsistent CSR arrays"));
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of one row, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must equal matrix order");
        (0..self.n).map(|i| self.row(i).map(|(j, m)| m * v[j]).sum()).collect()
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// `max |M − Mᵀ|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Smallest eigenvalue via a dense symmetric eigendecomposition. Intended for tiny matrices.
    pub fn smallest_eigenvalue(&self) -> f64 {
        self.to_dense()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Splits a `3×H×W` or `1×3×H×W` tensor into `(h, w)` and checks the channel count.
fn rgb_dims(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match *shape {
        [3, h, w] | [1, 3, h, w] => Ok((h, w)),
        _ => Err(Error::shape(op, format!("expected a 3×H×W (or 1×3×H×W) image, got {shape:?}"))),
    }
}

fn pixel(data: &[f64], hw: usize, p: usize) -> Vector3<f64> {
    Vector3::new(data[p], data[hw + p], data[2 * hw + p])
}

/// Builds the matting Laplacian of an RGB image with colors in `[0, 1]`.
pub fn build_matting_laplacian<T: Element>(image: &Tensor<T>, cfg: &MattingConfig) -> Result<SparseSym> {
    const OP: &str = "build_matting_laplacian";
    let (h, w) = rgb_dims(image.shape(), OP)?;
    cfg.validate(h, w, OP)?;
    let data: Vec<f64> = image.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{OP} input pixel ({bad})")));
    }
    if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid(OP, "pixel values must lie in [0, 1]"));
    }

    let r = cfg.window_radius as isize;
    let span = 4 * r + 1;
    let slots = (span * span) as usize;
    let hw = h * w;
    let wlen = cfg.window_len();
    let inv_wlen = 1.0 / wlen as f64;

    // Dense per-row accumulator over the (4r+1)² neighbourhood.
    let mut acc = vec![0.0f64; hw * slots];
    let mut touched = vec![false; hw * slots];
    let slot = |i: usize, j: usize| -> usize {
        let (yi, xi) = ((i / w) as isize, (i % w) as isize);
        let (yj, xj) = ((j / w) as isize, (j % w) as isize);
        ((yj - yi + 2 * r) * span + (xj - xi + 2 * r)) as usize
    };

    let mut members = Vec::with_capacity(wlen);
    let mut centered = Vec::with_capacity(wlen);
    for cy in cfg.window_radius..h - cfg.window_radius {
        for cx in cfg.window_radius..w - cfg.window_radius {
            members.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    members.push(((cy as isize + dy) as usize) * w + (cx as isize + dx) as usize);
                }
            }
            let mean = members.iter().map(|&p| pixel(&data, hw, p)).sum::<Vector3<f64>>() * inv_wlen;
            centered.clear();
            centered.extend(members.iter().map(|&p| pixel(&data, hw, p) - mean));
            let cov = centered.iter().map(|d| d * d.transpose()).sum::<Matrix3<f64>>() * inv_wlen;
            let reg = cov + Matrix3::identity() * (cfg.eps * inv_wlen);
            let inv = reg
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("window covariance at ({cy}, {cx})")))?;

            for a in 0..wlen {
                let proj = inv * centered[a];
                for b in a..wlen {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let v = delta - inv_wlen * (1.0 + proj.dot(&centered[b]));
                    let (i, j) = (members[a], members[b]);
                    let s = i * slots + slot(i, j);
                    acc[s] += v;
                    touched[s] = true;
                    if i != j {
                        let s = j * slots + slot(j, i);
                        acc[s] += v;
                        touched[s] = true;
                    }
                }
            }
        }
    }

    let mut row_offsets = Vec::with_capacity(hw + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for i in 0..hw {
        let (yi, xi) = ((i / w) as isize, (i % w) as isize);
        for k in 0..slots {
            if !touched[i * slots + k] {
                continue;
            }
            let (dy, dx) = (k as isize / span - 2 * r, k as isize % span - 2 * r);
            col_indices.push(((yi + dy) * w as isize + xi + dx) as usize);
            values.push(acc[i * slots + k]);
        }
        row_offsets.push(col_indices.len());
    }
    SparseSym::from_csr(hw, row_offsets, col_indices, values)
}

/// Per-channel vectors of a `[0,1]`-valued RGB tensor, row-major pixel order.
fn channel_vectors<T: Element>(m: &SparseSym, image: &Tensor<T>, op: &'static str) -> Result<Vec<Vec<f64>>> {
    let (h, w) = rgb_dims(image.shape(), op)?;
    if h * w != m.order() {
        return Err(Error::shape(
            op,
            format!("matrix order {} does not match a {h}×{w} image", m.order()),
        ));
    }
    Ok(image
        .data()
        .chunks(h * w)
        .map(|c| c.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
        .collect())
}

/// `Σ_c V_c[O]ᵀ M V_c[O]` over the three channels of `output`.
pub fn affine_loss<T: Element>(m: &SparseSym, output: &Tensor<T>) -> Result<f64> {
    let channels = channel_vectors(m, output, "affine_loss")?;
    Ok(channels.iter().map(|v| m.quadratic_form(v)).sum())
}

/// Gradient of [`affine_loss`]: `2·M·V_c[O]` per channel, in image layout.
pub fn affine_loss_grad<T: Element>(m: &SparseSym, output: &Tensor<T>) -> Result<Tensor<T>> {
    let channels = channel_vectors(m, output, "affine_loss_grad")?;
    let data = channels
        .iter()
        .flat_map(|v| m.mul_vec(v))
        .map(|g| T::of(2.0 * g))
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

struct AffineLoss {
    matrix: Arc<SparseSym>,
}

impl<T: Element> Backward<T> for AffineLoss {
    fn name(&self) -> &'static str {
        "affine_loss"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = affine_loss_grad(&self.matrix, inputs[0]).expect("shape validated in forward");
        vec![Some(g.data().iter().map(|&v| v * grad[0]).collect())]
    }
}

impl<'g, T: Element> Var<'g, T> {
    /// Differentiable [`affine_loss`] of this RGB image against a prebuilt Laplacian.
    pub fn affine_loss(self, matrix: &Arc<SparseSym>) -> Result<Var<'g, T>> {
        let value = affine_loss(matrix, &self.value())?;
        let op = AffineLoss {
            matrix: Arc::clone(matrix),
        };
        Ok(self.graph().record(Tensor::scalar(T::of(value)), &[self], op))
    }
}

/// Independent reference for `αᵀMα`: solves every window's 4-unknown
/// regularized least-squares problem densely and sums the minima.
pub fn brute_force_affine_cost<T: Element>(image: &Tensor<T>, alpha: &[f64], cfg: &MattingConfig) -> Result<f64> {
    const OP: &str = "brute_force_affine_cost";
    let (h, w) = rgb_dims(image.shape(), OP)?;
    cfg.validate(h, w, OP)?;
    if alpha.len() != h * w {
        return Err(Error::shape(OP, format!("alpha has {} values for {h}×{w} pixels", alpha.len())));
    }
    let data: Vec<f64> = image.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let hw = h * w;
    let r = cfg.window_radius;
    let mut total = 0.0;
    for cy in r..h - r {
        for cx in r..w - r {
            let mut normal = Matrix4::<f64>::zeros();
            let mut rhs = Vector4::<f64>::zeros();
            let mut feats = Vec::with_capacity(cfg.window_len());
            for y in cy - r..=cy + r {
                for x in cx - r..=cx + r {
                    let p = y * w + x;
                    let c = pixel(&data, hw, p);
                    let f = Vector4::new(c[0], c[1], c[2], 1.0);
                    normal += f * f.transpose();
                    rhs += f * alpha[p];
                    feats.push((f, alpha[p]));
                }
            }
            for d in 0..3 {
                normal[(d, d)] += cfg.eps;
            }
            let theta = normal
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular(format!("normal equations of window ({cy}, {cx})")))?;
            let residual: f64 = feats.iter().map(|(f, a)| (a - theta.dot(f)).powi(2)).sum();
            let ridge = cfg.eps * (theta[0].powi(2) + theta[1].powi(2) + theta[2].powi(2));
            total += residual + ridge;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::rand_uniform([3, h, w], 0.0, 1.0, &mut rng)
    }

    #[test]
    fn constant_vector_is_in_the_null_space() {
        let img = random_image(6, 7, 1);
        let m = build_matting_laplacian(&img, &MattingConfig::default()).unwrap();
        assert!(m.max_abs_row_sum() < 1e-8);
        assert!(m.quadratic_form(&vec![0.7; 42]).abs() < 1e-8);
    }

    #[test]
    fn interior_rows_have_25_columns() {
        let img = random_image(8, 8, 2);
        let m = build_matting_laplacian(&img, &MattingConfig::default()).unwrap();
        for y in 2..6 {
            for x in 2..6 {
                assert_eq!(m.row_nnz(y * 8 + x), 25);
            }
        }
        assert!((0..64).all(|i| m.row_nnz(i) <= 25));
        // corner pixel sits in one window only
        assert_eq!(m.row_nnz(0), 9);
    }

    #[test]
    fn symmetric_and_psd_on_8x8() {
        let img = random_image(8, 8, 3);
        let m = build_matting_laplacian(&img, &MattingConfig::default()).unwrap();
        assert!(m.max_asymmetry() < 1e-10);
        assert!(m.smallest_eigenvalue() >= -1e-8);
    }

    #[test]
    fn quadratic_form_matches_window_oracle() {
        let cfg = MattingConfig::default();
        let img = random_image(5, 5, 4);
        let m = build_matting_laplacian(&img, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let alpha: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let oracle = brute_force_affine_cost(&img, &alpha, &cfg).unwrap();
            assert!((m.quadratic_form(&alpha) - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_is_zero_for_constants_and_small_for_own_channels() {
        let cfg = MattingConfig::default();
        let img = random_image(6, 6, 5);
        assert!(brute_force_affine_cost(&img, &[0.3; 36], &cfg).unwrap().abs() < 1e-12);
        let bound = cfg.eps * cfg.window_count(6, 6) as f64;
        for c in 0..3 {
            let alpha = &img.data()[c * 36..(c + 1) * 36];
            assert!(brute_force_affine_cost(&img, alpha, &cfg).unwrap() <= bound);
        }
    }

    #[test]
    fn self_loss_within_witness_bound() {
        let cfg = MattingConfig::default();
        let img = random_image(8, 8, 6);
        let m = build_matting_laplacian(&img, &cfg).unwrap();
        let loss = affine_loss(&m, &img).unwrap();
        assert!(loss >= -3e-8);
        assert!(loss <= 3.0 * cfg.eps * cfg.window_count(8, 8) as f64);
    }

    #[test]
    fn gradient_is_linear_and_vanishes_on_constants() {
        let img = random_image(6, 6, 7);
        let m = build_matting_laplacian(&img, &MattingConfig::default()).unwrap();
        let flat = Tensor::<f64>::full([3, 6, 6], 0.4);
        assert!(affine_loss_grad(&m, &flat).unwrap().max_abs() < 1e-7);
        let out = random_image(6, 6, 8);
        let g1 = affine_loss_grad(&m, &out).unwrap();
        let g3 = affine_loss_grad(&m, &out.map(|v| 3.0 * v)).unwrap();
        for (a, b) in g1.data().iter().zip(g3.data()) {
            assert!((3.0 * a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn autodiff_op_matches_direct_gradient() {
        let img = random_image(5, 6, 10);
        let m = Arc::new(build_matting_laplacian(&img, &MattingConfig::default()).unwrap());
        let out = random_image(5, 6, 11).reshape([1, 3, 5, 6]).unwrap();
        let g = Graph::new();
        let x = g.leaf(out.clone());
        let loss = x.affine_loss(&m).unwrap().scale(2.0);
        let grads = g.backward(loss).unwrap();
        let direct = affine_loss_grad(&m, &out).unwrap();
        for (a, b) in grads.get(x).unwrap().data().iter().zip(direct.data()) {
            assert!((a - 2.0 * b).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let cfg = MattingConfig::default();
        assert!(build_matting_laplacian(&random_image(2, 8, 0), &cfg).is_err());
        let mut bad = random_image(4, 4, 0);
        bad.data_mut()[3] = f64::NAN;
        assert!(matches!(build_matting_laplacian(&bad, &cfg), Err(Error::NonFinite(_))));
        let m = build_matting_laplacian(&random_image(4, 4, 0), &cfg).unwrap();
        assert!(affine_loss(&m, &random_image(4, 5, 0)).is_err());
        let zero_eps = MattingConfig { eps: 0.0, ..cfg };
        assert!(build_matting_laplacian(&random_image(4, 4, 0), &zero_eps).is_err());
    }
}
