//! 2-D convolution via im2col and a single GEMM per sample.

use super::PadMode;
use crate::error::{Error, Result};
use crate::tensor::linalg::{matmul, MatRef};
use crate::tensor::{Backward, Element, Tensor, Var};

/// `floor((size + 2·pad − kernel) / stride) + 1`, or `None` if the kernel does not fit.
pub fn conv2d_output_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (stride > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    mode: PadMode,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize, mode: PadMode) -> Result<Self> {
        let (n, cin, h, w) = match *input {
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(Error::shape("conv2d", format!("input must be 4-D, got {input:?}"))),
        };
        let (cout, wcin, kh, kw) = match *weight {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(Error::shape("conv2d", format!("weight must be 4-D, got {weight:?}"))),
        };
        if wcin != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input has {cin} channels but weight expects {wcin} (input {input:?}, weight {weight:?})"),
            ));
        }
        if kh != kw {
            return Err(Error::shape("conv2d", format!("kernel must be square, got {kh}×{kw}")));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be at least 1"));
        }
        if mode == PadMode::Reflect && (pad >= h || pad >= w) {
            return Err(Error::shape(
                "conv2d",
                format!("reflect padding {pad} needs spatial extents above {pad}, got {h}×{w}"),
            ));
        }
        let ho = conv2d_output_extent(h, kh, stride, pad);
        let wo = conv2d_output_extent(w, kw, stride, pad);
        let (Some(ho), Some(wo)) = (ho, wo) else {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}×{kw} with padding {pad} does not fit input height {h} / width {w}"),
            ));
        };
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            k: kh,
            stride,
            pad,
            mode,
            ho,
            wo,
        })
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    /// Source index along one axis for each padded position; `None` reads zero.
    fn padded_sources(&self, size: usize) -> Vec<Option<usize>> {
        (0..size + 2 * self.pad)
            .map(|i| {
                let pos = i as isize - self.pad as isize;
                if (0..size as isize).contains(&pos) {
                    Some(pos as usize)
                } else {
                    match self.mode {
                        PadMode::Zero => None,
                        PadMode::Reflect if pos < 0 => Some((-pos) as usize),
                        PadMode::Reflect => Some(2 * (size - 1) - pos as usize),
                    }
                }
            })
            .collect()
    }

    fn padded_w(&self) -> usize {
        self.w + 2 * self.pad
    }

    fn padded_len(&self) -> usize {
        (self.h + 2 * self.pad) * self.padded_w()
    }
}

/// Padded-to-source index maps for both axes.
struct Taps {
    y: Vec<Option<usize>>,
    x: Vec<Option<usize>>,
}

impl Taps {
    fn new(g: &Geometry) -> Self {
        Self {
            y: g.padded_sources(g.h),
            x: g.padded_sources(g.w),
        }
    }
}

fn pad_plane<T: Element>(g: &Geometry, taps: &Taps, plane: &[T], out: &mut [T]) {
    let wp = g.padded_w();
    for (py, sy) in taps.y.iter().enumerate() {
        let dst = &mut out[py * wp..(py + 1) * wp];
        match sy {
            None => dst.iter_mut().for_each(|v| *v = T::zero()),
            Some(sy) => {
                let src = &plane[sy * g.w..(sy + 1) * g.w];
                dst[g.pad..g.pad + g.w].copy_from_slice(src);
                for px in (0..g.pad).chain(g.pad + g.w..wp) {
                    dst[px] = taps.x[px].map_or(T::zero(), |sx| src[sx]);
                }
            }
        }
    }
}

fn im2col<T: Element>(g: &Geometry, taps: &Taps, image: &[T], cols: &mut [T], padded: &mut [T]) {
    let p = g.out_pixels();
    let wp = g.padded_w();
    for c in 0..g.cin {
        pad_plane(g, taps, &image[c * g.h * g.w..(c + 1) * g.h * g.w], padded);
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let seg = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let src = &padded[(oy * g.stride + ky) * wp + kx..];
                    if g.stride == 1 {
                        seg.copy_from_slice(&src[..g.wo]);
                    } else {
                        for (ox, v) in seg.iter_mut().enumerate() {
                            *v = src[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(g: &Geometry, taps: &Taps, cols: &[T], image: &mut [T], padded: &mut [T]) {
    let p = g.out_pixels();
    let wp = g.padded_w();
    for c in 0..g.cin {
        padded.iter_mut().for_each(|v| *v = T::zero());
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let seg = &src[oy * g.wo..(oy + 1) * g.wo];
                    let dst = &mut padded[(oy * g.stride + ky) * wp + kx..];
                    for (ox, &v) in seg.iter().enumerate() {
                        let d = &mut dst[ox * g.stride];
                        *d = *d + v;
                    }
                }
            }
        }
        let plane = &mut image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for (py, sy) in taps.y.iter().enumerate() {
            let Some(sy) = sy else { continue };
            let row = &padded[py * wp..(py + 1) * wp];
            let dst = &mut plane[sy * g.w..(sy + 1) * g.w];
            for (px, sx) in taps.x.iter().enumerate() {
                if let Some(sx) = sx {
                    dst[*sx] = dst[*sx] + row[px];
                }
            }
        }
    }
}

/// Forward convolution on plain tensors. `bias`, when given, has one value per output channel.
pub fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    mode: PadMode,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input.shape(), weight.shape(), stride, pad, mode)?;
    if let Some(b) = bias {
        if b.len() != g.cout {
            return Err(Error::shape(
                "conv2d",
                format!("bias has {} values for {} output channels", b.len(), g.cout),
            ));
        }
    }
    let taps = Taps::new(&g);
    let p = g.out_pixels();
    let mut out = vec![T::zero(); g.n * g.cout * p];
    let in_len = g.cin * g.h * g.w;
    T::with_scratch(g.patch_len() * p + g.padded_len(), |scratch| {
        let (cols, padded) = scratch.split_at_mut(g.patch_len() * p);
        for s in 0..g.n {
            im2col(&g, &taps, &input.data()[s * in_len..(s + 1) * in_len], cols, padded);
            let dst = &mut out[s * g.cout * p..(s + 1) * g.cout * p];
            matmul(
                MatRef::new(weight.data(), g.cout, g.patch_len()),
                MatRef::new(cols, g.patch_len(), p),
                dst,
                false,
            );
            if let Some(b) = bias {
                for (row, &bv) in dst.chunks_mut(p).zip(b.data()) {
                    row.iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        }
    });
    Tensor::new([g.n, g.cout, g.ho, g.wo], out)
}

struct Conv2d {
    geom: Geometry,
}

impl<T: Element> Backward<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = &self.geom;
        let (x, w) = (inputs[0], inputs[1]);
        let taps = Taps::new(g);
        let p = g.out_pixels();
        let kk = g.patch_len();
        let in_len = g.cin * g.h * g.w;
        let mut dx = needs[0].then(|| vec![T::zero(); x.len()]);
        let mut dw = needs[1].then(|| vec![T::zero(); w.len()]);
        T::with_scratch(kk * p + g.padded_len(), |scratch| {
            let (cols, padded) = scratch.split_at_mut(kk * p);
            for s in 0..g.n {
                let dout = &grad[s * g.cout * p..(s + 1) * g.cout * p];
                if let Some(dw) = dw.as_mut() {
                    im2col(g, &taps, &x.data()[s * in_len..(s + 1) * in_len], cols, padded);
                    matmul(MatRef::new(dout, g.cout, p), MatRef::t(cols, kk, p), dw, true);
                }
                if let Some(dx) = dx.as_mut() {
                    matmul(MatRef::t(w.data(), g.cout, kk), MatRef::new(dout, g.cout, p), cols, false);
                    col2im(g, &taps, cols, &mut dx[s * in_len..(s + 1) * in_len], padded);
                }
            }
        });
        let mut result = vec![dx, dw];
        if inputs.len() == 3 {
            let db = needs[2].then(|| {
                let mut db = vec![T::zero(); g.cout];
                for s in 0..g.n {
                    let dout = &grad[s * g.cout * p..(s + 1) * g.cout * p];
                    for (acc, row) in db.iter_mut().zip(dout.chunks(p)) {
                        *acc = row.iter().fold(*acc, |a, &v| a + v);
                    }
                }
                db
            });
            result.push(db);
        }
        result
    }
}

impl<'g, T: Element> Var<'g, T> {
    /// Square-kernel 2-D convolution. Weight layout is `cout × cin × k × k`.
    pub fn conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        pad: usize,
        mode: PadMode,
    ) -> Result<Var<'g, T>> {
        let (x, w) = (self.value(), weight.value());
        let b = bias.map(|b| b.value());
        let out = conv2d_forward(&x, &w, b.as_deref(), stride, pad, mode)?;
        let geom = Geometry::new(x.shape(), w.shape(), stride, pad, mode)?;
        let op = Conv2d { geom };
        Ok(match bias {
            Some(b) => self.graph().record(out, &[self, weight, b], op),
            None => self.graph().record(out, &[self, weight], op),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution with explicit padding, independent of im2col.
    fn direct_conv(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &[f64],
        stride: usize,
        pad: usize,
        mode: PadMode,
    ) -> Tensor<f64> {
        let (n, cin, h, wd) = x.dims4("t").unwrap();
        let (cout, _, k, _) = w.dims4("t").unwrap();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let read = |s: usize, c: usize, y: isize, xx: isize| -> f64 {
            let fix = |p: isize, size: usize| -> Option<usize> {
                if p >= 0 && (p as usize) < size {
                    Some(p as usize)
                } else if mode == PadMode::Reflect {
                    Some(if p < 0 { (-p) as usize } else { 2 * (size - 1) - p as usize })
                } else {
                    None
                }
            };
            match (fix(y, h), fix(xx, wd)) {
                (Some(y), Some(xx)) => x.data()[((s * cin + c) * h + y) * wd + xx],
                _ => 0.0,
            }
        };
        let mut out = vec![0.0; n * cout * ho * wo];
        for s in 0..n {
            for o in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[o];
                        for c in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let y = (oy * stride + ky) as isize - pad as isize;
                                    let xx = (ox * stride + kx) as isize - pad as isize;
                                    acc += w.data()[((o * cin + c) * k + ky) * k + kx] * read(s, c, y, xx);
                                }
                            }
                        }
                        out[((s * cout + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Tensor::new([n, cout, ho, wo], out).unwrap()
    }

    #[test]
    fn identity_kernel_returns_input() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new([1, 1, 3, 3], (0..9).map(f64::from).collect()).unwrap());
        let w = g.leaf(Tensor::full([1, 1, 1, 1], 1.0));
        let b = g.leaf(Tensor::zeros([1]));
        let y = x.conv2d(w, Some(b), 1, 0, PadMode::Zero).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(conv2d_output_extent(256, 7, 1, 3), Some(256));
        assert_eq!(conv2d_output_extent(256, 4, 2, 1), Some(128));
        assert_eq!(conv2d_output_extent(2, 5, 1, 0), None);
    }

    #[test]
    fn strided_instance_matches_direct_oracle() {
        // 1×1×6×6, 4×4 kernel, stride 2, padding 1 → 3×3 (same rule that gives 256 → 128)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::randn([1, 1, 6, 6], 1.0, &mut rng);
        let w = Tensor::<f64>::randn([1, 1, 4, 4], 1.0, &mut rng);
        let got = conv2d_forward(&x, &w, Some(&Tensor::full([1], 0.25)), 2, 1, PadMode::Zero).unwrap();
        assert_eq!(got.shape(), &[1, 1, 3, 3]);
        let want = direct_conv(&x, &w, &[0.25], 2, 1, PadMode::Zero);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_oracle_up_to_2x4x8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(n, cin, size, cout, k, stride, pad, mode) in &[
            (2, 4, 8, 3, 3, 1, 1, PadMode::Zero),
            (2, 4, 8, 3, 3, 1, 1, PadMode::Reflect),
            (1, 4, 8, 2, 4, 2, 1, PadMode::Reflect),
            (2, 2, 8, 5, 5, 1, 2, PadMode::Reflect),
            (1, 3, 7, 2, 7, 1, 3, PadMode::Reflect),
            (2, 4, 8, 1, 1, 1, 0, PadMode::Zero),
        ] {
            let x = Tensor::<f64>::randn([n, cin, size, size], 1.0, &mut rng);
            let w = Tensor::<f64>::randn([cout, cin, k, k], 1.0, &mut rng);
            let b = Tensor::<f64>::randn([cout], 1.0, &mut rng);
            let got = conv2d_forward(&x, &w, Some(&b), stride, pad, mode).unwrap();
            let want = direct_conv(&x, &w, b.data(), stride, pad, mode);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn channel_mismatch_names_dimensions() {
        let x = Tensor::<f32>::zeros([1, 3, 8, 8]);
        let w = Tensor::<f32>::zeros([4, 2, 3, 3]);
        let err = conv2d_forward(&x, &w, None, 1, 1, PadMode::Zero).unwrap_err().to_string();
        assert!(err.contains("3 channels") && err.contains("expects 2"), "{err}");
    }

    #[test]
    fn reflect_padding_needs_room() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let w = Tensor::<f32>::zeros([1, 1, 7, 7]);
        assert!(conv2d_forward(&x, &w, None, 1, 3, PadMode::Reflect).is_err());
    }
}
