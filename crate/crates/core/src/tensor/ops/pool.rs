use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor, Var};

struct GlobalAvgPool;

impl<T: Element> Backward<T> for GlobalAvgPool {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let s = inputs[0].shape();
        let m = s[2] * s[3];
        let inv = T::one() / T::of(m as f64);
        let mut g = Vec::with_capacity(inputs[0].len());
        for &d in grad {
            g.extend(std::iter::repeat(d * inv).take(m));
        }
        vec![Some(g)]
    }
}

/// Replicates each pixel into a `factor × factor` block.
pub fn upsample_nearest_forward<T: Element>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("upsample_nearest")?;
    if factor < 2 {
        return Err(Error::invalid("upsample_nearest", format!("factor must be at least 2, got {factor}")));
    }
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks(h * w) {
        for oy in 0..ho {
            let row = &plane[(oy / factor) * w..(oy / factor + 1) * w];
            for ox in 0..wo {
                out.push(row[ox / factor]);
            }
        }
    }
    Tensor::new([n, c, ho, wo], out)
}

struct UpsampleNearest {
    factor: usize,
}

impl<T: Element> Backward<T> for UpsampleNearest {
    fn name(&self) -> &'static str {
        "upsample_nearest"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let s = inputs[0].shape();
        let (h, w) = (s[2], s[3]);
        let f = self.factor;
        let (ho, wo) = (h * f, w * f);
        let mut g = vec![T::zero(); inputs[0].len()];
        for (dst, src) in g.chunks_mut(h * w).zip(grad.chunks(ho * wo)) {
            for oy in 0..ho {
                for ox in 0..wo {
                    let d = &mut dst[(oy / f) * w + ox / f];
                    *d = *d + src[oy * wo + ox];
                }
            }
        }
        vec![Some(g)]
    }
}

/// 3×3 average pooling, stride 2, padding 1, averaging only over in-bounds pixels.
pub fn avg_pool3_forward<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("avg_pool")?;
    let (ho, wo) = ((h + 1) / 2, (w + 1) / 2);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks(h * w) {
        for oy in 0..ho {
            for ox in 0..wo {
                let (ys, xs) = (window(oy, h), window(ox, w));
                let mut acc = T::zero();
                for y in ys.clone() {
                    for xx in xs.clone() {
                        acc = acc + plane[y * w + xx];
                    }
                }
                out.push(acc / T::of((ys.len() * xs.len()) as f64));
            }
        }
    }
    Tensor::new([n, c, ho, wo], out)
}

fn window(o: usize, size: usize) -> std::ops::Range<usize> {
    let start = (2 * o).saturating_sub(1);
    let end = (2 * o + 2).min(size);
    start..end
}

struct AvgPool3;

impl<T: Element> Backward<T> for AvgPool3 {
    fn name(&self) -> &'static str {
        "avg_pool"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let s = inputs[0].shape();
        let (h, w) = (s[2], s[3]);
        let (ho, wo) = ((h + 1) / 2, (w + 1) / 2);
        let mut g = vec![T::zero(); inputs[0].len()];
        for (dst, src) in g.chunks_mut(h * w).zip(grad.chunks(ho * wo)) {
            for oy in 0..ho {
                for ox in 0..wo {
                    let (ys, xs) = (window(oy, h), window(ox, w));
                    let share = src[oy * wo + ox] / T::of((ys.len() * xs.len()) as f64);
                    for y in ys {
                        for xx in xs.clone() {
                            dst[y * w + xx] = dst[y * w + xx] + share;
                        }
                    }
                }
            }
        }
        vec![Some(g)]
    }
}

impl<'g, T: Element> Var<'g, T> {
    /// Spatial mean per (sample, channel); output is `n × c × 1 × 1`.
    pub fn global_avg_pool(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4("global_avg_pool")?;
        let m = T::of((h * w) as f64);
        let data = x.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / m).collect();
        let out = Tensor::new([n, c, 1, 1], data)?;
        Ok(self.graph().record(out, &[self], GlobalAvgPool))
    }

    pub fn upsample_nearest(self, factor: usize) -> Result<Var<'g, T>> {
        let out = upsample_nearest_forward(&self.value(), factor)?;
        Ok(self.graph().record(out, &[self], UpsampleNearest { factor }))
    }

    /// Halves the spatial extent with a 3×3, stride-2 average.
    pub fn avg_pool3(self) -> Result<Var<'g, T>> {
        let out = avg_pool3_forward(&self.value())?;
        Ok(self.graph().record(out, &[self], AvgPool3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    #[test]
    fn global_pool_examples() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new([1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 5.0, 5.0]).unwrap());
        assert_eq!(x.global_avg_pool().unwrap().value().data(), &[2.5, 5.0]);
        let big = g.constant(Tensor::zeros([1, 256, 16, 16]));
        assert_eq!(big.global_avg_pool().unwrap().shape(), vec![1, 256, 1, 1]);
    }

    #[test]
    fn upsample_replicates_blocks() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_nearest_forward(&x, 2).unwrap();
        #[rustfmt::skip]
        let want = [1.0, 1.0, 2.0, 2.0,
                    1.0, 1.0, 2.0, 2.0,
                    3.0, 3.0, 4.0, 4.0,
                    3.0, 3.0, 4.0, 4.0];
        assert_eq!(y.data(), &want);
        assert!(upsample_nearest_forward(&x, 1).is_err());
    }

    #[test]
    fn upsample_shape_and_backward() {
        let g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros([1, 256, 64, 64]));
        assert_eq!(x.upsample_nearest(2).unwrap().shape(), vec![1, 256, 128, 128]);
        let small = g.leaf(Tensor::zeros([1, 1, 3, 3]));
        let grads = g.backward(small.upsample_nearest(2).unwrap().sum()).unwrap();
        assert!(grads.get(small).unwrap().data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn avg_pool_halves_and_excludes_padding() {
        let x = Tensor::<f64>::full([1, 1, 4, 4], 3.0);
        let y = avg_pool3_forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| (v - 3.0).abs() < 1e-15));
    }
}
