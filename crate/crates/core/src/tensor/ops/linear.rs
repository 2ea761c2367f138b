use crate::error::{Error, Result};
use crate::tensor::linalg::{matmul, MatRef};
use crate::tensor::{Backward, Element, Tensor, Var};

/// `y = x · Wᵀ + b` with the input flattened to `n × in` (first axis is the batch).
struct FullyConnected {
    n: usize,
    fan_in: usize,
    fan_out: usize,
}

impl<T: Element> Backward<T> for FullyConnected {
    fn name(&self) -> &'static str {
        "fully_connected"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let (n, i, o) = (self.n, self.fan_in, self.fan_out);
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); n * i];
            matmul(MatRef::new(grad, n, o), MatRef::new(w, o, i), &mut dx, false);
            dx
        });
        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); o * i];
            matmul(MatRef::t(grad, n, o), MatRef::new(x, n, i), &mut dw, false);
            dw
        });
        let db = needs[2].then(|| {
            let mut db = vec![T::zero(); o];
            for row in grad.chunks(o) {
                db.iter_mut().zip(row).for_each(|(a, &g)| *a = *a + g);
            }
            db
        });
        vec![dx, dw, db]
    }
}

impl<'g, T: Element> Var<'g, T> {
    /// Affine map. `weight` is `out × in`, `bias` has `out` values; output is `n × out`.
    pub fn fully_connected(self, weight: Var<'g, T>, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let (fan_out, fan_in) = match *w.shape() {
            [o, i] => (o, i),
            ref s => return Err(Error::shape("fully_connected", format!("weight must be 2-D, got {s:?}"))),
        };
        let n = x.shape().first().copied().unwrap_or(1).max(1);
        if x.len() != n * fan_in {
            return Err(Error::shape(
                "fully_connected",
                format!("input {:?} flattens to {} per sample, weight expects {fan_in}", x.shape(), x.len() / n),
            ));
        }
        if b.len() != fan_out {
            return Err(Error::shape(
                "fully_connected",
                format!("bias has {} values for {fan_out} outputs", b.len()),
            ));
        }
        let mut out = vec![T::zero(); n * fan_out];
        matmul(MatRef::new(x.data(), n, fan_in), MatRef::t(w.data(), fan_out, fan_in), &mut out, false);
        for row in out.chunks_mut(fan_out) {
            row.iter_mut().zip(b.data()).for_each(|(v, &bv)| *v = *v + bv);
        }
        let out = Tensor::new([n, fan_out], out)?;
        Ok(self.graph().record(out, &[self, weight, bias], FullyConnected { n, fan_in, fan_out }))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn identity_and_bias_only() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::new([1, 3], vec![1.0, -2.0, 0.5]).unwrap());
        let mut eye = vec![0.0; 9];
        (0..3).for_each(|i| eye[i * 4] = 1.0);
        let w = g.constant(Tensor::new([3, 3], eye).unwrap());
        let zero_b = g.constant(Tensor::zeros([3]));
        assert_eq!(x.fully_connected(w, zero_b).unwrap().value().data(), x.value().data());

        let zw = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::new([2], vec![4.0, -1.0]).unwrap());
        assert_eq!(x.fully_connected(zw, b).unwrap().value().data(), &[4.0, -1.0]);
    }

    #[test]
    fn pooled_feature_to_style_code() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 256, 1, 1]));
        let w = g.constant(Tensor::zeros([8, 256]));
        let b = g.constant(Tensor::zeros([8]));
        assert_eq!(x.fully_connected(w, b).unwrap().shape(), vec![1, 8]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 5]));
        let w = g.constant(Tensor::zeros([8, 4]));
        let b = g.constant(Tensor::zeros([8]));
        assert!(x.fully_connected(w, b).is_err());
    }
}
