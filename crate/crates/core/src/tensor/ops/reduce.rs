use super::same_shape;
use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor, Var};

struct Sum;

impl<T: Element> Backward<T> for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![grad[0]; inputs[0].len()])]
    }
}

struct Mean;

impl<T: Element> Backward<T> for Mean {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let n = inputs[0].len();
        vec![Some(vec![grad[0] / T::of(n as f64); n])]
    }
}

/// Mean absolute difference.
struct L1Distance;

impl<T: Element> Backward<T> for L1Distance {
    fn name(&self) -> &'static str {
        "l1_distance"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let n = T::of(inputs[0].len() as f64);
        let scale = grad[0] / n;
        let sign: Vec<T> = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(&a, &b)| {
                let d = a - b;
                if d > T::zero() {
                    scale
                } else if d < T::zero() {
                    -scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let rhs = needs[1].then(|| sign.iter().map(|&s| -s).collect());
        vec![needs[0].then_some(sign), rhs]
    }
}

struct Reshape;

impl<T: Element> Backward<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.to_vec())]
    }
}

/// Contiguous range of the flattened input.
struct Slice {
    start: usize,
}

impl<T: Element> Backward<T> for Slice {
    fn name(&self) -> &'static str {
        "slice"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut g = vec![T::zero(); inputs[0].len()];
        g[self.start..self.start + grad.len()].copy_from_slice(grad);
        vec![Some(g)]
    }
}

impl<'g, T: Element> Var<'g, T> {
    pub fn sum(self) -> Var<'g, T> {
        let total = self.value().data().iter().copied().sum();
        self.graph().record(Tensor::scalar(total), &[self], Sum)
    }

    pub fn mean(self) -> Var<'g, T> {
        let v = self.value();
        let total: T = v.data().iter().copied().sum();
        let mean = total / T::of(v.len().max(1) as f64);
        self.graph().record(Tensor::scalar(mean), &[self], Mean)
    }

    /// Mean absolute elementwise difference, `mean(|self - other|)`.
    pub fn l1_distance(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("l1_distance", a.shape(), b.shape())?;
        let total: T = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs()).sum();
        let out = Tensor::scalar(total / T::of(a.len().max(1) as f64));
        Ok(self.graph().record(out, &[self, other], L1Distance))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let out = self.value().reshape(shape)?;
        Ok(self.graph().record(out, &[self], Reshape))
    }

    /// `len` consecutive elements of the flattened value starting at `start`, reshaped to `shape`.
    pub fn slice(self, start: usize, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let shape = shape.into();
        let len: usize = shape.iter().product();
        let v = self.value();
        if start + len > v.len() {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} exceeds length {}", start + len, v.len()),
            ));
        }
        let out = Tensor::new(shape, v.data()[start..start + len].to_vec())?;
        Ok(self.graph().record(out, &[self], Slice { start }))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn l1_examples() {
        let g = Graph::<f64>::new();
        let a = g.leaf(Tensor::new([2], vec![1.0, 2.0]).unwrap());
        let b = g.leaf(Tensor::zeros([2]));
        assert_eq!(a.l1_distance(b).unwrap().item().unwrap(), 1.5);
        assert_eq!(b.l1_distance(a).unwrap().item().unwrap(), 1.5);
        assert_eq!(a.l1_distance(a).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn l1_rejects_mismatched_shapes() {
        let g = Graph::<f32>::new();
        let a = g.leaf(Tensor::zeros([2, 2]));
        let b = g.leaf(Tensor::zeros([4]));
        assert!(a.l1_distance(b).is_err());
    }

    #[test]
    fn slice_gradient_scatters_back() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new([5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let s = x.slice(1, [2]).unwrap();
        assert_eq!(s.value().data(), &[2.0, 3.0]);
        let grads = g.backward(s.sum()).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(x.slice(4, [2]).is_err());
    }
}
