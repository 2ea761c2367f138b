use super::same_shape;
use crate::error::Result;
use crate::tensor::{Backward, Element, Tensor, Var};

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl<T: Element> Backward<T> for Binary {
    fn name(&self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }

    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (inputs[0].data(), inputs[1].data());
        let lhs = needs[0].then(|| match self {
            Binary::Add | Binary::Sub => grad.to_vec(),
            Binary::Mul => grad.iter().zip(b).map(|(&g, &y)| g * y).collect(),
        });
        let rhs = needs[1].then(|| match self {
            Binary::Add => grad.to_vec(),
            Binary::Sub => grad.iter().map(|&g| -g).collect(),
            Binary::Mul => grad.iter().zip(a).map(|(&g, &x)| g * x).collect(),
        });
        vec![lhs, rhs]
    }
}

#[derive(Clone, Copy)]
enum Unary<T> {
    Relu,
    LeakyRelu(T),
    Tanh,
    Sigmoid,
    Square,
    /// `ln(clamp(x, floor, 1 - floor))`
    LogClamped(T),
    Scale(T),
    Shift,
}

impl<T: Element> Unary<T> {
    fn forward(&self, x: T, shift: T) -> T {
        match *self {
            Unary::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Unary::LeakyRelu(slope) => {
                if x > T::zero() {
                    x
                } else {
                    x * slope
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Unary::Square => x * x,
            Unary::LogClamped(floor) => x.max(floor).min(T::one() - floor).ln(),
            Unary::Scale(k) => x * k,
            Unary::Shift => x + shift,
        }
    }
}

impl<T: Element> Backward<T> for Unary<T> {
    fn name(&self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Square => "square",
            Unary::LogClamped(_) => "log",
            Unary::Scale(_) => "scale",
            Unary::Shift => "add_scalar",
        }
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let x = inputs[0].data();
        let y = output.data();
        let two = T::of(2.0);
        let g: Vec<T> = match *self {
            // subgradient at the kink is 0
            Unary::Relu => grad
                .iter()
                .zip(x)
                .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                .collect(),
            Unary::LeakyRelu(slope) => grad
                .iter()
                .zip(x)
                .map(|(&g, &x)| if x > T::zero() { g } else { g * slope })
                .collect(),
            Unary::Tanh => grad.iter().zip(y).map(|(&g, &y)| g * (T::one() - y * y)).collect(),
            Unary::Sigmoid => grad.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect(),
            Unary::Square => grad.iter().zip(x).map(|(&g, &x)| g * two * x).collect(),
            Unary::LogClamped(floor) => grad
                .iter()
                .zip(x)
                .map(|(&g, &x)| {
                    if x < floor || x > T::one() - floor {
                        T::zero()
                    } else {
                        g / x
                    }
                })
                .collect(),
            Unary::Scale(k) => grad.iter().map(|&g| g * k).collect(),
            Unary::Shift => grad.to_vec(),
        };
        vec![Some(g)]
    }
}

impl<'g, T: Element> Var<'g, T> {
    fn binary(self, other: Var<'g, T>, op: Binary) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape(Backward::<T>::name(&op), a.shape(), b.shape())?;
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| match op {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
            })
            .collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.graph().record(out, &[self, other], op))
    }

    fn unary(self, op: Unary<T>, shift: T) -> Var<'g, T> {
        let out = self.value().map(|x| op.forward(x, shift));
        self.graph().record(out, &[self], op)
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, Binary::Sub)
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, Binary::Mul)
    }

    pub fn relu(self) -> Var<'g, T> {
        self.unary(Unary::Relu, T::zero())
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, T> {
        self.unary(Unary::LeakyRelu(T::of(slope)), T::zero())
    }

    pub fn tanh(self) -> Var<'g, T> {
        self.unary(Unary::Tanh, T::zero())
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary(Unary::Sigmoid, T::zero())
    }

    pub fn square(self) -> Var<'g, T> {
        self.unary(Unary::Square, T::zero())
    }

    /// Natural log of the input clamped to `[floor, 1 - floor]`; zero gradient where clamped.
    pub fn log_clamped(self, floor: f64) -> Var<'g, T> {
        self.unary(Unary::LogClamped(T::of(floor)), T::zero())
    }

    pub fn scale(self, k: f64) -> Var<'g, T> {
        self.unary(Unary::Scale(T::of(k)), T::zero())
    }

    pub fn add_scalar(self, c: f64) -> Var<'g, T> {
        self.unary(Unary::Shift, T::of(c))
    }
}
