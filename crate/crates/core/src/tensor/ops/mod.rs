//! Differentiable operations on [`Var`](super::Var).
//!
//! Each op is a plain forward kernel plus a [`Backward`](super::Backward)
//! rule, exposed as a method on `Var`.

mod conv;
mod elementwise;
mod linear;
mod norm;
mod pool;
mod reduce;

pub use conv::{conv2d_forward, conv2d_output_extent};
pub use norm::{normalize_affine_forward, NORM_EPS};
pub use pool::{avg_pool3_forward, upsample_nearest_forward};

/// How a convolution reads pixels outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Reflect,
}

use crate::error::{Error, Result};

pub(crate) fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::shape(op, format!("operands have shapes {a:?} and {b:?}")))
    }
}
