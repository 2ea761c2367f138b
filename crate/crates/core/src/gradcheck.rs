//! Central finite-difference verification of every differentiable op.
//!
//! Each op is evaluated in 64-bit precision on several random instances.
//! The scalar under test is `sum(op(inputs) ⊙ R)` for a fixed random
//! projection `R`, so the full vector-Jacobian product is exercised.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matting::{build_matting_laplacian, MattingConfig};
use crate::tensor::{Graph, PadMode, Tensor, Var};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
const INSTANCES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub op: &'static str,
    pub instances: usize,
    /// Worst `‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞)` over inputs and instances.
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

type Build = Box<dyn for<'g> Fn(&[Var<'g, f64>]) -> Result<Var<'g, f64>>>;

struct Case {
    inputs: Vec<Tensor<f64>>,
    build: Build,
}

fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, rng)
}

/// Values bounded away from zero so kinks (relu, |·|) are never straddled by the step.
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let mag = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

fn unit(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::rand_uniform(shape.to_vec(), 0.05, 0.95, rng)
}

const OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "square",
    "log",
    "sum",
    "mean",
    "l1_distance",
    "reshape",
    "slice",
    "conv2d",
    "conv2d_reflect",
    "conv2d_stride2",
    "instance_norm",
    "adain",
    "global_avg_pool",
    "fully_connected",
    "upsample_nearest",
    "avg_pool",
    "affine_loss",
];

/// Names accepted by [`check_op`].
pub fn op_names() -> &'static [&'static str] {
    OPS
}

fn make_case(op: &str, instance: usize, rng: &mut ChaCha8Rng) -> Result<Case> {
    let shapes: [&[usize]; 3] = [&[1, 2, 4, 4], &[2, 3, 3, 5], &[1, 1, 6, 6]];
    let s = shapes[instance % 3];
    let unary = |t: Tensor<f64>, f: fn(Var<'_, f64>) -> Var<'_, f64>| Case {
        inputs: vec![t],
        build: Box::new(move |v| Ok(f(v[0]))),
    };
    let case = match op {
        "add" | "sub" | "mul" => {
            let name = op.to_string();
            Case {
                inputs: vec![normal(s, rng), normal(s, rng)],
                build: Box::new(move |v| match name.as_str() {
                    "add" => v[0].add(v[1]),
                    "sub" => v[0].sub(v[1]),
                    _ => v[0].mul(v[1]),
                }),
            }
        }
        "scale" => unary(normal(s, rng), |x| x.scale(-1.75)),
        "add_scalar" => unary(normal(s, rng), |x| x.add_scalar(0.3)),
        "relu" => unary(off_kink(s, rng), |x| x.relu()),
        "leaky_relu" => unary(off_kink(s, rng), |x| x.leaky_relu(0.2)),
        "tanh" => unary(normal(s, rng), |x| x.tanh()),
        "sigmoid" => unary(normal(s, rng), |x| x.sigmoid()),
        "square" => unary(normal(s, rng), |x| x.square()),
        "log" => unary(unit(s, rng), |x| x.log_clamped(1e-7)),
        "sum" => unary(normal(s, rng), |x| x.sum()),
        "mean" => unary(normal(s, rng), |x| x.mean()),
        "l1_distance" => {
            let a = normal(s, rng);
            let gap = off_kink(s, rng);
            let b = Tensor::new(s.to_vec(), a.data().iter().zip(gap.data()).map(|(x, d)| x + d).collect())?;
            Case {
                inputs: vec![a, b],
                build: Box::new(|v| v[0].l1_distance(v[1])),
            }
        }
        "reshape" => {
            let len: usize = s.iter().product();
            Case {
                inputs: vec![normal(s, rng)],
                build: Box::new(move |v| v[0].reshape([len / s[0], s[0]])),
            }
        }
        "slice" => {
            let len: usize = s.iter().product();
            Case {
                inputs: vec![normal(s, rng)],
                build: Box::new(move |v| v[0].slice(len / 3, [len / 2])),
            }
        }
        "conv2d" | "conv2d_reflect" | "conv2d_stride2" => {
            let (k, stride, pad, mode) = match op {
                "conv2d" => (3, 1, 1, PadMode::Zero),
                "conv2d_reflect" => ([3, 5, 3][instance % 3], 1, [1, 2, 1][instance % 3], PadMode::Reflect),
                _ => (4, 2, 1, PadMode::Reflect),
            };
            let cout = 2 + instance;
            let x = normal(s, rng);
            Case {
                inputs: vec![x, normal(&[cout, s[1], k, k], rng), normal(&[cout], rng)],
                build: Box::new(move |v| v[0].conv2d(v[1], Some(v[2]), stride, pad, mode)),
            }
        }
        "instance_norm" | "adain" => {
            let c = s[1];
            let params = if op == "adain" { s[0] * c } else { c };
            let is_adain = op == "adain";
            Case {
                inputs: vec![normal(s, rng), normal(&[params], rng), normal(&[params], rng)],
                build: Box::new(move |v| {
                    if is_adain {
                        v[0].adain(v[1], v[2])
                    } else {
                        v[0].instance_norm(v[1], v[2])
                    }
                }),
            }
        }
        "global_avg_pool" => Case {
            inputs: vec![normal(s, rng)],
            build: Box::new(|v| v[0].global_avg_pool()),
        },
        "fully_connected" => {
            let fan_in: usize = s[1..].iter().product();
            let fan_out = 3 + instance;
            Case {
                inputs: vec![normal(s, rng), normal(&[fan_out, fan_in], rng), normal(&[fan_out], rng)],
                build: Box::new(|v| v[0].fully_connected(v[1], v[2])),
            }
        }
        "upsample_nearest" => {
            let factor = 2 + instance % 2;
            Case {
                inputs: vec![normal(s, rng)],
                build: Box::new(move |v| v[0].upsample_nearest(factor)),
            }
        }
        "avg_pool" => Case {
            inputs: vec![normal(s, rng)],
            build: Box::new(|v| v[0].avg_pool3()),
        },
        "affine_loss" => {
            let (h, w) = [(5, 5), (6, 4), (4, 7)][instance % 3];
            let reference = Tensor::<f64>::rand_uniform([3, h, w], 0.0, 1.0, rng);
            let matrix = Arc::new(build_matting_laplacian(&reference, &MattingConfig::default())?);
            Case {
                inputs: vec![unit(&[1, 3, h, w], rng)],
                build: Box::new(move |v| v[0].affine_loss(&matrix)),
            }
        }
        other => return Err(Error::invalid("gradcheck", format!("unknown op `{other}`"))),
    };
    Ok(case)
}

fn projected_loss(case: &Case, inputs: &[Tensor<f64>], projection: &Tensor<f64>) -> Result<f64> {
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = (case.build)(&vars)?;
    out.mul(g.constant(projection.clone()))?.sum().item()
}

fn check_case(case: &Case, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = Graph::new();
    let vars: Vec<_> = case.inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = (case.build)(&vars)?;
    let projection = Tensor::randn(out.shape(), 1.0, rng);
    let loss = out.mul(g.constant(projection.clone()))?.sum();
    let grads = g.backward(loss)?;

    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(case.inputs[i].shape().to_vec()));
        let mut numeric = vec![0.0; analytic.len()];
        let mut probe = case.inputs.clone();
        for (j, slot) in numeric.iter_mut().enumerate() {
            let x = case.inputs[i].data()[j];
            probe[i].data_mut()[j] = x + STEP;
            let plus = projected_loss(case, &probe, &projection)?;
            probe[i].data_mut()[j] = x - STEP;
            let minus = projected_loss(case, &probe, &projection)?;
            probe[i].data_mut()[j] = x;
            *slot = (plus - minus) / (2.0 * STEP);
        }
        let diff = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        let scale = analytic
            .max_abs()
            .max(numeric.iter().map(|v| v.abs()).fold(0.0, f64::max))
            .max(1e-12);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Checks one op on several random instances.
pub fn check_op(op: &str, seed: u64) -> Result<GradCheckReport> {
    let name = OPS
        .iter()
        .copied()
        .find(|&n| n == op)
        .ok_or_else(|| Error::invalid("gradcheck", format!("unknown op `{op}`; known: {}", OPS.join(", "))))?;
    let mut worst = 0.0f64;
    for instance in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (instance as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let case = make_case(name, instance, &mut rng)?;
        worst = worst.max(check_case(&case, &mut rng)?);
    }
    Ok(GradCheckReport {
        op: name,
        instances: INSTANCES,
        max_rel_error: worst,
    })
}

/// Checks the named ops, or every registered op when `ops` is `None`.
pub fn check_ops(ops: Option<&[String]>, seed: u64) -> Result<Vec<GradCheckReport>> {
    match ops {
        Some(list) => list.iter().map(|op| check_op(op, seed)).collect(),
        None => OPS.iter().map(|op| check_op(op, seed)).collect(),
    }
}
