//! Builds the matting Laplacian of a small synthetic scene, checks it against
//! the dense per-window least-squares oracle, and scores a few outputs.
//!
//! ```bash
//! cargo run --release --example matting_laplacian
//! ```

use ssit::image_io::{image_to_tensor_native, synthetic_scene, unit_range};
use ssit::matting::{affine_loss, brute_force_affine_cost, build_matting_laplacian, MattingConfig};
use ssit::tensor::Tensor;

fn main() -> ssit::Result<()> {
    let cfg = MattingConfig::default();
    let image = unit_range(&image_to_tensor_native::<f64>(&synthetic_scene(12, false))?)?;
    let m = build_matting_laplacian(&image, &cfg)?;
    println!("order {}  nonzeros {}  windows {}", m.order(), m.nnz(), cfg.window_count(12, 12));
    println!("max |row sum| {:.2e}  max asymmetry {:.2e}", m.max_abs_row_sum(), m.max_asymmetry());
    println!("smallest eigenvalue {:.2e}", m.smallest_eigenvalue());

    // a ramp is not locally affine in the scene's colors everywhere
    let ramp: Vec<f64> = (0..144).map(|i| (i % 12) as f64 / 11.0).collect();
    let fast = m.quadratic_form(&ramp);
    let slow = brute_force_affine_cost(&image, &ramp, &cfg)?;
    println!("ramp: αᵀMα {fast:.6e}  oracle {slow:.6e}");

    let shifted = Tensor::new([3, 12, 12], image.data().iter().map(|v| 0.8 * v + 0.1).collect())?;
    let noise = Tensor::new(
        [3, 12, 12],
        (0..432).map(|i| ((i * 7919) % 97) as f64 / 97.0).collect(),
    )?;
    println!("loss(image itself)   {:.3e}", affine_loss(&m, &image)?);
    println!("loss(affine recolor) {:.3e}", affine_loss(&m, &shifted)?);
    println!("loss(noise)          {:.3e}", affine_loss(&m, &noise)?);
    println!("loss(constant)       {:.3e}", affine_loss(&m, &Tensor::full([3, 12, 12], 0.4))?);
    Ok(())
}
