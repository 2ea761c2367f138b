//! Trains on a synthetic cool/warm scene pair at 32×32 and prints the loss
//! terms as training goes. Checkpoints and metrics land in `target/train_pair`.
//!
//! ```bash
//! cargo run --release --example train_pair -- 200 0
//! ```
//!
//! Arguments: iterations (default 100) and λA (default 1e4).

use std::path::Path;

use ssit::image_io::{synthetic_scene, write_ppm};
use ssit::trainer::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let lambda_a: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e4);

    let out = Path::new("target/train_pair");
    std::fs::create_dir_all(out)?;
    let (content, style) = (out.join("content.ppm"), out.join("style.ppm"));
    write_ppm(&synthetic_scene(32, false), &content, None)?;
    write_ppm(&synthetic_scene(32, true), &style, None)?;

    let mut config = TrainConfig {
        iterations,
        ..TrainConfig::desk(&content, &style)
    };
    config.weights.lambda_a = lambda_a;
    println!("{:>5} {:>12} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}", "step", "total_g", "recon_x1", "recon_x2", "gan_g1", "gan_d1", "affine_x1", "affine_x2");
    let outcome = train(&config, out, None, |step, r| {
        if step % 10 == 0 || step <= 5 {
            println!(
                "{step:>5} {:>12.4e} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.3e} {:>10.3e}",
                r.total_g, r.recon_x1, r.recon_x2, r.gan_g1, r.gan_d1, r.affine_x1, r.affine_x2
            );
        }
    })?;
    println!("checkpoint {}", outcome.checkpoint.display());
    Ok(())
}
