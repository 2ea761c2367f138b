//! Prints the state report of a checkpoint on the synthetic scene pair.
//!
//! ```bash
//! cargo run --release --example diagnose -- target/train_pair/checkpoint-000100.ssit
//! ```
//!
//! Without an argument a fresh 2-step checkpoint is measured.

use std::path::{Path, PathBuf};

use ssit::checkpoint::Checkpoint;
use ssit::diagnostics::{measure_state, DiagnoseConfig};
use ssit::image_io::{load_image, synthetic_scene, write_ppm};
use ssit::trainer::{checkpoint_arch, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = Path::new("target/diagnose_demo");
    std::fs::create_dir_all(out)?;
    let (content, style) = (out.join("content.ppm"), out.join("style.ppm"));
    write_ppm(&synthetic_scene(32, false), &content, None)?;
    write_ppm(&synthetic_scene(32, true), &style, None)?;

    let path: PathBuf = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let config = TrainConfig {
                iterations: 2,
                ..TrainConfig::desk(&content, &style)
            };
            train(&config, out, None, |_, _| {})?.checkpoint
        }
    };
    let ckpt = Checkpoint::load(&path)?;
    let size = checkpoint_arch(&ckpt)?.image_size;
    let cfg = DiagnoseConfig {
        translation_samples: 8,
        ..DiagnoseConfig::default()
    };
    let report = measure_state(&ckpt, &load_image(&content, size)?, &load_image(&style, size)?, &cfg)?;
    print!("{}", report.to_text());
    Ok(())
}
