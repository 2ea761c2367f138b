//! Translates the content scene into the style domain three ways: with the
//! style image's own code and with two prior draws.
//!
//! ```bash
//! cargo run --release --example translate -- target/train_pair/checkpoint-000100.ssit
//! ```
//!
//! Without an argument a fresh 5-step checkpoint is trained first.

use std::path::{Path, PathBuf};

use ssit::checkpoint::Checkpoint;
use ssit::image_io::{load_image, save_image, synthetic_scene, write_ppm};
use ssit::trainer::{checkpoint_arch, train, translate, Direction, StyleSource, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = Path::new("target/translate_demo");
    std::fs::create_dir_all(out)?;
    let (content, style) = (out.join("content.ppm"), out.join("style.ppm"));
    write_ppm(&synthetic_scene(32, false), &content, None)?;
    write_ppm(&synthetic_scene(32, true), &style, None)?;

    let path: PathBuf = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let config = TrainConfig {
                iterations: 5,
                ..TrainConfig::desk(&content, &style)
            };
            train(&config, out, None, |_, _| {})?.checkpoint
        }
    };
    let ckpt = Checkpoint::load(&path)?;
    let size = checkpoint_arch(&ckpt)?.image_size;
    let x1 = load_image(&content, size)?;
    let sources = [
        ("from_style_image", StyleSource::Image(load_image(&style, size)?)),
        ("prior_seed_1", StyleSource::Prior(1)),
        ("prior_seed_2", StyleSource::Prior(2)),
    ];
    for (name, source) in &sources {
        let y = translate(&ckpt, &x1, source, Direction::OneToTwo)?;
        let file = out.join(format!("{name}.ppm"));
        save_image(&y, &file, Some(name))?;
        let mean = y.data().iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
        println!("{:<40} mean {mean:+.4}", file.display());
    }
    Ok(())
}
