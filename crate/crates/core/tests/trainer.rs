use std::fs;
use std::path::Path;

use ssit::checkpoint::Checkpoint;
use ssit::diagnostics::{measure_state, DiagnoseConfig};
use ssit::image_io::{load_image, synthetic_scene, write_ppm};
use ssit::tensor::Tensor;
use ssit::trainer::{checkpoint_path, read_metrics, train, translate, Direction, StyleSource, TrainConfig, Trainer};

fn desk(dir: &Path, iterations: u64) -> TrainConfig {
    let (a, b) = (dir.join("a.ppm"), dir.join("b.ppm"));
    write_ppm(&synthetic_scene(32, false), &a, None).unwrap();
    write_ppm(&synthetic_scene(32, true), &b, None).unwrap();
    TrainConfig {
        iterations,
        ..TrainConfig::desk(a, b)
    }
}

fn pair(cfg: &TrainConfig) -> (Tensor<f32>, Tensor<f32>) {
    (
        load_image(&cfg.content_path, cfg.image_size).unwrap(),
        load_image(&cfg.style_path, cfg.image_size).unwrap(),
    )
}

#[test]
fn resume_truncates_later_metrics_and_checks_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = TrainConfig {
        checkpoint_every: 1,
        ..desk(tmp.path(), 2)
    };
    let first = train(&cfg, &out, None, |_, _| {}).unwrap();
    assert_eq!(read_metrics(&first.metrics).unwrap().len(), 2);

    let again = train(&cfg, &out, Some(&checkpoint_path(&out, 2)), |_, _| {});
    assert!(again.unwrap_err().to_string().contains("already at step 2"));

    let ckpt1 = checkpoint_path(&out, 1);
    let before = fs::read(checkpoint_path(&out, 2)).unwrap();
    let resumed = train(&cfg, &out, Some(&ckpt1), |_, _| {}).unwrap();
    let rows = read_metrics(&resumed.metrics).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [1, 2]);
    assert_eq!(fs::read(&resumed.checkpoint).unwrap(), before);

    let (x1, x2) = pair(&cfg);
    let other_seed = TrainConfig { seed: 9, ..cfg.clone() };
    assert!(Trainer::resume(other_seed, x1, x2, Checkpoint::load(&ckpt1).unwrap()).is_err());
}

#[test]
fn disabled_matting_reports_zero_affine_terms() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk(tmp.path(), 1);
    cfg.matting_enabled = false;
    let (x1, x2) = pair(&cfg);
    let mut t = Trainer::new(cfg, x1, x2).unwrap();
    assert!(t.affine_matrices().is_none());
    let r = t.step().unwrap();
    assert_eq!((r.affine_x1, r.affine_x2), (0.0, 0.0));
    assert!(r.non_finite_term().is_none());
    assert!(t.params().all_finite());
    assert_eq!(t.step_count(), 1);
}

#[test]
fn translation_and_diagnostics_on_a_fresh_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = desk(tmp.path(), 1);
    let (x1, x2) = pair(&cfg);
    let ckpt = Trainer::new(cfg, x1.clone(), x2.clone()).unwrap().checkpoint();
    assert_eq!(ckpt.step, 0);

    let a = translate(&ckpt, &x1, &StyleSource::Prior(4), Direction::OneToTwo).unwrap();
    let b = translate(&ckpt, &x1, &StyleSource::Prior(4), Direction::OneToTwo).unwrap();
    let c = translate(&ckpt, &x1, &StyleSource::Prior(5), Direction::OneToTwo).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.shape(), [1, 3, 32, 32]);
    assert!(a.data().iter().all(|v| v.abs() <= 1.0));
    let small = Tensor::zeros([1, 3, 16, 16]);
    assert!(translate(&ckpt, &small, &StyleSource::Prior(4), Direction::TwoToOne).is_err());

    let cfg = DiagnoseConfig {
        prior_samples: 500,
        translation_samples: 2,
        seed: 3,
    };
    let r1 = measure_state(&ckpt, &x1, &x2, &cfg).unwrap();
    let r2 = measure_state(&ckpt, &x1, &x2, &cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.style_1.dim(), 8);
    assert!(r1.to_text().contains("\nmetric,value\n"));
    assert!(measure_state(&ckpt, &x1, &x2, &DiagnoseConfig { translation_samples: 1, ..cfg }).is_err());
}
