use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ssit::checkpoint::Checkpoint;
use ssit::image_io::{read_ppm, synthetic_scene, write_ppm, RgbImage};

fn ssit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_after(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in {text}"));
    line[key.len()..].trim().parse().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    for sub in ["train", "translate", "laplacian", "gradcheck", "diagnose"] {
        let o = ssit(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(stdout(&o).contains("Usage"));
    }
    assert_eq!(ssit(&["laplacian", "--image", "x.ppm", "--bogus"]).status.code(), Some(2));
    assert_eq!(ssit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ssit(&["laplacian", "--image", "/nonexistent.ppm"]).status.code(), Some(1));
}

#[test]
fn laplacian_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let image = tmp.path().join("img.ppm");
    let flat = tmp.path().join("flat.ppm");
    let pixels: Vec<u8> = (0..192u32).map(|i| ((i * 37 + 11) % 256) as u8).collect();
    write_ppm(&RgbImage::new(8, 8, pixels).unwrap(), &image, None).unwrap();
    write_ppm(&RgbImage::new(8, 8, [40, 180, 90].repeat(64)).unwrap(), &flat, None).unwrap();

    let own = ssit(&["laplacian", "--image", p(&image), "--other", p(&image)]);
    assert!(own.status.success());
    let text = stdout(&own);
    assert_eq!(value_after(&text, "order"), 64.0);
    let bound = 3.0 * 1e-5 * 36.0;
    assert!(value_after(&text, "affine loss") <= bound, "{text}");
    assert!(value_after(&text, "smallest eigenvalue") >= -1e-8);

    let constant = stdout(&ssit(&["laplacian", "--image", p(&image), "--other", p(&flat)]));
    assert!(value_after(&constant, "affine loss").abs() < 1e-8);
}

#[test]
fn gradcheck_subset_and_unknown_op() {
    let o = ssit(&["gradcheck", "--ops", "conv2d,affine_loss", "--seed", "0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
    assert_eq!(ssit(&["gradcheck", "--ops", "nope"]).status.code(), Some(1));
}

#[test]
fn train_translate_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.ppm"), tmp.path().join("b.ppm"));
    write_ppm(&synthetic_scene(32, false), &a, None).unwrap();
    write_ppm(&synthetic_scene(32, true), &b, None).unwrap();
    let train = |out: &str| {
        let dir = tmp.path().join(out);
        let o = ssit(&["train", "--content", p(&a), "--style", p(&b), "--out", p(&dir), "--size", "32", "--iters", "1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("step 1 total_g "));
        dir
    };
    let one = train("one");
    let two = train("two");
    let mut files: Vec<String> = fs::read_dir(&one).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["checkpoint-000001.ssit", "metrics.csv"]);
    for f in &files {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(two.join(f)).unwrap(), "{f}");
    }
    let ckpt = one.join("checkpoint-000001.ssit");
    assert_eq!(Checkpoint::load(&ckpt).unwrap().echo_value("lambda_a"), Some("10000.0"));

    let styled = tmp.path().join("styled.ppm");
    let o = ssit(&["translate", "--checkpoint", p(&ckpt), "--content", p(&a), "--style", p(&b), "--out", p(&styled)]);
    assert!(o.status.success());
    let bytes = fs::read(&styled).unwrap();
    let header = String::from_utf8_lossy(&bytes[..80]);
    assert!(header.contains("style=image:"), "{header}");
    let img = read_ppm(&styled).unwrap();
    assert_eq!((img.width, img.height), (32, 32));

    let both = ssit(&["translate", "--checkpoint", p(&ckpt), "--content", p(&a), "--style", p(&b), "--style-seed", "1", "--out", p(&styled)]);
    assert_eq!(both.status.code(), Some(2));

    let diag = |extra: &[&str]| {
        let mut args = vec!["diagnose", "--checkpoint", p(&ckpt), "--content", p(&a), "--style", p(&b), "--samples", "2", "--prior-samples", "1000"];
        args.extend_from_slice(extra);
        let o = ssit(&args);
        assert!(o.status.success());
        stdout(&o)
    };
    let report = tmp.path().join("report.txt");
    let first = diag(&["--out", p(&report)]);
    assert_eq!(first, diag(&[]));
    assert_eq!(fs::read_to_string(&report).unwrap(), first);
    assert!(first.contains("metric,value"));
}
