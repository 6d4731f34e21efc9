//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn revgen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revgen"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Toy config: 4×4 synthetic two-class data, identity features, tiny epochs.
fn write_toy_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("toy.toml");
    let base = "\
[architecture]
preset = \"toy-4x4\"

[prior]
k = 8
select_sample = 64

[training]
recon_epochs = 1
adv_epochs = 1
ot_epochs = 2
batch_size = 16
per_class_batch = 8

[eval]
feature = \"identity\"
sample_n = 32

[data]
source = \"synthetic\"
synth_n = 64
synth_classes = 2
synth_side = 4
";
    std::fs::write(&path, format!("{base}{extra}")).unwrap();
    path
}

fn train(dir: &Path, sub: &str, run: &str, extra_args: &[&str]) -> PathBuf {
    let cfg = write_toy_config(dir, "");
    let out_dir = dir.join(run);
    let mut args = vec![
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra_args);
    let out = revgen(&args, dir);
    assert!(out.status.success(), "{sub} failed: {}", stderr(&out));
    out_dir.join("ckpt-final.rgck")
}

fn png_dims(path: &Path) -> (u32, u32) {
    image::image_dimensions(path).expect("readable png")
}

#[test]
fn selftest_reports_every_registered_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = revgen(&["selftest"], tmp.path());
    assert!(out.status.success(), "selftest failed: {}", stdout(&out));
    let text = stdout(&out);
    let passed = text.lines().filter(|l| l.starts_with("ok ")).count();
    assert!(!text.contains("FAIL"), "no check may fail on a fresh build:\n{text}");
    let summary = text.lines().last().unwrap();
    let expect = format!("selftest: {passed}/{passed} checks passed");
    assert_eq!(summary, expect, "summary must count exactly the printed checks");
    assert!(passed >= 3, "suite covers round-trips, gradients, and the solver oracle");
}

#[test]
fn sampling_twice_with_one_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "train-adversarial", "run", &[]);
    let ckpt = ckpt.to_str().unwrap();
    for name in ["a.png", "b.png"] {
        let out = revgen(
            &["sample", "--ckpt", ckpt, "--n", "9", "--seed", "7", "--out", name],
            tmp.path(),
        );
        assert!(out.status.success(), "sample failed: {}", stderr(&out));
    }
    let a = std::fs::read(tmp.path().join("a.png")).unwrap();
    let b = std::fs::read(tmp.path().join("b.png")).unwrap();
    assert_eq!(a, b, "one seed must reproduce the PNG byte for byte");

    let sidecar = std::fs::read_to_string(tmp.path().join("a.png.txt")).unwrap();
    assert!(
        sidecar.starts_with("min=") && sidecar.contains("\nmax="),
        "sidecar records the normalization range, got: {sidecar}"
    );
}

#[test]
fn unknown_config_keys_are_named_on_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[training]\nlearning_rate = 3\n").unwrap();
    let out = revgen(
        &["train-adversarial", "--config", bad.to_str().unwrap(), "--out", "run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("learning_rate"), "message names the bad key");

    let cfg = write_toy_config(tmp.path(), "");
    let out = revgen(
        &[
            "train-adversarial",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "run2",
            "--set",
            "training.warmup=9",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2), "bad --set key: {}", stderr(&out));
    assert!(stderr(&out).contains("warmup"));
}

#[test]
fn reconstruction_grid_has_three_rows_and_needs_the_adversarial_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let adv = train(tmp.path(), "train-adversarial", "runa", &[]);
    let ot = train(tmp.path(), "train-ot", "runo", &[]);

    let out = revgen(
        &["reconstruct", "--ckpt", adv.to_str().unwrap(), "--n", "5", "--out", "r.png"],
        tmp.path(),
    );
    assert!(out.status.success(), "reconstruct failed: {}", stderr(&out));
    let (w, h) = png_dims(&tmp.path().join("r.png"));
    assert_eq!((w, h), (5 * 4, 3 * 4), "5 columns of 4×4 images in 3 rows");

    let out = revgen(
        &["reconstruct", "--ckpt", ot.to_str().unwrap(), "--n", "5", "--out", "r2.png"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(5), "transport checkpoints are refused");
}

#[test]
fn interpolation_grid_holds_one_row_of_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "train-adversarial", "run", &[]);
    for mode in ["restricted", "full"] {
        let name = format!("{mode}.png");
        let out = revgen(
            &[
                "interpolate",
                "--ckpt",
                ckpt.to_str().unwrap(),
                "--index-a",
                "0",
                "--index-b",
                "5",
                "--steps",
                "7",
                "--mode",
                mode,
                "--out",
                &name,
            ],
            tmp.path(),
        );
        assert!(out.status.success(), "interpolate {mode} failed: {}", stderr(&out));
        assert_eq!(png_dims(&tmp.path().join(&name)), (7 * 4, 4));
    }
}

#[test]
fn traversal_sweeps_one_grid_row_per_dim() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "train-ot", "run", &[]);
    let out = revgen(
        &[
            "traverse",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--dims",
            "top:3",
            "--steps",
            "5",
            "--out",
            "t.png",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "traverse failed: {}", stderr(&out));
    assert_eq!(png_dims(&tmp.path().join("t.png")), (5 * 4, 3 * 4));

    let out = revgen(
        &[
            "traverse",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--dims",
            "0,99",
            "--steps",
            "5",
            "--out",
            "t2.png",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2), "out-of-range dims are refused");
}

#[test]
fn eval_writes_the_metric_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "train-ot", "run", &[]);

    // A tiny IDX pair matching the toy net's 4×4 input.
    let n = 48usize;
    let mut images = Vec::new();
    images.extend(0x0803u32.to_be_bytes());
    images.extend((n as u32).to_be_bytes());
    images.extend(4u32.to_be_bytes());
    images.extend(4u32.to_be_bytes());
    images.extend((0..n * 16).map(|i| (i * 37 % 256) as u8));
    let mut labels = Vec::new();
    labels.extend(0x0801u32.to_be_bytes());
    labels.extend((n as u32).to_be_bytes());
    labels.extend((0..n).map(|i| (i % 2) as u8));
    std::fs::write(tmp.path().join("im.idx"), images).unwrap();
    std::fs::write(tmp.path().join("lb.idx"), labels).unwrap();

    let out = revgen(
        &[
            "eval",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--dataset",
            "im.idx",
            "lb.idx",
            "--out",
            "m.csv",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "eval failed: {}", stderr(&out));
    let csv = std::fs::read_to_string(tmp.path().join("m.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,value");
    assert!(lines[1].starts_with("frechet_feature_distance,"));
    let l1: f64 = lines[2].strip_prefix("round_trip_l1,").unwrap().parse().unwrap();
    assert!(l1 < 1e-6, "round trip is lossless to f32 noise, got {l1}");
    assert_eq!(lines.len(), 5, "one effective-dims row per class");
    for (c, line) in lines[3..].iter().enumerate() {
        let used: usize =
            line.strip_prefix(&format!("effective_dims_class{c:02},")).unwrap().parse().unwrap();
        assert!((1..=16).contains(&used), "dim usage within the 16-dim latent, got {used}");
    }
}

#[test]
fn resumed_training_reaches_the_continuous_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let straight = train(tmp.path(), "train-adversarial", "runc", &[]);

    // Same config stopped after the first epoch, then resumed to the end.
    let half = train(tmp.path(), "train-adversarial", "runh", &["--set", "training.adv_epochs=0"]);
    let resumed = train(
        tmp.path(),
        "train-adversarial",
        "runr",
        &["--resume", half.to_str().unwrap()],
    );

    let a = std::fs::read(straight).unwrap();
    let b = std::fs::read(resumed).unwrap();
    assert_eq!(a, b, "resume must land on the continuous run's exact bytes");
}
