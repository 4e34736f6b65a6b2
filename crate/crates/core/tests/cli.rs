use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pane_core::image::write_image;
use pane_core::model::{save_model, Layer, LayerSpec, Linear, ModelGraph};
use pane_core::Tensor;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn pane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pane")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn explain_writes_heatmap_and_pair() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture_dir();
    let out = dir.path().join("h.ppm");
    let res = pane(&[
        "explain", "--model", s(&fx.join("model.panew")), "--input", s(&fx.join("img_000.ppm")),
        "--class", "0", "--variant", "sum", "--out", s(&out), "--pair", s(&dir.path().join("pair")),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(std::fs::read(&out).unwrap().starts_with(b"P6"));
    for f in ["pair.pos.ptn", "pair.neg.ptn", "pair.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn float_modes_agree_on_heatmap_shape() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture_dir();
    let args = |out: &Path| {
        vec![
            "explain".to_string(), "--model".into(), s(&fx.join("model.panew")).into(),
            "--input".into(), s(&fx.join("img_001.ppm")).into(), "--variant".into(), "pos".into(),
            "--out".into(), s(out).into(),
        ]
    };
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    let ra = Command::new(env!("CARGO_BIN_EXE_pane")).args(args(&a)).env("PANE_FLOAT_MODE", "f32").output().unwrap();
    let rb = Command::new(env!("CARGO_BIN_EXE_pane")).args(args(&b)).env("PANE_FLOAT_MODE", "f64").output().unwrap();
    assert_eq!((code(&ra), code(&rb)), (0, 0));
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a.len(), b.len());
    // Quantized maps from the two precisions differ by at most one level.
    let header = b"P5\n32 32\n255\n".len();
    assert!(a[header..].iter().zip(&b[header..]).all(|(x, y)| x.abs_diff(*y) <= 1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&pane(&["explain", "--bogus"])), 1);
    assert_eq!(code(&pane(&["no-such-command"])), 1);
    assert_eq!(code(&pane(&[])), 1);
    let fx = fixture_dir();
    let (m, d) = (fx.join("model.panew"), s(&fx).to_string());
    assert_eq!(code(&pane(&["eval-remove", "--model", s(&m), "--data", &d, "--ratios", "0.5,2"])), 1);
    assert_eq!(code(&pane(&["eval-remove", "--model", s(&m), "--data", &d, "--fill", "lots"])), 1);
    assert_eq!(code(&pane(&["eval-remove", "--model", s(&m), "--data", &d, "--methods", "pane,x"])), 1);
    assert_eq!(code(&pane(&["eval-logit", "--model", s(&m), "--data", &d, "--variant", "middle"])), 1);
    let res = Command::new(env!("CARGO_BIN_EXE_pane"))
        .args(["info", "--model", s(&m)])
        .env("PANE_FLOAT_MODE", "f16")
        .output()
        .unwrap();
    assert_eq!(code(&res), 1);
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&pane(&["--help"])), 0);
    assert_eq!(code(&pane(&["explain", "--help"])), 0);
}

#[test]
fn data_errors_exit_two_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture_dir();
    let out = dir.path().join("h.ppm");
    let img = fx.join("img_000.ppm");

    let res = pane(&["explain", "--model", s(&dir.path().join("missing.panew")), "--input", s(&img), "--out", s(&out)]);
    assert_eq!(code(&res), 2);

    let mut bytes = std::fs::read(fx.join("model.panew")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let corrupt = dir.path().join("corrupt.panew");
    std::fs::write(&corrupt, bytes).unwrap();
    assert_eq!(code(&pane(&["explain", "--model", s(&corrupt), "--input", s(&img), "--out", s(&out)])), 2);

    let small = dir.path().join("small.pgm");
    write_image(&Tensor::<f64>::full(&[1, 4, 4], 9.0), &small).unwrap();
    let res = pane(&["explain", "--model", s(&fx.join("model.panew")), "--input", s(&small), "--out", s(&out)]);
    assert_eq!(code(&res), 2);

    let res = pane(&["eval-remove", "--model", s(&fx.join("model.panew")), "--data", s(dir.path())]);
    assert_eq!(code(&res), 2);

    assert!(!out.exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !["corrupt.panew", "small.pgm"].contains(&n.as_str()))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn bad_class_is_a_usage_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture_dir();
    let out = dir.path().join("h.ppm");
    let res = pane(&[
        "explain", "--model", s(&fx.join("model.panew")), "--input", s(&fx.join("img_000.ppm")),
        "--class", "5", "--out", s(&out),
    ]);
    assert_eq!(code(&res), 1);
    assert!(!out.exists());
}

#[test]
fn overflow_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let lin = Linear::new(Tensor::full(&[2, 4], 3e38f32), Tensor::zeros(&[2])).unwrap();
    let layers = vec![LayerSpec::new("flat", Layer::Flatten), LayerSpec::new("fc", Layer::Linear(lin))];
    let model = ModelGraph::new("huge", vec![1, 2, 2], layers, None).unwrap();
    let mpath = dir.path().join("huge.panew");
    std::fs::write(&mpath, save_model(&model)).unwrap();
    let img = dir.path().join("x.pgm");
    write_image(&Tensor::<f64>::full(&[1, 2, 2], 255.0), &img).unwrap();
    let out = dir.path().join("h.pgm");
    let res = pane(&["explain", "--model", s(&mpath), "--input", s(&img), "--out", s(&out)]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.exists());
}

#[test]
fn selftest_passes_on_shipped_fixture() {
    let res = pane(&["selftest", "--data", s(&fixture_dir())]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
}

#[test]
fn eval_csv_has_one_row_per_method_and_ratio() {
    let fx = fixture_dir();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("apd.csv");
    let res = pane(&[
        "eval-remove", "--model", s(&fx.join("model.panew")), "--data", s(&fx), "--methods", "pane_pos,vbp",
        "--ratios", "0,0.005,0.01", "--out-csv", s(&csv),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    // APD at ratio zero is exactly zero.
    assert!(rows.iter().filter(|r| r.contains(",0,")).all(|r| r.split(',').any(|f| f == "0")));
}
