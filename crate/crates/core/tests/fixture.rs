use std::path::{Path, PathBuf};

use pane_core::cli::probe_parity;
use pane_core::eval::load_dataset;
use pane_core::image::encode_netpbm;
use pane_core::model::{forward, load_model_file, save_model};
use pane_core::synth::{build_fixture_model, fixture_images};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

#[test]
fn probe_logits_match_within_tolerance() {
    let (ok, detail) = probe_parity(&fixture_dir()).unwrap();
    assert!(ok, "{detail}");
}

#[test]
fn manifest_is_consistent_with_bundle() {
    let dir = fixture_dir();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let model = load_model_file(&dir.join("model.panew")).unwrap();
    assert_eq!(manifest["file_hash"].as_str(), model.source_hash.as_deref());
    let layers = manifest["layers"].as_array().unwrap();
    assert_eq!(layers.len(), model.layers().len());
    for (entry, spec) in layers.iter().zip(model.layers()) {
        assert_eq!(entry["source"], spec.name.as_str());
        assert_eq!(entry["code"].as_u64(), Some(spec.kind().code() as u64));
    }
    assert_eq!(manifest["probes"].as_array().unwrap().len(), 10);
    assert!(manifest["train_accuracy"].as_f64().unwrap() >= 0.95);

    let data = load_dataset::<f32>(&dir).unwrap();
    assert_eq!(data.samples.len(), 100);
    let ppm = std::fs::read_dir(&dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ppm"))
        .count();
    assert_eq!(ppm, data.samples.len());
    let correct = data
        .samples
        .iter()
        .filter(|s| forward(&model, &s.image).unwrap().logits().argmax() == s.label)
        .count();
    assert!(correct >= 95, "eval accuracy {correct}/100");
}

#[test]
fn fixture_rebuilds_byte_identically() {
    let dir = fixture_dir();
    let train = fixture_images(1, 400);
    let (model, report) = build_fixture_model(0, &train);
    assert!(report.train_accuracy >= 0.95);
    assert_eq!(save_model(&model), std::fs::read(dir.join("model.panew")).unwrap());

    let eval = fixture_images(2, 100);
    for i in [0, 1, 57, 99] {
        let file = std::fs::read(dir.join(format!("img_{i:03}.ppm"))).unwrap();
        assert_eq!(encode_netpbm(&eval[i].0).unwrap(), file);
    }
}
