//! Writes the synthetic fixture bundle: `model.panew`, 100 PPM images,
//! `labels.csv` and `manifest.json`.
//!
//! Usage: `cargo run --example make_fixture -- [OUT_DIR] [SEED]`

use std::path::PathBuf;

use pane_core::image::{atomic_write, write_image};
use pane_core::model::{forward, load_model, save_model, Layer};
use pane_core::synth::{build_fixture_model, fixture_images};
use serde_json::json;

const TRAIN: usize = 400;
const EVAL: usize = 100;
const PROBES: usize = 10;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/synthetic".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&out)?;

    let train = fixture_images(seed.wrapping_add(1), TRAIN);
    let (model, report) = build_fixture_model(seed, &train);
    if report.train_accuracy < 0.95 {
        return Err(format!("train accuracy {} below 0.95; try another seed", report.train_accuracy).into());
    }
    let bytes = save_model(&model);
    atomic_write(&out.join("model.panew"), &bytes)?;
    let loaded = load_model(&bytes)?.cast::<f64>();

    let eval = fixture_images(seed.wrapping_add(2), EVAL);
    let mut labels = String::from("filename,label\n");
    let mut probes = Vec::new();
    let mut correct = 0;
    for (i, (img, label)) in eval.iter().enumerate() {
        let name = format!("img_{i:03}.ppm");
        write_image(img, &out.join(&name))?;
        labels.push_str(&format!("{name},{label}\n"));
        let logits = forward(&loaded, img)?.logits().clone();
        if logits.argmax() == *label {
            correct += 1;
        }
        if i < PROBES {
            probes.push(json!({ "file": name, "logits": logits.data() }));
        }
    }
    atomic_write(&out.join("labels.csv"), labels.as_bytes())?;

    let norm = loaded.norm().expect("fixture normalizes its input");
    let layers: Vec<_> = loaded
        .layers()
        .iter()
        .map(|l| {
            let kind = match &l.layer {
                Layer::Linear(_) => "Linear",
                Layer::Conv2d(_) => "Conv2d",
                Layer::Relu => "ReLU",
                Layer::MaxPool2d(_) => "MaxPool2d",
                Layer::AvgPool2d(_) => "AvgPool2d",
                Layer::BatchNorm(_) => "BatchNorm",
                Layer::Flatten => "Flatten",
            };
            json!({ "source": l.name, "kind": kind, "code": l.kind().code() })
        })
        .collect();
    let manifest = json!({
        "source_checkpoint": format!("synthetic-seed-{seed}"),
        "seed": seed,
        "file_hash": loaded.source_hash,
        "train_samples": report.train_samples,
        "train_accuracy": report.train_accuracy,
        "eval_samples": EVAL,
        "eval_accuracy": correct as f64 / EVAL as f64,
        "layers": layers,
        "normalization": { "mean": norm.mean, "std": norm.std },
        "probes": probes,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    atomic_write(&out.join("manifest.json"), text.as_bytes())?;
    println!(
        "wrote {} (train accuracy {:.3}, eval accuracy {:.3})",
        out.display(),
        report.train_accuracy,
        correct as f64 / EVAL as f64
    );
    Ok(())
}
