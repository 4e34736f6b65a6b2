//! The `pane` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! `PANE_FLOAT_MODE` (`f32` or `f64`, default `f32`) selects the precision.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chain::{pane_explain, pane_explain_from};
use crate::error::{Error, Result};
use crate::eval::{
    apd_csv, apd_curve, attack_csv, guided_attack_eval, load_dataset, logit_csv, logit_delta, AttackParams,
    Dataset, EvalConfig, Fill, LogitVariant, RemovalMode, KEEP_GRID, LOGIT_GRID, MINOR_GRID, SALIENT_GRID,
};
use crate::excitation::ChainState;
use crate::image::{atomic_write, read_image, write_heatmap, HeatStyle};
use crate::model::{forward, load_model_file, Layer, ModelGraph};
use crate::oracle::dense_oracle;
use crate::saliency::{assemble_pane, Collapse, Method, Variant};
use crate::synth::{random_input, random_model, rng, RandomModelOptions};
use crate::tensor::{DType, Real, Tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pane", version, about = "Positive/negative excitation saliency for small CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explain one image and write a heatmap.
    Explain(ExplainArgs),
    /// Salient-pixel removal curves (APD).
    EvalRemove(RemoveArgs),
    /// Minor-pixel removal curves (APD).
    EvalMinor(RemoveArgs),
    /// Logit change after lowering the highest- or lowest-ranked pixels by one.
    EvalLogit(LogitArgs),
    /// I-FGSM with perturbations kept only on top-ranked pixels.
    AttackGuide(AttackArgs),
    /// Built-in correctness checks on random models and an optional fixture.
    Selftest(SelftestArgs),
    /// Print a model's layers, shapes and hashes.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CollapseArg {
    Sum,
    Abs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StyleArg {
    Gray,
    Signed,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Class to explain; defaults to the top-1 prediction.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, default_value = "sum")]
    variant: Variant,
    #[arg(long, value_enum, default_value = "sum")]
    collapse: CollapseArg,
    /// Defaults to `signed` for the sum variant and `gray` otherwise.
    #[arg(long, value_enum)]
    style: Option<StyleArg>,
    #[arg(long)]
    out: PathBuf,
    /// Also save the raw excitation pair under this path stem.
    #[arg(long)]
    pair: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    /// Directory holding images and labels.csv.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// A pixel value in 0..=255, or `mean`.
    #[arg(long, default_value = "0")]
    fill: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RemoveArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct LogitArgs {
    #[command(flatten)]
    common: Common,
    /// `pos_region`, `neg_region`, or both when omitted.
    #[arg(long)]
    variant: Option<LogitVariant>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    keep_ratios: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50.0)]
    linf: f64,
    #[arg(long, default_value_t = 7.0)]
    step: f64,
    #[arg(long, default_value_t = 10)]
    iters: usize,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Number of random models per check.
    #[arg(long, default_value_t = 20)]
    models: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixture directory with model.panew and manifest.json for probe parity.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    model: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mode = match std::env::var("PANE_FLOAT_MODE") {
        Err(_) => DType::F32,
        Ok(v) if v == "f32" => DType::F32,
        Ok(v) if v == "f64" => DType::F64,
        Ok(v) => {
            eprintln!("error: PANE_FLOAT_MODE must be f32 or f64, got {v:?}");
            return EXIT_USAGE;
        }
    };
    let result = match mode {
        DType::F32 => dispatch::<f32>(cli.command),
        DType::F64 => dispatch::<f64>(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Maps an error onto the exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Invalid(_) | Error::ClassIndex { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn dispatch<T: Real>(cmd: Command) -> Result<i32> {
    let done = match cmd {
        Command::Explain(a) => explain::<T>(a),
        Command::EvalRemove(a) => eval_remove::<T>(a.common, RemovalMode::Salient),
        Command::EvalMinor(a) => eval_remove::<T>(a.common, RemovalMode::Minor),
        Command::EvalLogit(a) => eval_logit::<T>(a),
        Command::AttackGuide(a) => attack_guide::<T>(a),
        Command::Selftest(a) => return selftest(a),
        Command::Info(a) => info(a),
    };
    done.map(|()| EXIT_OK)
}

fn load<T: Real>(path: &Path) -> Result<ModelGraph<T>> {
    Ok(load_model_file(path)?.cast())
}

fn explain<T: Real>(a: ExplainArgs) -> Result<()> {
    let collapse = match a.collapse {
        CollapseArg::Sum => Collapse::ChannelSum,
        CollapseArg::Abs => Collapse::AbsSum,
    };
    let style = match a.style {
        Some(StyleArg::Gray) => HeatStyle::Gray,
        Some(StyleArg::Signed) => HeatStyle::Signed,
        None if a.variant == Variant::Sum => HeatStyle::Signed,
        None => HeatStyle::Gray,
    };
    let model = load::<T>(&a.model)?;
    let image = read_image::<T>(&a.input)?;
    if image.shape() != model.input_shape() {
        return Err(Error::ShapeMismatch {
            left: image.shape().to_vec(),
            right: model.input_shape().to_vec(),
        });
    }
    let trace = forward(&model, &image)?;
    let k = a.class.unwrap_or_else(|| trace.logits().argmax());
    let pair = pane_explain(&model, &trace, k)?;
    let bundle = assemble_pane(&pair, a.variant, collapse);
    write_heatmap(&bundle.map, &a.out, style)?;
    if let Some(stem) = &a.pair {
        pair.save(stem)?;
    }
    println!(
        "class {k} logit {:.6} excitation sum {:.6} -> {}",
        trace.logits().data()[k].to_f64(),
        bundle.map.sum(),
        a.out.display()
    );
    Ok(())
}

struct Prepared<T: Real> {
    model: ModelGraph<T>,
    data: Dataset<T>,
    cfg: EvalConfig,
    pool: rayon::ThreadPool,
}

fn parse_fill(s: &str) -> Result<Fill> {
    if s == "mean" {
        return Ok(Fill::Mean);
    }
    s.parse::<f64>()
        .map(Fill::Value)
        .map_err(|_| Error::Invalid(format!("--fill expects a number or `mean`, got {s:?}")))
}

/// Validates every flag, then loads the model and dataset.
fn prepare<T: Real>(c: &Common, default_methods: &[Method], default_ratios: &[f64]) -> Result<Prepared<T>> {
    let mut cfg = EvalConfig::new(
        c.methods.clone().unwrap_or_else(|| default_methods.to_vec()),
        c.ratios.clone().unwrap_or_else(|| default_ratios.to_vec()),
    );
    cfg.fill = parse_fill(&c.fill)?;
    cfg.seed = c.seed;
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("--jobs: {e}")))?;
    let model = load::<T>(&c.model)?;
    let data = load_dataset::<T>(&c.data)?;
    Ok(Prepared { model, data, cfg, pool })
}

fn emit<R: Serialize>(c: &Common, csv: Vec<u8>, report: &R) -> Result<()> {
    if let Some(p) = &c.out_csv {
        atomic_write(p, &csv)?;
    }
    if let Some(p) = &c.out_json {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        atomic_write(p, text.as_bytes())?;
    }
    if c.out_csv.is_none() && c.out_json.is_none() {
        print!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}

fn eval_remove<T: Real>(c: Common, mode: RemovalMode) -> Result<()> {
    let grid: &[f64] = match mode {
        RemovalMode::Salient => &SALIENT_GRID,
        RemovalMode::Minor => &MINOR_GRID,
    };
    let p = prepare::<T>(&c, &Method::ALL, grid)?;
    let report = p.pool.install(|| apd_curve(&p.model, &p.data, &p.cfg, mode))?;
    emit(&c, apd_csv(&report)?, &report)
}

fn eval_logit<T: Real>(a: LogitArgs) -> Result<()> {
    let p = prepare::<T>(&a.common, &[Method::PaneSum], &LOGIT_GRID)?;
    let variants = match a.variant {
        Some(v) => vec![v],
        None => vec![LogitVariant::PosRegion, LogitVariant::NegRegion],
    };
    let mut tables = Vec::new();
    for &m in &p.cfg.methods {
        for &v in &variants {
            tables.push(p.pool.install(|| logit_delta(&p.model, &p.data, &p.cfg, v, m))?);
        }
    }
    emit(&a.common, logit_csv(&tables)?, &tables)
}

fn attack_guide<T: Real>(a: AttackArgs) -> Result<()> {
    if !(a.linf >= 0.0 && a.step >= 0.0) {
        return Err(Error::Invalid("--linf and --step must be non-negative".into()));
    }
    let keep = a.keep_ratios.clone().unwrap_or_else(|| KEEP_GRID.to_vec());
    let p = prepare::<T>(&a.common, &[Method::PanePos, Method::GradCam], &keep)?;
    let params = AttackParams {
        linf: a.linf,
        step: a.step,
        iters: a.iters,
    };
    let report = p.pool.install(|| guided_attack_eval(&p.model, &p.data, &p.cfg, &keep, params))?;
    emit(&a.common, attack_csv(&report)?, &report)
}

fn info(a: InfoArgs) -> Result<()> {
    let model = load::<f32>(&a.model)?;
    println!("name: {}", model.name);
    println!("model hash: {}", model.hash());
    if let Some(h) = &model.source_hash {
        println!("file hash: {h}");
    }
    println!("input: {:?}", model.input_shape());
    if let Some(n) = model.norm() {
        println!("normalization: mean {:?} std {:?}", n.mean, n.std);
    }
    for (i, l) in model.layers().iter().enumerate() {
        let detail = match &l.layer {
            Layer::Conv2d(c) => {
                let (kh, kw) = c.kernel();
                format!(" {}->{} {kh}x{kw} stride {} pad {}", c.in_channels(), c.out_channels(), c.stride, c.padding)
            }
            Layer::Linear(f) => format!(" {}->{}", f.in_features(), f.out_features()),
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => format!(" {}x{} stride {}", p.kh, p.kw, p.stride),
            _ => String::new(),
        };
        println!(
            "{i:>3} {:<10} {:?}{detail} -> {:?}",
            l.name,
            l.kind(),
            model.boundary_shape(i + 1)
        );
    }
    println!("classes: {}", model.class_count());
    Ok(())
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn report_line(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn selftest(a: SelftestArgs) -> Result<i32> {
    let mut all = true;
    let mut r = rng(a.seed);

    let mut worst = 0.0f64;
    let mut worst_swap = 0.0f64;
    for _ in 0..a.models {
        let model = random_model(&mut r, RandomModelOptions::default());
        let x = random_input(&mut r, model.input_shape());
        let trace = forward(&model, &x)?;
        let k = trace.logits().argmax();
        let fast = pane_explain(&model, &trace, k)?;
        let dense = dense_oracle(&model, &trace, k)?;
        worst = worst
            .max(rel_err(fast.pos.data(), dense.pos.data()))
            .max(rel_err(fast.neg.data(), dense.neg.data()));
        let swapped = pane_explain_from(&model, &trace, ChainState::seed(model.class_count(), k).swapped(), &mut |_| {})?;
        worst_swap = worst_swap
            .max(rel_err(swapped.pos.data(), fast.neg.data()))
            .max(rel_err(swapped.neg.data(), fast.pos.data()));
    }
    all &= report_line("oracle", worst <= 1e-9, format!("{} models, max rel err {worst:.3e}", a.models));
    all &= report_line("swap", worst_swap == 0.0, format!("max deviation {worst_swap:.3e}"));

    let mut worst = 0.0f64;
    let opts = RandomModelOptions {
        bias: false,
        ..RandomModelOptions::default()
    };
    for _ in 0..a.models {
        let model = random_model(&mut r, opts);
        let x = random_input(&mut r, model.input_shape());
        let trace = forward(&model, &x)?;
        let k = trace.logits().argmax();
        let pair = pane_explain(&model, &trace, k)?;
        let recon = pair.sum().dot(&x)?;
        let logit = trace.logits().data()[k];
        worst = worst.max((recon - logit).abs() / logit.abs().max(1e-12));
    }
    all &= report_line("reconstruction", worst <= 1e-6, format!("{} bias-free models, max rel err {worst:.3e}", a.models));

    if let Some(dir) = &a.data {
        let (ok, detail) = probe_parity(dir)?;
        all &= report_line("probe parity", ok, detail);
    }
    Ok(if all { EXIT_OK } else { EXIT_NUMERIC })
}

#[derive(serde::Deserialize)]
struct Probe {
    file: String,
    logits: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct Manifest {
    probes: Vec<Probe>,
}

/// Compares the f32 engine against the f64 probe logits recorded in `manifest.json`.
pub fn probe_parity(dir: &Path) -> Result<(bool, String)> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let model = load_model_file(&dir.join("model.panew"))?;
    let mut worst = 0.0f64;
    for p in &manifest.probes {
        let img = read_image::<f32>(&dir.join(&p.file))?;
        let got: Tensor<f64> = forward(&model, &img)?.logits().cast();
        worst = worst.max(rel_err(got.data(), &p.logits));
    }
    Ok((
        worst <= 1e-4 && !manifest.probes.is_empty(),
        format!("{} probes, max rel err {worst:.3e}", manifest.probes.len()),
    ))
}
