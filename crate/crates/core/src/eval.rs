//! Faithfulness protocols: salient/minor pixel removal scored by average
//! probability drop, the subtract-one logit table, and saliency-gated I-FGSM.
//!
//! Every protocol explains each image's original top-1 class.  Work is
//! spread over images with rayon and reduced in dataset order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{input_grad_from_seed, GradMode};
use crate::image::read_image;
use crate::model::{forward, softmax, ModelGraph};
use crate::saliency::{pearson, rank_pixels, saliency, Method, RankOrder, SaliencyBundle, Variant};
use crate::tensor::{Real, Tensor};

pub const PIXEL_MAX: f64 = 255.0;

#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub file: String,
    pub label: usize,
    pub image: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub dir: PathBuf,
    pub samples: Vec<Sample<T>>,
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    filename: String,
    label: usize,
}

/// Loads `labels.csv` (`filename,label`) and every listed image from `dir`.
pub fn load_dataset<T: Real>(dir: &Path) -> Result<Dataset<T>> {
    let path = dir.join("labels.csv");
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let mut samples = Vec::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let image = read_image(&dir.join(&row.filename))?;
        samples.push(Sample {
            file: row.filename,
            label: row.label,
            image,
        });
    }
    if samples.is_empty() {
        return Err(Error::Dataset(format!("{} lists no images", path.display())));
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    Value(f64),
    /// Per-channel mean of the image being edited.
    Mean,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub ratios: Vec<f64>,
    pub fill: Fill,
    pub pixel_max: f64,
    pub seed: u64,
}

pub const SALIENT_GRID: [f64; 10] = [0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.010];
pub const MINOR_GRID: [f64; 10] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10];
pub const LOGIT_GRID: [f64; 10] = [
    0.0001, 0.0002, 0.0003, 0.0004, 0.0005, 0.0006, 0.0007, 0.0008, 0.0009, 0.0010,
];
pub const KEEP_GRID: [f64; 6] = [0.005, 0.01, 0.015, 0.02, 0.025, 0.03];

impl EvalConfig {
    pub fn new(methods: Vec<Method>, ratios: Vec<f64>) -> Self {
        EvalConfig {
            methods,
            ratios,
            fill: Fill::Value(0.0),
            pixel_max: PIXEL_MAX,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Invalid("no methods selected".into()));
        }
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Invalid("ratios must lie in [0, 1]".into()));
        }
        if self.ratios.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("ratios must be sorted ascending".into()));
        }
        if let Fill::Value(v) = self.fill {
            if !(0.0..=self.pixel_max).contains(&v) {
                return Err(Error::Invalid(format!("fill {v} outside pixel range [0, {}]", self.pixel_max)));
            }
        }
        Ok(())
    }
}

/// Sets every channel of each listed `(row, col)` pixel to `fill`.
pub fn remove_pixels<T: Real>(image: &Tensor<T>, indices: &[(usize, usize)], fill: Fill) -> Result<Tensor<T>> {
    let (c, h, w) = image_dims(image)?;
    let plane = h * w;
    let mut data = image.data().to_vec();
    let fills: Vec<T> = (0..c)
        .map(|ch| match fill {
            Fill::Value(v) => T::from_f64(v),
            Fill::Mean => {
                let s: f64 = image.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v.to_f64()).sum();
                T::from_f64(s / plane as f64)
            }
        })
        .collect();
    for &(y, x) in indices {
        if y >= h || x >= w {
            return Err(Error::Invalid(format!("pixel ({y}, {x}) outside {h}x{w} image")));
        }
        for (ch, &f) in fills.iter().enumerate() {
            data[ch * plane + y * w + x] = f;
        }
    }
    Ok(Tensor::from_parts(image.shape().to_vec(), data))
}

fn image_dims<T: Real>(image: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match image.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => Err(Error::Invalid(format!("expected a [C, H, W] image, got {s:?}"))),
    }
}

fn check_inputs<T: Real>(model: &ModelGraph<T>, data: &Dataset<T>) -> Result<()> {
    for s in &data.samples {
        if s.image.shape() != model.input_shape() {
            return Err(Error::Dataset(format!(
                "{}: image shape {:?} does not match model input {:?}",
                s.file,
                s.image.shape(),
                model.input_shape()
            )));
        }
    }
    Ok(())
}

/// Per-sample seed for stochastic baselines.
fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalMode {
    /// Remove the highest-ranked pixels.
    Salient,
    /// Remove pixels whose coefficients are closest to zero.
    Minor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApdCurve {
    pub method: String,
    pub ratios: Vec<f64>,
    /// Mean of `p_after - p_before` for the explained class, per ratio.
    pub apd: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApdReport {
    pub mode: String,
    pub curves: Vec<ApdCurve>,
    /// Mean Pearson correlation of the collapsed positive and negative maps.
    pub pos_neg_correlation: Option<f64>,
}

fn top1<T: Real>(model: &ModelGraph<T>, image: &Tensor<T>) -> Result<(usize, Tensor<T>)> {
    let t = forward(model, image)?;
    Ok((t.logits().argmax(), t.logits().clone()))
}

pub fn apd_curve<T: Real>(
    model: &ModelGraph<T>,
    data: &Dataset<T>,
    cfg: &EvalConfig,
    mode: RemovalMode,
) -> Result<ApdReport> {
    cfg.validate()?;
    check_inputs(model, data)?;
    let order = match mode {
        RemovalMode::Salient => RankOrder::DescValue,
        RemovalMode::Minor => RankOrder::AscAbs,
    };
    // Per sample: per method, per ratio drop; plus optional pos/neg correlation.
    let per_sample: Vec<(Vec<Vec<f64>>, Option<f64>)> = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<_> {
            let trace = forward(model, &s.image)?;
            let k = trace.logits().argmax();
            let before = softmax(trace.logits()).data()[k].to_f64();
            let mut rows = Vec::with_capacity(cfg.methods.len());
            for &m in &cfg.methods {
                let bundle = saliency(m, model, &trace, k, sample_seed(cfg.seed, i))?;
                let mut drops = Vec::with_capacity(cfg.ratios.len());
                for &r in &cfg.ratios {
                    let idx = rank_pixels(&bundle, order, r)?;
                    let edited = remove_pixels(&s.image, &idx, cfg.fill)?;
                    let after = softmax(forward(model, &edited)?.logits()).data()[k].to_f64();
                    drops.push(after - before);
                }
                rows.push(drops);
            }
            let corr = if cfg.methods.iter().any(|m| matches!(m, Method::PanePos | Method::PaneNeg | Method::PaneSum)) {
                let pair = crate::chain::pane_explain(model, &trace, k)?;
                let p = crate::saliency::assemble_pane(&pair, Variant::Pos, crate::saliency::Collapse::ChannelSum);
                let n = crate::saliency::assemble_pane(&pair, Variant::Neg, crate::saliency::Collapse::ChannelSum);
                pearson(p.map.data(), n.map.data())
            } else {
                None
            };
            Ok((rows, corr))
        })
        .collect::<Result<_>>()?;
    let n = per_sample.len() as f64;
    let curves = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, m)| ApdCurve {
            method: m.name().into(),
            ratios: cfg.ratios.clone(),
            apd: (0..cfg.ratios.len())
                .map(|ri| per_sample.iter().map(|(rows, _)| rows[mi][ri]).sum::<f64>() / n)
                .collect(),
            samples: per_sample.len(),
        })
        .collect();
    let corrs: Vec<f64> = per_sample.iter().filter_map(|(_, c)| *c).collect();
    Ok(ApdReport {
        mode: match mode {
            RemovalMode::Salient => "salient".into(),
            RemovalMode::Minor => "minor".into(),
        },
        curves,
        pos_neg_correlation: (!corrs.is_empty()).then(|| corrs.iter().sum::<f64>() / corrs.len() as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitVariant {
    /// Lower the most positive pixels; the logit should fall.
    PosRegion,
    /// Lower the most negative pixels; the logit should rise.
    NegRegion,
}

impl std::str::FromStr for LogitVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos_region" => Ok(LogitVariant::PosRegion),
            "neg_region" => Ok(LogitVariant::NegRegion),
            _ => Err(Error::Invalid(format!("unknown logit variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitDeltaRow {
    pub ratio: f64,
    pub pixels: usize,
    /// Sum over samples of `logit_after - logit_before`.
    pub sum_delta: f64,
    /// Fraction of samples whose logit moved in the expected direction.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitDeltaTable {
    pub method: String,
    pub variant: String,
    pub samples: usize,
    pub rows: Vec<LogitDeltaRow>,
}

/// Subtracts one from every channel of the selected pixels, clamped at zero.
pub fn subtract_one<T: Real>(image: &Tensor<T>, indices: &[(usize, usize)]) -> Result<Tensor<T>> {
    let (c, h, w) = image_dims(image)?;
    let mut data = image.data().to_vec();
    for &(y, x) in indices {
        if y >= h || x >= w {
            return Err(Error::Invalid(format!("pixel ({y}, {x}) outside {h}x{w} image")));
        }
        for ch in 0..c {
            let v = &mut data[(ch * h + y) * w + x];
            let lowered = v.to_f64() - 1.0;
            *v = T::from_f64(lowered.max(0.0));
        }
    }
    Ok(Tensor::from_parts(image.shape().to_vec(), data))
}

pub fn logit_delta<T: Real>(
    model: &ModelGraph<T>,
    data: &Dataset<T>,
    cfg: &EvalConfig,
    variant: LogitVariant,
    method: Method,
) -> Result<LogitDeltaTable> {
    cfg.validate()?;
    if cfg.pixel_max != PIXEL_MAX {
        return Err(Error::Invalid("the logit protocol is defined on the 0-255 pixel scale".into()));
    }
    check_inputs(model, data)?;
    let order = match variant {
        LogitVariant::PosRegion => RankOrder::DescSigned,
        LogitVariant::NegRegion => RankOrder::AscSigned,
    };
    let per_sample: Vec<Vec<(usize, f64)>> = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<_> {
            let trace = forward(model, &s.image)?;
            let k = trace.logits().argmax();
            let before = trace.logits().data()[k].to_f64();
            let bundle = saliency(method, model, &trace, k, sample_seed(cfg.seed, i))?;
            cfg.ratios
                .iter()
                .map(|&r| {
                    let idx = rank_pixels(&bundle, order, r)?;
                    let edited = subtract_one(&s.image, &idx)?;
                    let after = forward(model, &edited)?.logits().data()[k].to_f64();
                    Ok((idx.len(), after - before))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = per_sample.len();
    let rows = cfg
        .ratios
        .iter()
        .enumerate()
        .map(|(ri, &ratio)| {
            let deltas: Vec<f64> = per_sample.iter().map(|s| s[ri].1).collect();
            let moved = deltas
                .iter()
                .filter(|&&d| match variant {
                    LogitVariant::PosRegion => d < 0.0,
                    LogitVariant::NegRegion => d > 0.0,
                })
                .count();
            LogitDeltaRow {
                ratio,
                pixels: per_sample.first().map_or(0, |s| s[ri].0),
                sum_delta: deltas.iter().sum(),
                fraction: moved as f64 / n as f64,
            }
        })
        .collect();
    Ok(LogitDeltaTable {
        method: method.name().into(),
        variant: match variant {
            LogitVariant::PosRegion => "pos_region".into(),
            LogitVariant::NegRegion => "neg_region".into(),
        },
        samples: n,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackParams {
    pub linf: f64,
    pub step: f64,
    pub iters: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            linf: 50.0,
            step: 7.0,
            iters: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackResult<T> {
    /// `adversarial - original`.
    pub delta: Tensor<T>,
    pub success: bool,
    pub adv_class: usize,
}

/// Iterative fast-gradient-sign ascent on the cross-entropy of class `k`,
/// clipped to the L-infinity ball and the 0-255 range after every step.
pub fn ifgsm<T: Real>(model: &ModelGraph<T>, image: &Tensor<T>, k: usize, p: AttackParams) -> Result<AttackResult<T>> {
    if k >= model.class_count() {
        return Err(Error::ClassIndex {
            index: k,
            classes: model.class_count(),
        });
    }
    if !(p.linf >= 0.0 && p.step >= 0.0) {
        return Err(Error::Invalid("attack radius and step must be non-negative".into()));
    }
    let x0: Vec<f64> = image.data().iter().map(|v| v.to_f64()).collect();
    // Iterating on the perturbation keeps |delta| <= linf exact in floating point.
    let mut d = vec![0.0f64; x0.len()];
    let current = |d: &[f64]| {
        let data = x0.iter().zip(d).map(|(&a, &b)| T::from_f64(a + b)).collect();
        Tensor::from_parts(image.shape().to_vec(), data)
    };
    for _ in 0..p.iters {
        let trace = forward(model, &current(&d))?;
        let mut seed = softmax(trace.logits()).into_data();
        seed[k] = seed[k] - T::ONE;
        let seed = Tensor::from_parts(trace.logits().shape().to_vec(), seed);
        let g = input_grad_from_seed(model, &trace, &seed, GradMode::Plain)?;
        for ((di, &x0i), gi) in d.iter_mut().zip(&x0).zip(g.data()) {
            let gv = gi.to_f64();
            let s = if gv > 0.0 {
                1.0
            } else if gv < 0.0 {
                -1.0
            } else {
                0.0
            };
            let stepped = (*di + p.step * s).clamp(-p.linf, p.linf);
            *di = stepped.clamp(-x0i, PIXEL_MAX - x0i);
        }
    }
    let adv_class = forward(model, &current(&d))?.logits().argmax();
    let delta = Tensor::from_parts(image.shape().to_vec(), d.iter().map(|&v| T::from_f64(v)).collect());
    Ok(AttackResult {
        delta,
        success: adv_class != k,
        adv_class,
    })
}

/// Keeps `delta` only at the listed pixels (all channels).
pub fn restrict_delta<T: Real>(delta: &Tensor<T>, keep: &[(usize, usize)]) -> Result<Tensor<T>> {
    let (c, h, w) = image_dims(delta)?;
    let mut out = vec![T::ZERO; delta.len()];
    for &(y, x) in keep {
        for ch in 0..c {
            let i = (ch * h + y) * w + x;
            out[i] = delta.data()[i];
        }
    }
    Ok(Tensor::from_parts(delta.shape().to_vec(), out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub method: String,
    pub keep_ratio: f64,
    pub pixels: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub samples: usize,
    pub linf: f64,
    pub step: f64,
    pub iters: usize,
    /// Success rate of the unrestricted perturbations.
    pub unrestricted_success: f64,
    /// Largest `|delta|` over all perturbations.
    pub max_abs_delta: f64,
    pub rows: Vec<AttackRow>,
}

pub fn guided_attack_eval<T: Real>(
    model: &ModelGraph<T>,
    data: &Dataset<T>,
    cfg: &EvalConfig,
    keep_ratios: &[f64],
    params: AttackParams,
) -> Result<AttackReport> {
    let mut kcfg = cfg.clone();
    kcfg.ratios = keep_ratios.to_vec();
    kcfg.validate()?;
    check_inputs(model, data)?;
    struct PerSample {
        success: bool,
        max_abs: f64,
        kept: Vec<Vec<(usize, bool)>>,
    }
    let per_sample: Vec<PerSample> = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<PerSample> {
            let (k, _) = top1(model, &s.image)?;
            let atk = ifgsm(model, &s.image, k, params)?;
            let trace = forward(model, &s.image)?;
            let mut kept = Vec::with_capacity(cfg.methods.len());
            for &m in &cfg.methods {
                let bundle: SaliencyBundle = saliency(m, model, &trace, k, sample_seed(cfg.seed, i))?;
                let mut row = Vec::with_capacity(keep_ratios.len());
                for &r in keep_ratios {
                    let idx = rank_pixels(&bundle, RankOrder::DescValue, r)?;
                    let d = restrict_delta(&atk.delta, &idx)?;
                    let adv = image_plus(&s.image, &d);
                    row.push((idx.len(), top1(model, &adv)?.0 != k));
                }
                kept.push(row);
            }
            Ok(PerSample {
                success: atk.success,
                max_abs: atk.delta.max_abs(),
                kept,
            })
        })
        .collect::<Result<_>>()?;
    let n = per_sample.len() as f64;
    let mut rows = Vec::new();
    for (mi, m) in cfg.methods.iter().enumerate() {
        for (ri, &r) in keep_ratios.iter().enumerate() {
            let hits = per_sample.iter().filter(|s| s.kept[mi][ri].1).count();
            rows.push(AttackRow {
                method: m.name().into(),
                keep_ratio: r,
                pixels: per_sample.first().map_or(0, |s| s.kept[mi][ri].0),
                success_rate: hits as f64 / n,
            });
        }
    }
    Ok(AttackReport {
        samples: per_sample.len(),
        linf: params.linf,
        step: params.step,
        iters: params.iters,
        unrestricted_success: per_sample.iter().filter(|s| s.success).count() as f64 / n,
        max_abs_delta: per_sample.iter().map(|s| s.max_abs).fold(0.0, f64::max),
        rows,
    })
}

fn image_plus<T: Real>(image: &Tensor<T>, delta: &Tensor<T>) -> Tensor<T> {
    let data = image
        .data()
        .iter()
        .zip(delta.data())
        .map(|(&a, &d)| T::from_f64((a.to_f64() + d.to_f64()).clamp(0.0, PIXEL_MAX)))
        .collect();
    Tensor::from_parts(image.shape().to_vec(), data)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))
}

pub fn apd_csv(report: &ApdReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["mode", "method", "ratio", "apd", "samples"],
        report.curves.iter().flat_map(|c| {
            c.ratios.iter().zip(&c.apd).map(move |(r, a)| {
                vec![report.mode.clone(), c.method.clone(), r.to_string(), a.to_string(), c.samples.to_string()]
            })
        }),
    )
}

pub fn logit_csv(tables: &[LogitDeltaTable]) -> Result<Vec<u8>> {
    csv_bytes(
        &["method", "variant", "ratio", "pixels", "sum_delta", "fraction", "samples"],
        tables.iter().flat_map(|t| {
            t.rows.iter().map(move |r| {
                vec![
                    t.method.clone(),
                    t.variant.clone(),
                    r.ratio.to_string(),
                    r.pixels.to_string(),
                    r.sum_delta.to_string(),
                    r.fraction.to_string(),
                    t.samples.to_string(),
                ]
            })
        }),
    )
}

pub fn attack_csv(report: &AttackReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["method", "keep_ratio", "pixels", "success_rate", "unrestricted_success", "samples"],
        report.rows.iter().map(|r| {
            vec![
                r.method.clone(),
                r.keep_ratio.to_string(),
                r.pixels.to_string(),
                r.success_rate.to_string(),
                report.unrestricted_success.to_string(),
                report.samples.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> Tensor<f64> {
        Tensor::new(&[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap()
    }

    #[test]
    fn remove_pixels_cases() {
        let x = img();
        assert_eq!(remove_pixels(&x, &[], Fill::Value(0.0)).unwrap(), x);
        let all = remove_pixels(&x, &[(0, 0), (0, 1), (1, 0), (1, 1)], Fill::Value(0.0)).unwrap();
        assert!(all.data().iter().all(|&v| v == 0.0));
        let one = remove_pixels(&x, &[(1, 0)], Fill::Value(0.0)).unwrap();
        let changed = one.data().iter().zip(x.data()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 2);
        let mean = remove_pixels(&x, &[(0, 0)], Fill::Mean).unwrap();
        assert_eq!(mean.data()[0], 2.5);
        assert_eq!(mean.data()[4], 6.5);
        assert!(remove_pixels(&x, &[(2, 0)], Fill::Value(0.0)).is_err());
    }

    #[test]
    fn subtract_one_clamps() {
        let x = Tensor::new(&[1, 1, 2], &[0.5, 10.0]).unwrap();
        let y = subtract_one(&x, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(y.data(), &[0.0, 9.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = EvalConfig::new(vec![Method::PanePos], vec![0.01, 0.001]);
        assert!(c.validate().is_err());
        c.ratios = vec![0.0, 0.5];
        assert!(c.validate().is_ok());
        c.fill = Fill::Value(300.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn restrict_keeps_selected_pixels() {
        let d = img();
        let r = restrict_delta(&d, &[(0, 1)]).unwrap();
        assert_eq!(r.data(), &[0.0, 2.0, 0.0, 0.0, 0.0, 6.0, 0.0, 0.0]);
    }
}
