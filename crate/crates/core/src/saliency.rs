//! Saliency maps from excitation pairs and gradients, and pixel ranking.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::chain::{pane_explain, ExcitationPair};
use crate::error::{Error, Result};
use crate::grad::{backward_input_grad, feature_grad, guided_backward, GradRequest};
use crate::model::{ForwardTrace, ModelGraph};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    PanePos,
    PaneNeg,
    PaneSum,
    Vbp,
    GuidedBp,
    GradCam,
    Random,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::PanePos,
        Method::PaneNeg,
        Method::PaneSum,
        Method::Vbp,
        Method::GuidedBp,
        Method::GradCam,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PanePos => "pane_pos",
            Method::PaneNeg => "pane_neg",
            Method::PaneSum => "pane_sum",
            Method::Vbp => "vbp",
            Method::GuidedBp => "guided_bp",
            Method::GradCam => "gradcam",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Pos,
    Neg,
    Sum,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" => Ok(Variant::Pos),
            "neg" => Ok(Variant::Neg),
            "sum" => Ok(Variant::Sum),
            _ => Err(Error::Invalid(format!("unknown variant {s:?} (pos, neg, sum)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collapse {
    /// Keep the `[C, H, W]` map.
    None,
    /// Signed sum over channels.
    ChannelSum,
    /// Sum of absolute values over channels.
    AbsSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyBundle {
    pub method: Method,
    /// `[C, H, W]` when `collapse == None`, else `[H, W]`.
    pub map: Tensor<f64>,
    pub collapse: Collapse,
    pub signed: bool,
}

fn collapse_channels(map: &Tensor<f64>, mode: Collapse) -> Tensor<f64> {
    if mode == Collapse::None || map.rank() != 3 {
        return map.clone();
    }
    let (c, h, w) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for ch in 0..c {
        for (o, &v) in out.iter_mut().zip(&map.data()[ch * plane..(ch + 1) * plane]) {
            *o += if mode == Collapse::AbsSum { v.abs() } else { v };
        }
    }
    Tensor::from_parts(vec![h, w], out)
}

impl SaliencyBundle {
    /// The `[H, W]` map used for ranking; per-channel maps collapse by signed sum.
    pub fn collapsed(&self) -> Tensor<f64> {
        collapse_channels(&self.map, Collapse::ChannelSum)
    }
}

fn method_for(variant: Variant) -> Method {
    match variant {
        Variant::Pos => Method::PanePos,
        Variant::Neg => Method::PaneNeg,
        Variant::Sum => Method::PaneSum,
    }
}

pub fn assemble_pane(pair: &ExcitationPair, variant: Variant, collapse: Collapse) -> SaliencyBundle {
    let map = match variant {
        Variant::Pos => pair.pos.clone(),
        Variant::Neg => pair.neg.clone(),
        Variant::Sum => pair.sum(),
    };
    SaliencyBundle {
        method: method_for(variant),
        map: collapse_channels(&map, collapse),
        collapse,
        signed: variant == Variant::Sum,
    }
}

/// Bilinear resize of one `[h, w]` plane with half-pixel centres.
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let (y0, y1, fy) = coord(y, h, oh);
        for x in 0..ow {
            let (x0, x1, fx) = coord(x, w, ow);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Grad-CAM on the last conv layer, upsampled to the input's `[H, W]`.
pub fn gradcam<T: Real>(model: &ModelGraph<T>, trace: &ForwardTrace<T>, k: usize) -> Result<SaliencyBundle> {
    let tap = model
        .last_conv()
        .ok_or_else(|| Error::Invalid("Grad-CAM needs at least one conv layer".into()))?;
    let grads = feature_grad(&GradRequest::new(model, trace, k).tap(tap))?;
    let feat = trace.layer_output(tap);
    let (c, h, w) = (feat.shape()[0], feat.shape()[1], feat.shape()[2]);
    let plane = h * w;
    let mut cam = vec![0.0; plane];
    for ch in 0..c {
        let g = &grads.data()[ch * plane..(ch + 1) * plane];
        let alpha = g.iter().map(|v| v.to_f64()).sum::<f64>() / plane as f64;
        for (o, &a) in cam.iter_mut().zip(&feat.data()[ch * plane..(ch + 1) * plane]) {
            *o += alpha * a.to_f64();
        }
    }
    for v in &mut cam {
        *v = v.max(0.0);
    }
    let s = model.input_shape();
    let (ih, iw) = (s[s.len() - 2], s[s.len() - 1]);
    let up = bilinear_resize(&cam, h, w, ih, iw);
    Ok(SaliencyBundle {
        method: Method::GradCam,
        map: Tensor::from_parts(vec![ih, iw], up),
        collapse: Collapse::ChannelSum,
        signed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Vbp,
    GuidedBp,
    Random(u64),
}

pub fn baseline_map<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    k: usize,
    method: Baseline,
) -> Result<SaliencyBundle> {
    let req = GradRequest::new(model, trace, k);
    let (m, grad) = match method {
        Baseline::Vbp => (Method::Vbp, backward_input_grad(&req)?),
        Baseline::GuidedBp => (Method::GuidedBp, guided_backward(&req)?),
        Baseline::Random(seed) => {
            let s = model.input_shape();
            let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
            let mut rng = crate::synth::rng(seed);
            let data = (0..h * w).map(|_| rng.gen::<f64>()).collect();
            return Ok(SaliencyBundle {
                method: Method::Random,
                map: Tensor::from_parts(vec![h, w], data),
                collapse: Collapse::ChannelSum,
                signed: false,
            });
        }
    };
    let g: Tensor<f64> = grad.cast();
    let g = if g.rank() == 3 { g } else { g.reshape(&[1, 1, g.len()])? };
    Ok(SaliencyBundle {
        method: m,
        map: collapse_channels(&g, Collapse::AbsSum),
        collapse: Collapse::AbsSum,
        signed: false,
    })
}

/// Guided BP map multiplied by the Grad-CAM map, for viewing only.
pub fn guided_gradcam<T: Real>(model: &ModelGraph<T>, trace: &ForwardTrace<T>, k: usize) -> Result<Tensor<f64>> {
    let g = baseline_map(model, trace, k, Baseline::GuidedBp)?.map;
    let c = gradcam(model, trace, k)?.map;
    g.mul(&c)
}

/// Computes any method's map for class `k`; `seed` only affects `Random`.
pub fn saliency<T: Real>(
    method: Method,
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    k: usize,
    seed: u64,
) -> Result<SaliencyBundle> {
    let pane = |v| -> Result<SaliencyBundle> {
        Ok(assemble_pane(&pane_explain(model, trace, k)?, v, Collapse::ChannelSum))
    };
    match method {
        Method::PanePos => pane(Variant::Pos),
        Method::PaneNeg => pane(Variant::Neg),
        Method::PaneSum => pane(Variant::Sum),
        Method::Vbp => baseline_map(model, trace, k, Baseline::Vbp),
        Method::GuidedBp => baseline_map(model, trace, k, Baseline::GuidedBp),
        Method::GradCam => gradcam(model, trace, k),
        Method::Random => baseline_map(model, trace, k, Baseline::Random(seed)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOrder {
    DescValue,
    AscAbs,
    DescSigned,
    AscSigned,
}

impl FromStr for RankOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desc_value" => Ok(RankOrder::DescValue),
            "asc_abs" => Ok(RankOrder::AscAbs),
            "desc_signed" => Ok(RankOrder::DescSigned),
            "asc_signed" => Ok(RankOrder::AscSigned),
            _ => Err(Error::Invalid(format!("unknown rank order {s:?}"))),
        }
    }
}

/// Number of pixels a ratio selects out of `total`.
pub fn selection_count(ratio: f64, total: usize) -> usize {
    if ratio == 0.0 {
        return 0;
    }
    ((ratio * total as f64 + 1e-9).floor() as usize).clamp(1, total)
}

/// Ranks `[H, W]` positions of the collapsed map and returns the first
/// `max(1, floor(ratio * H * W))` as `(row, col)`; `ratio == 0` selects none.
/// Ties keep row-major order.
pub fn rank_pixels(bundle: &SaliencyBundle, order: RankOrder, ratio: f64) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Invalid(format!("ratio {ratio} outside [0, 1]")));
    }
    let map = bundle.collapsed();
    let w = map.shape()[map.rank() - 1];
    Ok(rank_values(map.data(), order, selection_count(ratio, map.len()))
        .into_iter()
        .map(|i| (i / w, i % w))
        .collect())
}

pub(crate) fn rank_values(v: &[f64], order: RankOrder, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    match order {
        RankOrder::DescValue | RankOrder::DescSigned => idx.sort_by(|&a, &b| v[b].total_cmp(&v[a])),
        RankOrder::AscSigned => idx.sort_by(|&a, &b| v[a].total_cmp(&v[b])),
        RankOrder::AscAbs => idx.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())),
    }
    idx.truncate(count);
    idx
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
