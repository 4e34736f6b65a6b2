//! Forward pass that records what the excitation and gradient passes need.

use super::graph::{hex_digest, ModelGraph};
use super::layer::{BatchNorm, Conv2d, InputNorm, Layer, Linear, Pool};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Signals recorded for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord<T> {
    /// Output minus the layer's bias/shift; `None` when the layer has none.
    pub prebias: Option<Tensor<T>>,
    pub output: Tensor<T>,
    /// Flat input offset selected by each max-pool output cell.
    pub argmax: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T = f32> {
    raw_input: Tensor<T>,
    input: Tensor<T>,
    records: Vec<LayerRecord<T>>,
    model_hash: String,
    hash: String,
}

impl<T: Real> ForwardTrace<T> {
    /// Pixels exactly as supplied, before any input normalization.
    pub fn raw_input(&self) -> &Tensor<T> {
        &self.raw_input
    }

    /// `O_0`, the tensor the first layer consumes.
    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }

    pub fn records(&self) -> &[LayerRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `O_n`: `0` is the model input, `n > 0` the output of layer `n - 1`.
    pub fn boundary(&self, n: usize) -> &Tensor<T> {
        if n == 0 {
            &self.input
        } else {
            &self.records[n - 1].output
        }
    }

    pub fn layer_input(&self, layer: usize) -> &Tensor<T> {
        self.boundary(layer)
    }

    pub fn layer_output(&self, layer: usize) -> &Tensor<T> {
        &self.records[layer].output
    }

    pub fn prebias(&self, layer: usize) -> &Tensor<T> {
        let r = &self.records[layer];
        r.prebias.as_ref().unwrap_or(&r.output)
    }

    pub fn logits(&self) -> &Tensor<T> {
        &self.records.last().expect("trace has at least one layer").output
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }
}

/// Runs the model on one sample and records every layer's signals.
pub fn forward<T: Real>(model: &ModelGraph<T>, x: &Tensor<T>) -> Result<ForwardTrace<T>> {
    if x.shape() != model.input_shape() {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: model.input_shape().to_vec(),
        });
    }
    let input = match model.norm() {
        Some(n) => normalize(n, x),
        None => x.clone(),
    };
    let mut records: Vec<LayerRecord<T>> = Vec::with_capacity(model.layers().len());
    for (i, spec) in model.layers().iter().enumerate() {
        let prev = records.last().map(|r| &r.output).unwrap_or(&input);
        let out_shape = model.boundary_shape(i + 1);
        let record = run_layer(&spec.layer, prev, out_shape);
        if let Some(index) = record.output.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: record.output.data()[index].to_f64(),
            });
        }
        records.push(record);
    }
    let mut hash_input = model.hash().as_bytes().to_vec();
    for &v in x.data() {
        v.write_le(&mut hash_input);
    }
    Ok(ForwardTrace {
        raw_input: x.clone(),
        input,
        records,
        model_hash: model.hash().to_string(),
        hash: hex_digest(&hash_input),
    })
}

/// `O_N` of a trace; no softmax is applied.
pub fn logits<T: Real>(trace: &ForwardTrace<T>) -> Tensor<T> {
    trace.logits().clone()
}

/// Max-subtracted softmax, evaluated in 64-bit.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let z: Vec<f64> = logits.data().iter().map(|v| v.to_f64()).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Tensor::from_parts(
        logits.shape().to_vec(),
        e.iter().map(|v| T::from_f64(v / s)).collect(),
    )
}

pub(crate) fn normalize<T: Real>(n: &InputNorm<T>, x: &Tensor<T>) -> Tensor<T> {
    let plane = x.len() / n.channels();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / plane;
            (v - n.mean[c]) / n.std[c]
        })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

fn run_layer<T: Real>(layer: &Layer<T>, x: &Tensor<T>, out_shape: &[usize]) -> LayerRecord<T> {
    let plain = |output: Tensor<T>| LayerRecord {
        prebias: None,
        output,
        argmax: None,
    };
    match layer {
        Layer::Linear(l) => {
            let pre = linear_prebias(l, x);
            let out = add_channel_bias(&pre, l.bias.data());
            LayerRecord {
                prebias: Some(pre),
                output: out,
                argmax: None,
            }
        }
        Layer::Conv2d(c) => {
            let pre = conv_prebias(c, x, out_shape);
            let out = add_channel_bias(&pre, c.bias.data());
            LayerRecord {
                prebias: Some(pre),
                output: out,
                argmax: None,
            }
        }
        Layer::BatchNorm(bn) => {
            let (pre, out) = batch_norm(bn, x);
            LayerRecord {
                prebias: Some(pre),
                output: out,
                argmax: None,
            }
        }
        Layer::Relu => plain(x.map(|v| if v > T::ZERO { v } else { T::ZERO })),
        Layer::MaxPool2d(p) => {
            let (out, arg) = max_pool(p, x, out_shape);
            LayerRecord {
                prebias: None,
                output: out,
                argmax: Some(arg),
            }
        }
        Layer::AvgPool2d(p) => plain(avg_pool(p, x, out_shape)),
        Layer::Flatten => plain(Tensor::from_parts(vec![x.len()], x.data().to_vec())),
    }
}

/// Adds `bias[c]` to every element of channel `c` (leading axis).
fn add_channel_bias<T: Real>(pre: &Tensor<T>, bias: &[T]) -> Tensor<T> {
    let plane = pre.len() / bias.len();
    let data = pre
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + bias[i / plane])
        .collect();
    Tensor::from_parts(pre.shape().to_vec(), data)
}

fn linear_prebias<T: Real>(l: &Linear<T>, x: &Tensor<T>) -> Tensor<T> {
    let (out, inp) = (l.out_features(), l.in_features());
    let w = l.weight.data();
    let xs = x.data();
    let data = (0..out)
        .map(|i| {
            let row = &w[i * inp..(i + 1) * inp];
            let mut acc = T::ZERO;
            for (a, b) in row.iter().zip(xs) {
                acc += *a * *b;
            }
            acc
        })
        .collect();
    Tensor::from_parts(vec![out], data)
}

/// Output index range `[lo, hi)` whose input coordinate `o*s + k - p` lies in `[0, n)`.
#[inline]
pub(crate) fn valid_range(n: usize, k: usize, s: usize, p: usize, out: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi = if n + p > k { (n + p - k).div_ceil(s) } else { 0 };
    (lo.min(out), hi.min(out))
}

pub(crate) fn conv_prebias<T: Real>(c: &Conv2d<T>, x: &Tensor<T>, out_shape: &[usize]) -> Tensor<T> {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let (kh, kw) = c.kernel();
    let (s, p) = (c.stride, c.padding);
    let wt = c.weight.data();
    let xs = x.data();
    let mut out = vec![T::ZERO; co * oh * ow];
    for o in 0..co {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        for i in 0..ci {
            let xin = &xs[i * h * w..(i + 1) * h * w];
            for ky in 0..kh {
                let (oy0, oy1) = valid_range(h, ky, s, p, oh);
                for kx in 0..kw {
                    let wv = wt[((o * ci + i) * kh + ky) * kw + kx];
                    let (ox0, ox1) = valid_range(w, kx, s, p, ow);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - p;
                        let row = &xin[iy * w..(iy + 1) * w];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for ox in ox0..ox1 {
                            orow[ox] += wv * row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(out_shape.to_vec(), out)
}

fn batch_norm<T: Real>(bn: &BatchNorm<T>, x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (scale, shift) = bn.scale_shift();
    let plane = x.len() / bn.channels();
    let pre: Vec<T> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| scale[i / plane] * v)
        .collect();
    let out = pre
        .iter()
        .enumerate()
        .map(|(i, &v)| v + shift[i / plane])
        .collect();
    (
        Tensor::from_parts(x.shape().to_vec(), pre),
        Tensor::from_parts(x.shape().to_vec(), out),
    )
}

fn max_pool<T: Real>(p: &Pool, x: &Tensor<T>, out_shape: &[usize]) -> (Tensor<T>, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let xs = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + oy * p.stride) * w + ox * p.stride;
                for ky in 0..p.kh {
                    for kx in 0..p.kw {
                        let idx = (ch * h + oy * p.stride + ky) * w + ox * p.stride + kx;
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xs[best]);
                arg.push(best);
            }
        }
    }
    (Tensor::from_parts(out_shape.to_vec(), out), arg)
}

fn avg_pool<T: Real>(p: &Pool, x: &Tensor<T>, out_shape: &[usize]) -> Tensor<T> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let inv = T::ONE / T::from_f64((p.kh * p.kw) as f64);
    let xs = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::ZERO;
                for ky in 0..p.kh {
                    for kx in 0..p.kw {
                        acc += xs[(ch * h + oy * p.stride + ky) * w + ox * p.stride + kx] * inv;
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::from_parts(out_shape.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layer::LayerSpec;

    fn single(layer: Layer<f64>, input: Vec<usize>) -> ModelGraph<f64> {
        let mut layers = vec![LayerSpec::new("l", layer)];
        if input.len() == 3 {
            layers.push(LayerSpec::new("flat", Layer::Flatten));
        }
        ModelGraph::new("t", input, layers, None).unwrap()
    }

    #[test]
    fn scalar_conv() {
        let conv = Conv2d::new(Tensor::new(&[1, 1, 1, 1], &[2.0]).unwrap(), Tensor::zeros(&[1]), 1, 0).unwrap();
        let m = single(Layer::Conv2d(conv), vec![1, 1, 1]);
        let t = forward(&m, &Tensor::new(&[1, 1, 1], &[3.0]).unwrap()).unwrap();
        assert_eq!(t.layer_output(0).data(), &[6.0]);
        assert_eq!(t.prebias(0).data(), &[6.0]);
    }

    #[test]
    fn linear_records_prebias() {
        let lin = Linear::new(Tensor::new(&[1, 2], &[3.0, 1.0]).unwrap(), Tensor::new(&[1], &[1.0]).unwrap()).unwrap();
        let m = single(Layer::Linear(lin), vec![2]);
        let t = forward(&m, &Tensor::new(&[2], &[1.0, -2.0]).unwrap()).unwrap();
        assert_eq!(t.prebias(0).data(), &[1.0]);
        assert_eq!(t.logits().data(), &[2.0]);
        assert_eq!(logits(&t).shape(), &[1]);
    }

    #[test]
    fn max_pool_records_argmax() {
        let m = single(Layer::MaxPool2d(Pool::new(2, 2, 2).unwrap()), vec![1, 2, 2]);
        let t = forward(&m, &Tensor::new(&[1, 2, 2], &[1.0, 4.0, 3.0, 2.0]).unwrap()).unwrap();
        assert_eq!(t.layer_output(0).data(), &[4.0]);
        // (row 0, col 1)
        assert_eq!(t.records()[0].argmax.as_deref(), Some(&[1usize][..]));
        let tie = forward(&m, &Tensor::new(&[1, 2, 2], &[7.0, 7.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(tie.records()[0].argmax.as_deref(), Some(&[0usize][..]));
    }

    #[test]
    fn padded_strided_conv_matches_naive() {
        let wv: Vec<f64> = (0..18).map(|i| (i as f64 * 0.37).sin()).collect();
        let conv = Conv2d::new(Tensor::new(&[1, 2, 3, 3], &wv).unwrap(), Tensor::zeros(&[1]), 2, 1).unwrap();
        let xv: Vec<f64> = (0..2 * 5 * 4).map(|i| (i as f64 * 0.91).cos()).collect();
        let x = Tensor::new(&[2, 5, 4], &xv).unwrap();
        let (oh, ow) = conv.output_hw(5, 4).unwrap();
        let got = conv_prebias(&conv, &x, &[1, oh, ow]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for i in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy >= 5 || ix >= 4 {
                                continue;
                            }
                            acc += wv[(i * 3 + ky) * 3 + kx] * xv[(i * 5 + iy as usize) * 4 + ix as usize];
                        }
                    }
                }
                assert!((got.data()[oy * ow + ox] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&Tensor::<f64>::new(&[2], &[0.0, 0.0]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::<f64>::new(&[2], &[1000.0, 0.0]).unwrap());
        assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1] < 1e-300);
        let s = softmax(&Tensor::<f64>::new(&[2], &[std::f64::consts::LN_2, 0.0]).unwrap());
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn input_shape_checked() {
        let m = single(Layer::Relu, vec![1, 2, 2]);
        assert!(matches!(forward(&m, &Tensor::zeros(&[1, 2, 3])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn valid_range_edges() {
        // n=4, k=0, s=1, p=1: ix = ox - 1 valid for ox in 1..5
        assert_eq!(valid_range(4, 0, 1, 1, 4), (1, 4));
        assert_eq!(valid_range(4, 2, 1, 1, 4), (0, 3));
        assert_eq!(valid_range(5, 0, 2, 1, 3), (1, 3));
    }
}
