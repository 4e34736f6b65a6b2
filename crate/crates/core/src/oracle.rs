//! Brute-force reference: every layer's positive and negative coefficient
//! blocks are materialized term by term and composed with explicit matrix
//! products.  Only usable on tiny models.

use crate::chain::ExcitationPair;
use crate::error::{Error, Result};
use crate::excitation::classify_term;
use crate::model::{ForwardTrace, InputNorm, Layer, LayerRecord, ModelGraph};
use crate::tensor::{Real, Tensor};

/// Largest boundary the oracle will materialize.
pub const ORACLE_BOUNDARY_LIMIT: usize = 4096;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Dense::zeros(n, n);
        for i in 0..n {
            d.data[i * n + i] = 1.0;
        }
        d
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn plus(&self, other: &Dense) -> Dense {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Dense {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// `self * v` for a column vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// One layer's local split: `pos[i][j]` holds `w_ij` when term `w_ij * x_j`
/// is a positive excitation of output `i`, and likewise for `neg`.
#[derive(Debug, Clone)]
pub struct LocalSplit {
    pub pos: Dense,
    pub neg: Dense,
    /// The pre-bias output the terms were classified against.
    pub prebias: Vec<f64>,
    pub input: Vec<f64>,
}

impl LocalSplit {
    fn new(rows: usize, cols: usize, prebias: Vec<f64>, input: Vec<f64>) -> Self {
        LocalSplit {
            pos: Dense::zeros(rows, cols),
            neg: Dense::zeros(rows, cols),
            prebias,
            input,
        }
    }

    /// Classifies term `w * x_j` of output `i` and records `w` in its block.
    fn term(&mut self, i: usize, j: usize, w: f64) {
        match classify_term(w * self.input[j], self.prebias[i]) {
            1 => self.pos.add_at(i, j, w),
            -1 => self.neg.add_at(i, j, w),
            _ => {}
        }
    }

    /// `pos + neg`, the bias-stripped linearization the terms realize.
    pub fn linearization(&self) -> Dense {
        self.pos.plus(&self.neg)
    }
}

fn to_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64()).collect()
}

fn guard(len: usize) -> Result<()> {
    if len > ORACLE_BOUNDARY_LIMIT {
        return Err(Error::SizeGuard {
            what: "dense oracle boundary",
            needed: len,
            limit: ORACLE_BOUNDARY_LIMIT,
        });
    }
    Ok(())
}

/// Explicit im2col of a `[C, H, W]` input: entry `(r, p)` is the flat input
/// index read by row `r = (c, ky, kx)` at output position `p`, or `None` on padding.
pub fn im2col_indices(
    shape: &[usize],
    kernel: (usize, usize),
    stride: usize,
    padding: usize,
) -> (Vec<Option<usize>>, usize, usize) {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (kh, kw) = kernel;
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let rows = c * kh * kw;
    let mut cols = vec![None; rows * oh * ow];
    for ch in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (ch * kh + ky) * kw + kx;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            cols[r * oh * ow + oy * ow + ox] = Some((ch * h + iy as usize) * w + ix as usize);
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Materializes one layer's split at its recorded operating point.
pub fn local_split<T: Real>(layer: &Layer<T>, record: &LayerRecord<T>, input: &Tensor<T>) -> Result<LocalSplit> {
    let x = to_f64(input);
    let cols = x.len();
    let pre = to_f64(record.prebias.as_ref().unwrap_or(&record.output));
    let rows = pre.len();
    guard(rows)?;
    guard(cols)?;
    let mut s = LocalSplit::new(rows, cols, pre, x);
    match layer {
        Layer::Linear(l) => {
            let w = to_f64(&l.weight);
            for i in 0..rows {
                for j in 0..cols {
                    s.term(i, j, w[i * cols + j]);
                }
            }
        }
        Layer::Conv2d(c) => {
            let (idx, oh, ow) = im2col_indices(input.shape(), c.kernel(), c.stride, c.padding);
            let w = to_f64(&c.weight);
            let patch = w.len() / c.out_channels();
            let cells = oh * ow;
            for o in 0..c.out_channels() {
                for r in 0..patch {
                    for p in 0..cells {
                        if let Some(j) = idx[r * cells + p] {
                            s.term(o * cells + p, j, w[o * patch + r]);
                        }
                    }
                }
            }
        }
        Layer::Relu => {
            for j in 0..cols {
                if s.input[j] > 0.0 {
                    s.pos.add_at(j, j, 1.0);
                }
            }
        }
        Layer::MaxPool2d(p) => {
            // Window maxima recomputed here rather than read from the trace.
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = p.output_hw(h, w).expect("validated geometry");
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best: Option<(usize, f64)> = None;
                        for ky in 0..p.kh {
                            for kx in 0..p.kw {
                                let j = (ch * h + oy * p.stride + ky) * w + ox * p.stride + kx;
                                if best.is_none_or(|(_, b)| s.input[j] > b) {
                                    best = Some((j, s.input[j]));
                                }
                            }
                        }
                        let (j, _) = best.unwrap();
                        s.term((ch * oh + oy) * ow + ox, j, 1.0);
                    }
                }
            }
        }
        Layer::AvgPool2d(p) => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = p.output_hw(h, w).expect("validated geometry");
            let wv = 1.0 / (p.kh * p.kw) as f64;
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ky in 0..p.kh {
                            for kx in 0..p.kw {
                                let j = (ch * h + oy * p.stride + ky) * w + ox * p.stride + kx;
                                s.term((ch * oh + oy) * ow + ox, j, wv);
                            }
                        }
                    }
                }
            }
        }
        Layer::BatchNorm(bn) => {
            let plane = cols / bn.channels();
            for j in 0..cols {
                let c = j / plane;
                let (g, v) = (bn.gamma.data()[c], bn.var.data()[c]);
                let w = (g / (v + bn.eps).sqrt()).to_f64();
                // The single term is its own output, so classify it against itself.
                let t = w * s.input[j];
                match classify_term(t, t) {
                    1 => s.pos.add_at(j, j, w),
                    -1 => s.neg.add_at(j, j, w),
                    _ => {}
                }
            }
        }
        Layer::Flatten => {
            for j in 0..cols {
                s.term(j, j, 1.0);
            }
        }
    }
    Ok(s)
}

/// Split of the raw-pixel normalization `x / std` (the mean shift is a bias).
pub fn norm_split<T: Real>(norm: &InputNorm<T>, raw: &Tensor<T>) -> Result<LocalSplit> {
    let x = to_f64(raw);
    let n = x.len();
    guard(n)?;
    let plane = n / norm.channels();
    let pre: Vec<f64> = (0..n).map(|j| x[j] / norm.std[j / plane].to_f64()).collect();
    let mut s = LocalSplit::new(n, n, pre, x);
    for j in 0..n {
        s.term(j, j, 1.0 / norm.std[j / plane].to_f64());
    }
    Ok(s)
}

/// Every local split from the logits down to the raw input, top layer first.
pub fn all_splits<T: Real>(model: &ModelGraph<T>, trace: &ForwardTrace<T>) -> Result<Vec<LocalSplit>> {
    if trace.model_hash() != model.hash() {
        return Err(Error::TraceMismatch);
    }
    for shape in model.boundary_shapes() {
        guard(shape.iter().product())?;
    }
    let mut splits = Vec::new();
    for l in (0..model.layers().len()).rev() {
        splits.push(local_split(&model.layers()[l].layer, &trace.records()[l], trace.layer_input(l))?);
    }
    if let Some(norm) = model.norm() {
        splits.push(norm_split(norm, trace.raw_input())?);
    }
    Ok(splits)
}

/// Full `K x dim(X)` composites via the cross rule, then row `k`.
pub fn dense_oracle<T: Real>(model: &ModelGraph<T>, trace: &ForwardTrace<T>, k: usize) -> Result<ExcitationPair> {
    let classes = model.class_count();
    if k >= classes {
        return Err(Error::ClassIndex { index: k, classes });
    }
    let mut ep = Dense::identity(classes);
    let mut en = Dense::zeros(classes, classes);
    for s in all_splits(model, trace)? {
        let next_p = ep.matmul(&s.pos).plus(&en.matmul(&s.neg));
        let next_n = ep.matmul(&s.neg).plus(&en.matmul(&s.pos));
        ep = next_p;
        en = next_n;
    }
    let shape = model.input_shape().to_vec();
    Ok(ExcitationPair {
        pos: Tensor::from_parts(shape.clone(), ep.row(k).to_vec()),
        neg: Tensor::from_parts(shape, en.row(k).to_vec()),
        class_index: k,
        model_hash: model.hash().to_string(),
        trace_hash: trace.hash().to_string(),
        mode: T::DTYPE,
    })
}

/// Row `k` of the product of all local linearizations (`pos + neg` blocks).
pub fn composed_linearization_row<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    k: usize,
) -> Result<Vec<f64>> {
    let mut acc = Dense::zeros(1, model.class_count());
    acc.data[k] = 1.0;
    for s in all_splits(model, trace)? {
        acc = acc.matmul(&s.linearization());
    }
    Ok(acc.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, LayerSpec, Linear};

    #[test]
    fn single_layer_matches_hand_split() {
        let lin = Linear::new(Tensor::new(&[1, 2], &[3.0, 1.0]).unwrap(), Tensor::zeros(&[1])).unwrap();
        let m = ModelGraph::new("l", vec![2], vec![LayerSpec::new("fc", Layer::Linear(lin))], None).unwrap();
        let t = forward(&m, &Tensor::new(&[2], &[1.0, -2.0]).unwrap()).unwrap();
        let p = dense_oracle(&m, &t, 0).unwrap();
        assert_eq!(p.pos.data(), &[3.0, 0.0]);
        assert_eq!(p.neg.data(), &[0.0, 1.0]);
    }

    #[test]
    fn im2col_marks_padding() {
        let (idx, oh, ow) = im2col_indices(&[1, 2, 2], (3, 3), 1, 1);
        assert_eq!((oh, ow), (2, 2));
        // Top-left tap at output (0,0) lies in the padding.
        assert_eq!(idx[0], None);
        // Centre tap at output (1,1) reads input (1,1).
        assert_eq!(idx[4 * 4 + 3], Some(3));
    }

    #[test]
    fn boundary_guard() {
        let lin = Linear::new(Tensor::<f64>::zeros(&[1, 5000]), Tensor::zeros(&[1])).unwrap();
        let m = ModelGraph::new("big", vec![5000], vec![LayerSpec::new("fc", Layer::Linear(lin))], None).unwrap();
        let t = forward(&m, &Tensor::full(&[5000], 1.0)).unwrap();
        assert!(matches!(dense_oracle(&m, &t, 0), Err(Error::SizeGuard { .. })));
    }
}
