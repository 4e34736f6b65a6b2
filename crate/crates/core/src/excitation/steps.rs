use super::ChainState;
use crate::error::{Error, Result};
use crate::model::{valid_range, BatchNorm, Conv2d, InputNorm, Layer, LayerRecord, Linear, Pool};
use crate::tensor::{Real, Tensor};

fn expect_shape(what: &[usize], want: &[usize]) -> Result<()> {
    if what != want {
        return Err(Error::ShapeMismatch {
            left: what.to_vec(),
            right: want.to_vec(),
        });
    }
    Ok(())
}

/// Per-output reordered rows: `(gp, gn)` equals `(r_pos, r_neg)`, swapped
/// where the pre-bias output is negative.
fn gates<T: Real>(o: &[T], r: &ChainState) -> (Vec<f64>, Vec<f64>) {
    let (rp, rn) = (r.pos.data(), r.neg.data());
    let mut gp = Vec::with_capacity(o.len());
    let mut gn = Vec::with_capacity(o.len());
    for ((&ov, &p), &n) in o.iter().zip(rp).zip(rn) {
        if ov < T::ZERO {
            gp.push(n);
            gn.push(p);
        } else {
            gp.push(p);
            gn.push(n);
        }
    }
    (gp, gn)
}

/// Scatter targets split by weight sign: `a*` collect `w * gp`, `b*` collect `w * gn`.
struct Accum {
    ap: Vec<f64>,
    am: Vec<f64>,
    bp: Vec<f64>,
    bm: Vec<f64>,
}

impl Accum {
    fn new(n: usize) -> Self {
        Accum {
            ap: vec![0.0; n],
            am: vec![0.0; n],
            bp: vec![0.0; n],
            bm: vec![0.0; n],
        }
    }

    #[inline]
    fn lanes(&mut self, w: f64) -> (&mut [f64], &mut [f64]) {
        if w > 0.0 {
            (&mut self.ap, &mut self.bp)
        } else {
            (&mut self.am, &mut self.bm)
        }
    }

    /// Routes the four sums to the chains according to the sign of each input.
    fn finish<T: Real>(self, x: &Tensor<T>) -> ChainState {
        let n = x.len();
        let mut pos = vec![0.0; n];
        let mut neg = vec![0.0; n];
        for (j, &xv) in x.data().iter().enumerate() {
            if xv > T::ZERO {
                pos[j] = self.ap[j] + self.bm[j];
                neg[j] = self.bp[j] + self.am[j];
            } else if xv < T::ZERO {
                pos[j] = self.bp[j] + self.am[j];
                neg[j] = self.ap[j] + self.bm[j];
            }
        }
        let shape = x.shape().to_vec();
        ChainState {
            pos: Tensor::from_parts(shape.clone(), pos),
            neg: Tensor::from_parts(shape, neg),
        }
    }
}

pub fn chain_back_linear<T: Real>(
    layer: &Linear<T>,
    x: &Tensor<T>,
    o_prebias: &Tensor<T>,
    r: &ChainState,
) -> Result<ChainState> {
    let (out, inp) = (layer.out_features(), layer.in_features());
    expect_shape(x.shape(), &[inp])?;
    expect_shape(o_prebias.shape(), &[out])?;
    expect_shape(r.shape(), &[out])?;
    let (gp, gn) = gates(o_prebias.data(), r);
    let w = layer.weight.data();
    let mut acc = Accum::new(inp);
    for i in 0..out {
        let (p, n) = (gp[i], gn[i]);
        if p == 0.0 && n == 0.0 {
            continue;
        }
        for (j, &wv) in w[i * inp..(i + 1) * inp].iter().enumerate() {
            let wv = wv.to_f64();
            if wv == 0.0 {
                continue;
            }
            let (a, b) = acc.lanes(wv);
            a[j] += wv * p;
            b[j] += wv * n;
        }
    }
    Ok(acc.finish(x))
}

pub fn chain_back_conv<T: Real>(
    layer: &Conv2d<T>,
    x: &Tensor<T>,
    o_prebias: &Tensor<T>,
    r: &ChainState,
) -> Result<ChainState> {
    let ci = layer.in_channels();
    if x.rank() != 3 || x.shape()[0] != ci {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: vec![ci],
        });
    }
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let (oh, ow) = layer.output_hw(h, w).ok_or_else(|| Error::ShapeMismatch {
        left: x.shape().to_vec(),
        right: layer.weight.shape().to_vec(),
    })?;
    let co = layer.out_channels();
    expect_shape(o_prebias.shape(), &[co, oh, ow])?;
    expect_shape(r.shape(), &[co, oh, ow])?;
    let (kh, kw) = layer.kernel();
    let (s, p) = (layer.stride, layer.padding);
    let (gp, gn) = gates(o_prebias.data(), r);
    let wt = layer.weight.data();
    let mut acc = Accum::new(x.len());
    let cells = oh * ow;
    for o in 0..co {
        let gpo = &gp[o * cells..(o + 1) * cells];
        let gno = &gn[o * cells..(o + 1) * cells];
        if gpo.iter().chain(gno).all(|&v| v == 0.0) {
            continue;
        }
        for i in 0..ci {
            for ky in 0..kh {
                let (oy0, oy1) = valid_range(h, ky, s, p, oh);
                for kx in 0..kw {
                    let wv = wt[((o * ci + i) * kh + ky) * kw + kx].to_f64();
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(w, kx, s, p, ow);
                    let (a, b) = acc.lanes(wv);
                    for oy in oy0..oy1 {
                        let base = (i * h + oy * s + ky - p) * w;
                        let prow = &gpo[oy * ow..(oy + 1) * ow];
                        let nrow = &gno[oy * ow..(oy + 1) * ow];
                        for ox in ox0..ox1 {
                            let j = base + ox * s + kx - p;
                            a[j] += wv * prow[ox];
                            b[j] += wv * nrow[ox];
                        }
                    }
                }
            }
        }
    }
    Ok(acc.finish(x))
}

pub fn chain_back_avgpool<T: Real>(
    pool: &Pool,
    x: &Tensor<T>,
    o_prebias: &Tensor<T>,
    r: &ChainState,
) -> Result<ChainState> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: vec![0, 0, 0],
        });
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = pool.output_hw(h, w).ok_or_else(|| Error::ShapeMismatch {
        left: x.shape().to_vec(),
        right: vec![pool.kh, pool.kw],
    })?;
    expect_shape(o_prebias.shape(), &[c, oh, ow])?;
    expect_shape(r.shape(), &[c, oh, ow])?;
    let (gp, gn) = gates(o_prebias.data(), r);
    let wv = 1.0 / (pool.kh * pool.kw) as f64;
    let mut acc = Accum::new(x.len());
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let cell = (ch * oh + oy) * ow + ox;
                let (p, n) = (wv * gp[cell], wv * gn[cell]);
                for ky in 0..pool.kh {
                    let base = (ch * h + oy * pool.stride + ky) * w + ox * pool.stride;
                    for j in base..base + pool.kw {
                        acc.ap[j] += p;
                        acc.bp[j] += n;
                    }
                }
            }
        }
    }
    Ok(acc.finish(x))
}

/// Gates both chains by `x > 0`; ReLU has no negative block.
pub fn chain_back_relu<T: Real>(x: &Tensor<T>, r: &ChainState) -> Result<ChainState> {
    expect_shape(r.shape(), x.shape())?;
    let gate = |t: &Tensor<f64>| {
        let data = t
            .data()
            .iter()
            .zip(x.data())
            .map(|(&v, &xv)| if xv > T::ZERO { v } else { 0.0 })
            .collect();
        Tensor::from_parts(x.shape().to_vec(), data)
    };
    Ok(ChainState {
        pos: gate(&r.pos),
        neg: gate(&r.neg),
    })
}

/// Routes both chains to the recorded argmax of every window.
pub fn chain_back_maxpool<T: Real>(x: &Tensor<T>, argmax: &[usize], r: &ChainState) -> Result<ChainState> {
    if argmax.len() != r.pos.len() || argmax.iter().any(|&a| a >= x.len()) {
        return Err(Error::Invalid("max-pool argmax record does not match chain state".into()));
    }
    let mut pos = vec![0.0; x.len()];
    let mut neg = vec![0.0; x.len()];
    for ((&src, &p), &n) in argmax.iter().zip(r.pos.data()).zip(r.neg.data()) {
        if x.data()[src] != T::ZERO {
            pos[src] += p;
            neg[src] += n;
        }
    }
    Ok(ChainState {
        pos: Tensor::from_parts(x.shape().to_vec(), pos),
        neg: Tensor::from_parts(x.shape().to_vec(), neg),
    })
}

/// Scales each chain by `w' = gamma / sqrt(var + eps)`; the single term never crosses.
pub fn chain_back_bn<T: Real>(layer: &BatchNorm<T>, x: &Tensor<T>, r: &ChainState) -> Result<ChainState> {
    expect_shape(r.shape(), x.shape())?;
    if x.is_empty() || x.shape()[0] != layer.channels() {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: vec![layer.channels()],
        });
    }
    let (scale, _) = layer.scale_shift();
    let plane = x.len() / layer.channels();
    single_term(x, r, |i| scale[i / plane].to_f64())
}

/// Steps from normalized input back to raw pixels (`x / std` is the term).
pub fn chain_back_norm<T: Real>(norm: &InputNorm<T>, raw: &Tensor<T>, r: &ChainState) -> Result<ChainState> {
    expect_shape(r.shape(), raw.shape())?;
    if raw.is_empty() || raw.shape()[0] != norm.channels() {
        return Err(Error::ShapeMismatch {
            left: raw.shape().to_vec(),
            right: vec![norm.channels()],
        });
    }
    let plane = raw.len() / norm.channels();
    single_term(raw, r, |i| 1.0 / norm.std[i / plane].to_f64())
}

fn single_term<T: Real>(x: &Tensor<T>, r: &ChainState, coef: impl Fn(usize) -> f64) -> Result<ChainState> {
    let mut pos = vec![0.0; x.len()];
    let mut neg = vec![0.0; x.len()];
    for (i, &xv) in x.data().iter().enumerate() {
        let c = coef(i);
        if xv == T::ZERO || c * xv.to_f64() == 0.0 {
            continue;
        }
        pos[i] = r.pos.data()[i] * c;
        neg[i] = r.neg.data()[i] * c;
    }
    Ok(ChainState {
        pos: Tensor::from_parts(x.shape().to_vec(), pos),
        neg: Tensor::from_parts(x.shape().to_vec(), neg),
    })
}

pub fn chain_back_flatten(r: &ChainState, input_shape: &[usize]) -> Result<ChainState> {
    Ok(ChainState {
        pos: r.pos.reshape(input_shape)?,
        neg: r.neg.reshape(input_shape)?,
    })
}

/// Dispatches one layer's step at its recorded operating point.
pub fn chain_step<T: Real>(
    layer: &Layer<T>,
    record: &LayerRecord<T>,
    input: &Tensor<T>,
    r: &ChainState,
) -> Result<ChainState> {
    let pre = record.prebias.as_ref().unwrap_or(&record.output);
    match layer {
        Layer::Linear(l) => chain_back_linear(l, input, pre, r),
        Layer::Conv2d(c) => chain_back_conv(c, input, pre, r),
        Layer::Relu => chain_back_relu(input, r),
        Layer::MaxPool2d(_) => {
            let arg = record
                .argmax
                .as_deref()
                .ok_or_else(|| Error::Invalid("max-pool record lacks argmax".into()))?;
            chain_back_maxpool(input, arg, r)
        }
        Layer::AvgPool2d(p) => chain_back_avgpool(p, input, pre, r),
        Layer::BatchNorm(bn) => chain_back_bn(bn, input, r),
        Layer::Flatten => chain_back_flatten(r, input.shape()),
    }
}
