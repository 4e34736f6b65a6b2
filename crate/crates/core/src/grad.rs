//! Reverse-mode input gradients for the supported layer set.
//!
//! This path is independent of the excitation chain: it is the plain
//! transposed Jacobian, used by the gradient baselines, Grad-CAM and I-FGSM,
//! and as a cross-check for the chain-sum identity.

use crate::error::{Error, Result};
use crate::model::{valid_range, ForwardTrace, Layer, LayerRecord, ModelGraph};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Plain,
    /// Guided backpropagation: at every ReLU the gradient is zeroed where the
    /// forward input is `<= 0` or the upstream gradient is `< 0`.
    Guided,
}

#[derive(Debug, Clone, Copy)]
pub struct GradRequest<'a, T> {
    pub model: &'a ModelGraph<T>,
    pub trace: &'a ForwardTrace<T>,
    pub class_index: usize,
    pub mode: GradMode,
    /// Layer whose output feature map receives the gradient (must be a conv).
    pub tap_layer: Option<usize>,
}

impl<'a, T: Real> GradRequest<'a, T> {
    pub fn new(model: &'a ModelGraph<T>, trace: &'a ForwardTrace<T>, class_index: usize) -> Self {
        GradRequest {
            model,
            trace,
            class_index,
            mode: GradMode::Plain,
            tap_layer: None,
        }
    }

    pub fn guided(mut self) -> Self {
        self.mode = GradMode::Guided;
        self
    }

    pub fn tap(mut self, layer: usize) -> Self {
        self.tap_layer = Some(layer);
        self
    }

    fn seed(&self) -> Result<Tensor<T>> {
        let k = self.model.class_count();
        if self.class_index >= k {
            return Err(Error::ClassIndex {
                index: self.class_index,
                classes: k,
            });
        }
        Ok(Tensor::one_hot(k, self.class_index))
    }
}

/// `dO_N[k] / dX` with respect to the raw (un-normalized) input.
pub fn backward_input_grad<T: Real>(req: &GradRequest<'_, T>) -> Result<Tensor<T>> {
    let seed = req.seed()?;
    input_grad_from_seed(req.model, req.trace, &seed, req.mode)
}

/// Guided-backprop variant of [`backward_input_grad`].
pub fn guided_backward<T: Real>(req: &GradRequest<'_, T>) -> Result<Tensor<T>> {
    let req = GradRequest {
        mode: GradMode::Guided,
        ..*req
    };
    backward_input_grad(&req)
}

/// `dO_N[k] / dO_tap` for a conv layer's output feature map.
pub fn feature_grad<T: Real>(req: &GradRequest<'_, T>) -> Result<Tensor<T>> {
    let tap = req
        .tap_layer
        .ok_or_else(|| Error::Invalid("feature gradient needs a tap layer".into()))?;
    match req.model.layers().get(tap).map(|l| &l.layer) {
        Some(Layer::Conv2d(_)) => {}
        _ => return Err(Error::NotConv(tap)),
    }
    let seed = req.seed()?;
    let mut grads = boundary_grads_until(req.model, req.trace, &seed, req.mode, tap + 1)?;
    Ok(grads.swap_remove(0))
}

/// Gradient of `<seed, O_N>` with respect to the raw input.
pub fn input_grad_from_seed<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    seed: &Tensor<T>,
    mode: GradMode,
) -> Result<Tensor<T>> {
    let mut grads = boundary_grads_until(model, trace, seed, mode, 0)?;
    let g0 = grads.swap_remove(0);
    Ok(match model.norm() {
        Some(n) => {
            let plane = g0.len() / n.channels();
            let data = g0
                .data()
                .iter()
                .enumerate()
                .map(|(i, &g)| g / n.std[i / plane])
                .collect();
            Tensor::from_parts(g0.shape().to_vec(), data)
        }
        None => g0,
    })
}

/// Gradients at every boundary `O_0 ..= O_N` (index `n` is `d<seed,O_N>/dO_n`).
pub fn boundary_grads<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    seed: &Tensor<T>,
    mode: GradMode,
) -> Result<Vec<Tensor<T>>> {
    boundary_grads_until(model, trace, seed, mode, 0)
}

fn boundary_grads_until<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    seed: &Tensor<T>,
    mode: GradMode,
    stop: usize,
) -> Result<Vec<Tensor<T>>> {
    if trace.model_hash() != model.hash() || trace.len() != model.layers().len() {
        return Err(Error::TraceMismatch);
    }
    let n = model.layers().len();
    if seed.shape() != model.boundary_shape(n) {
        return Err(Error::ShapeMismatch {
            left: seed.shape().to_vec(),
            right: model.boundary_shape(n).to_vec(),
        });
    }
    let mut grads = vec![seed.clone()];
    for layer in (stop..n).rev() {
        let g = layer_backward(
            &model.layers()[layer].layer,
            &trace.records()[layer],
            trace.layer_input(layer),
            grads.last().unwrap(),
            mode,
        );
        grads.push(g);
    }
    grads.reverse();
    Ok(grads)
}

/// Pulls `grad_out` back through one layer at the recorded operating point.
pub fn layer_backward<T: Real>(
    layer: &Layer<T>,
    record: &LayerRecord<T>,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    mode: GradMode,
) -> Tensor<T> {
    let shape = input.shape().to_vec();
    let g = grad_out.data();
    let x = input.data();
    match layer {
        Layer::Linear(l) => {
            let (out, inp) = (l.out_features(), l.in_features());
            let w = l.weight.data();
            let mut gin = vec![T::ZERO; inp];
            for i in 0..out {
                let gi = g[i];
                if gi == T::ZERO {
                    continue;
                }
                for (acc, &wv) in gin.iter_mut().zip(&w[i * inp..(i + 1) * inp]) {
                    *acc += wv * gi;
                }
            }
            Tensor::from_parts(shape, gin)
        }
        Layer::Conv2d(c) => {
            let (ci, h, w) = (shape[0], shape[1], shape[2]);
            let os = grad_out.shape();
            let (co, oh, ow) = (os[0], os[1], os[2]);
            let (kh, kw) = c.kernel();
            let (s, p) = (c.stride, c.padding);
            let wt = c.weight.data();
            let mut gin = vec![T::ZERO; ci * h * w];
            for o in 0..co {
                let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
                for i in 0..ci {
                    let dst = &mut gin[i * h * w..(i + 1) * h * w];
                    for ky in 0..kh {
                        let (oy0, oy1) = valid_range(h, ky, s, p, oh);
                        for kx in 0..kw {
                            let wv = wt[((o * ci + i) * kh + ky) * kw + kx];
                            let (ox0, ox1) = valid_range(w, kx, s, p, ow);
                            for oy in oy0..oy1 {
                                let iy = oy * s + ky - p;
                                let grow = &gplane[oy * ow..(oy + 1) * ow];
                                let drow = &mut dst[iy * w..(iy + 1) * w];
                                for ox in ox0..ox1 {
                                    drow[ox * s + kx - p] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
            Tensor::from_parts(shape, gin)
        }
        Layer::Relu => {
            let data = x
                .iter()
                .zip(g)
                .map(|(&xv, &gv)| {
                    let open = xv > T::ZERO && (mode == GradMode::Plain || gv > T::ZERO);
                    if open {
                        gv
                    } else {
                        T::ZERO
                    }
                })
                .collect();
            Tensor::from_parts(shape, data)
        }
        Layer::MaxPool2d(_) => {
            let arg = record.argmax.as_ref().expect("max-pool trace records argmax");
            let mut gin = vec![T::ZERO; x.len()];
            for (&src, &gv) in arg.iter().zip(g) {
                gin[src] += gv;
            }
            Tensor::from_parts(shape, gin)
        }
        Layer::AvgPool2d(pool) => {
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let os = grad_out.shape();
            let (oh, ow) = (os[1], os[2]);
            let inv = T::ONE / T::from_f64((pool.kh * pool.kw) as f64);
            let mut gin = vec![T::ZERO; x.len()];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let gv = g[(ch * oh + oy) * ow + ox] * inv;
                        for ky in 0..pool.kh {
                            for kx in 0..pool.kw {
                                gin[(ch * h + oy * pool.stride + ky) * w + ox * pool.stride + kx] += gv;
                            }
                        }
                    }
                }
            }
            Tensor::from_parts(shape, gin)
        }
        Layer::BatchNorm(bn) => {
            let (scale, _) = bn.scale_shift();
            let plane = x.len() / bn.channels();
            let data = g
                .iter()
                .enumerate()
                .map(|(i, &gv)| gv * scale[i / plane])
                .collect();
            Tensor::from_parts(shape, data)
        }
        Layer::Flatten => Tensor::from_parts(shape, g.to_vec()),
    }
}
