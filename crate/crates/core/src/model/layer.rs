//! Layer definitions and their shape rules.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Kind codes as stored in the weight file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum LayerKind {
    Linear = 1,
    Conv2d = 2,
    Relu = 3,
    MaxPool2d = 4,
    AvgPool2d = 5,
    BatchNorm = 6,
    Flatten = 7,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => LayerKind::Linear,
            2 => LayerKind::Conv2d,
            3 => LayerKind::Relu,
            4 => LayerKind::MaxPool2d,
            5 => LayerKind::AvgPool2d,
            6 => LayerKind::BatchNorm,
            7 => LayerKind::Flatten,
            _ => return None,
        })
    }

    /// Layers whose every output element is a single scalar term of the input.
    pub fn is_single_term(self) -> bool {
        matches!(
            self,
            LayerKind::Relu | LayerKind::MaxPool2d | LayerKind::BatchNorm | LayerKind::Flatten
        )
    }
}

/// Fully connected layer, `weight` is `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Model(format!(
                "linear weight {:?} and bias {:?} are inconsistent",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Linear { weight, bias })
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// 2-D convolution (cross-correlation), `weight` is `[out, in, kh, kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || s.contains(&0) {
            return Err(Error::Model(format!("conv kernel shape {s:?} is not [out,in,kh,kw]")));
        }
        if bias.shape() != [s[0]] {
            return Err(Error::Model(format!(
                "conv bias length {:?} does not match {} output channels",
                bias.shape(),
                s[0]
            )));
        }
        if stride == 0 {
            return Err(Error::Model("conv stride must be at least 1".into()));
        }
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    /// `floor((extent - k + 2p) / s) + 1` per axis.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh || pw < kw {
            return None;
        }
        Some(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }
}

/// Pooling window geometry (no padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
}

impl Pool {
    pub fn new(kh: usize, kw: usize, stride: usize) -> Result<Self> {
        if kh == 0 || kw == 0 || stride == 0 {
            return Err(Error::Model(format!(
                "pool window {kh}x{kw} stride {stride} must be positive"
            )));
        }
        Ok(Pool { kh, kw, stride })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h < self.kh || w < self.kw {
            return None;
        }
        Some(((h - self.kh) / self.stride + 1, (w - self.kw) / self.stride + 1))
    }
}

/// Inference-mode batch normalization over the leading (channel) axis.
///
/// `var` holds the running variance. The effective per-channel affine map is
/// `scale = gamma / sqrt(var + eps)`, `shift = beta - mean * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
    pub eps: T,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(
        gamma: Tensor<T>,
        beta: Tensor<T>,
        mean: Tensor<T>,
        var: Tensor<T>,
        eps: T,
    ) -> Result<Self> {
        let c = gamma.len();
        if gamma.rank() != 1
            || [&beta, &mean, &var].iter().any(|t| t.shape() != [c])
        {
            return Err(Error::Model("batch-norm parameter lengths differ".into()));
        }
        if eps.partial_cmp(&T::ZERO) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Model(format!("batch-norm eps must be > 0, got {eps}")));
        }
        if var.data().iter().any(|&v| v < T::ZERO) {
            return Err(Error::Model("batch-norm running variance is negative".into()));
        }
        Ok(BatchNorm {
            gamma,
            beta,
            mean,
            var,
            eps,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn scale_shift(&self) -> (Vec<T>, Vec<T>) {
        let scale: Vec<T> = self
            .gamma
            .data()
            .iter()
            .zip(self.var.data())
            .map(|(&g, &v)| g / (v + self.eps).sqrt())
            .collect();
        let shift = self
            .beta
            .data()
            .iter()
            .zip(self.mean.data())
            .zip(&scale)
            .map(|((&b, &m), &s)| b - m * s)
            .collect();
        (scale, shift)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Linear(Linear<T>),
    Conv2d(Conv2d<T>),
    Relu,
    MaxPool2d(Pool),
    AvgPool2d(Pool),
    BatchNorm(BatchNorm<T>),
    Flatten,
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Linear(_) => LayerKind::Linear,
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool2d(_) => LayerKind::MaxPool2d,
            Layer::AvgPool2d(_) => LayerKind::AvgPool2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    /// Output shape for a given input shape, or the reason it is incompatible.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let spatial = |what: &str| -> std::result::Result<(usize, usize, usize), String> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(format!("{what} expects a [C,H,W] input, got {input:?}")),
            }
        };
        match self {
            Layer::Linear(l) => match input {
                [v] if *v == l.in_features() => Ok(vec![l.out_features()]),
                _ => Err(format!(
                    "linear expects input [{}], got {input:?}",
                    l.in_features()
                )),
            },
            Layer::Conv2d(c) => {
                let (ci, h, w) = spatial("conv")?;
                if ci != c.in_channels() {
                    return Err(format!(
                        "conv expects {} input channels, got {ci}",
                        c.in_channels()
                    ));
                }
                let (oh, ow) = c
                    .output_hw(h, w)
                    .ok_or_else(|| format!("kernel {:?} larger than padded input", c.kernel()))?;
                Ok(vec![c.out_channels(), oh, ow])
            }
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                let (c, h, w) = spatial("pool")?;
                let (oh, ow) = p
                    .output_hw(h, w)
                    .ok_or_else(|| format!("window {}x{} larger than input", p.kh, p.kw))?;
                Ok(vec![c, oh, ow])
            }
            Layer::BatchNorm(bn) => match input.first() {
                Some(&c) if c == bn.channels() => Ok(input.to_vec()),
                _ => Err(format!(
                    "batch-norm has {} channels, input is {input:?}",
                    bn.channels()
                )),
            },
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Linear(l) => Layer::Linear(Linear {
                weight: l.weight.cast(),
                bias: l.bias.cast(),
            }),
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                weight: c.weight.cast(),
                bias: c.bias.cast(),
                stride: c.stride,
                padding: c.padding,
            }),
            Layer::Relu => Layer::Relu,
            Layer::MaxPool2d(p) => Layer::MaxPool2d(*p),
            Layer::AvgPool2d(p) => Layer::AvgPool2d(*p),
            Layer::BatchNorm(bn) => Layer::BatchNorm(BatchNorm {
                gamma: bn.gamma.cast(),
                beta: bn.beta.cast(),
                mean: bn.mean.cast(),
                var: bn.var.cast(),
                eps: U::from_f64(bn.eps.to_f64()),
            }),
            Layer::Flatten => Layer::Flatten,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec<T> {
    pub name: String,
    pub layer: Layer<T>,
}

impl<T: Real> LayerSpec<T> {
    pub fn new(name: impl Into<String>, layer: Layer<T>) -> Self {
        LayerSpec {
            name: name.into(),
            layer,
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.layer.kind()
    }
}

/// Per-channel `(x - mean) / std` applied to raw pixels before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> InputNorm<T> {
    pub fn new(mean: Vec<T>, std: Vec<T>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Model("normalization mean/std lengths differ".into()));
        }
        if std.iter().any(|s| s.partial_cmp(&T::ZERO) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Model("normalization std must be positive".into()));
        }
        Ok(InputNorm { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn cast<U: Real>(&self) -> InputNorm<U> {
        InputNorm {
            mean: self.mean.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            std: self.std.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_extent_with_padding() {
        let conv = Conv2d::new(Tensor::<f64>::zeros(&[2, 1, 3, 3]), Tensor::zeros(&[2]), 2, 1).unwrap();
        assert_eq!(conv.output_hw(7, 6), Some((4, 3)));
        let layer = Layer::Conv2d(conv);
        assert_eq!(layer.output_shape(&[1, 7, 6]).unwrap(), vec![2, 4, 3]);
        assert!(layer.output_shape(&[3, 7, 6]).is_err());
    }

    #[test]
    fn conv_bias_mismatch_rejected() {
        assert!(Conv2d::new(Tensor::<f32>::zeros(&[2, 1, 1, 1]), Tensor::zeros(&[3]), 1, 0).is_err());
    }

    #[test]
    fn bn_scale_matches_closed_form() {
        let t = |v: f64| Tensor::new(&[1], &[v]).unwrap();
        let bn = BatchNorm::new(t(2.0), t(0.5), t(0.0), t(0.0), 1.0).unwrap();
        let (scale, shift) = bn.scale_shift();
        assert_eq!(scale, vec![2.0]);
        assert_eq!(shift, vec![0.5]);
        assert!(BatchNorm::new(t(1.0), t(0.0), t(0.0), t(1.0), 0.0).is_err());
    }

    #[test]
    fn kind_codes_round_trip() {
        for code in 1..=7 {
            assert_eq!(LayerKind::from_code(code).unwrap().code(), code);
        }
        assert!(LayerKind::from_code(0).is_none());
        assert!(LayerKind::from_code(8).is_none());
    }
}
