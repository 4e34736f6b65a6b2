//! Sign classification of scalar terms and the per-layer double-chain step.
//!
//! A chain step receives the composite coefficient rows `(r_pos, r_neg)` that
//! sit on a layer's output and returns the rows on the layer's input.  Each
//! scalar product `t = w * x` feeding output `o'` is positive when it shares
//! the sign of `o'`, negative when it opposes it and inert when zero.  A
//! positive term carries `r_pos -> u_pos` and `r_neg -> u_neg`; a negative
//! term crosses the chains.
//!
//! Weighted layers never materialize the split.  For each output cell the
//! rows are reordered as `(gp, gn)` (swapped when `o' < 0`), then four sums
//! are scattered to the input split by weight sign, and the sign of `x`
//! decides which pair lands on which chain.  Chain state is always `f64`.

mod steps;

pub use steps::{
    chain_back_avgpool, chain_back_bn, chain_back_conv, chain_back_flatten, chain_back_linear,
    chain_back_maxpool, chain_back_norm, chain_back_relu, chain_step,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Excitation class of a term: `+1`, `-1` or `0`.
pub type TermClass = i8;

/// Classifies term `t` against the pre-bias output it contributes to.
///
/// When `o_prebias == 0` the term is judged by its own sign.
pub fn classify_term(t: f64, o_prebias: f64) -> TermClass {
    if t == 0.0 {
        0
    } else if o_prebias == 0.0 {
        if t > 0.0 {
            1
        } else {
            -1
        }
    } else if (t > 0.0) == (o_prebias > 0.0) {
        1
    } else {
        -1
    }
}

/// The pair of coefficient rows carried by the double chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub pos: Tensor<f64>,
    pub neg: Tensor<f64>,
}

impl ChainState {
    pub fn new(pos: Tensor<f64>, neg: Tensor<f64>) -> Result<Self> {
        if pos.shape() != neg.shape() {
            return Err(Error::ShapeMismatch {
                left: pos.shape().to_vec(),
                right: neg.shape().to_vec(),
            });
        }
        Ok(ChainState { pos, neg })
    }

    /// `(one_hot(k), 0)` over `classes` logits.
    pub fn seed(classes: usize, k: usize) -> Self {
        ChainState {
            pos: Tensor::one_hot(classes, k),
            neg: Tensor::zeros(&[classes]),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        ChainState {
            pos: Tensor::zeros(shape),
            neg: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.pos.shape()
    }

    pub fn swapped(&self) -> Self {
        ChainState {
            pos: self.neg.clone(),
            neg: self.pos.clone(),
        }
    }

    /// `pos + neg`, the total coefficient row.
    pub fn total(&self) -> Tensor<f64> {
        let data = self
            .pos
            .data()
            .iter()
            .zip(self.neg.data())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_parts(self.pos.shape().to_vec(), data)
    }

    pub fn all_finite(&self) -> bool {
        self.pos.all_finite() && self.neg.all_finite()
    }
}
