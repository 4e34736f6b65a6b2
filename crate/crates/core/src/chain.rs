//! Whole-network double-chain propagation from a target logit to the pixels.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{chain_back_norm, chain_step, ChainState};
use crate::model::{ForwardTrace, LayerKind, ModelGraph};
use crate::tensor::{read_raw_as, write_raw, DType, Real, Tensor};

/// Positive and negative excitation rows for one class, at raw-input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationPair {
    pub pos: Tensor<f64>,
    pub neg: Tensor<f64>,
    pub class_index: usize,
    pub model_hash: String,
    pub trace_hash: String,
    /// Float mode of the forward pass that produced the operating point.
    pub mode: DType,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    model_hash: String,
    trace_hash: String,
    class_index: usize,
    mode: String,
}

impl ExcitationPair {
    /// `pos + neg`.
    pub fn sum(&self) -> Tensor<f64> {
        self.pos.add(&self.neg).expect("pair halves share a shape")
    }

    fn paths(stem: &Path) -> [PathBuf; 3] {
        let s = stem.as_os_str().to_string_lossy();
        [
            PathBuf::from(format!("{s}.pos.ptn")),
            PathBuf::from(format!("{s}.neg.ptn")),
            PathBuf::from(format!("{s}.json")),
        ]
    }

    /// Writes `<stem>.pos.ptn`, `<stem>.neg.ptn` and the `<stem>.json` sidecar.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let [pos, neg, json] = Self::paths(stem);
        write_raw(&self.pos, &pos)?;
        write_raw(&self.neg, &neg)?;
        let side = Sidecar {
            model_hash: self.model_hash.clone(),
            trace_hash: self.trace_hash.clone(),
            class_index: self.class_index,
            mode: match self.mode {
                DType::F32 => "f32".into(),
                DType::F64 => "f64".into(),
            },
        };
        let mut text = serde_json::to_string_pretty(&side)?;
        text.push('\n');
        crate::image::atomic_write(&json, text.as_bytes())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let [pos, neg, json] = Self::paths(stem);
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        Ok(ExcitationPair {
            pos: read_raw_as(&pos)?,
            neg: read_raw_as(&neg)?,
            class_index: side.class_index,
            model_hash: side.model_hash,
            trace_hash: side.trace_hash,
            mode: side.mode.parse()?,
        })
    }
}

/// What an observer sees after each chain step.
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// Layer index, or `None` for the input-normalization step.
    pub layer: Option<usize>,
    pub kind: Option<LayerKind>,
    /// State on the layer's output side.
    pub before: &'a ChainState,
    /// State on the layer's input side.
    pub after: &'a ChainState,
}

fn check_trace<T: Real>(model: &ModelGraph<T>, trace: &ForwardTrace<T>) -> Result<()> {
    if trace.model_hash() != model.hash() || trace.len() != model.layers().len() {
        return Err(Error::TraceMismatch);
    }
    Ok(())
}

fn check_class<T: Real>(model: &ModelGraph<T>, k: usize) -> Result<()> {
    if k >= model.class_count() {
        return Err(Error::ClassIndex {
            index: k,
            classes: model.class_count(),
        });
    }
    Ok(())
}

/// Explains logit `k`: seeds `(one_hot(k), 0)` at the output and folds every
/// layer's step down to the raw input.
pub fn pane_explain<T: Real>(model: &ModelGraph<T>, trace: &ForwardTrace<T>, k: usize) -> Result<ExcitationPair> {
    check_class(model, k)?;
    let seed = ChainState::seed(model.class_count(), k);
    let end = pane_explain_from(model, trace, seed, &mut |_| {})?;
    if !end.all_finite() {
        let (index, value) = end
            .pos
            .data()
            .iter()
            .chain(end.neg.data())
            .enumerate()
            .find(|(_, v)| !v.is_finite())
            .map(|(i, v)| (i, *v))
            .unwrap();
        return Err(Error::NonFinite { index, value });
    }
    Ok(ExcitationPair {
        pos: end.pos,
        neg: end.neg,
        class_index: k,
        model_hash: model.hash().to_string(),
        trace_hash: trace.hash().to_string(),
        mode: T::DTYPE,
    })
}

/// Propagates an arbitrary logit-boundary state to the raw input, reporting every step.
pub fn pane_explain_from<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    seed: ChainState,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<ChainState> {
    check_trace(model, trace)?;
    let n = model.layers().len();
    let mut state = propagate(model, trace, n, 0, seed, observer)?;
    if let Some(norm) = model.norm() {
        let next = chain_back_norm(norm, trace.raw_input(), &state)?;
        observer(&StepEvent {
            layer: None,
            kind: None,
            before: &state,
            after: &next,
        });
        state = next;
    }
    Ok(state)
}

/// Carries `state` from boundary `from` down to boundary `to` (`from >= to`).
fn propagate<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    from: usize,
    to: usize,
    mut state: ChainState,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<ChainState> {
    if state.shape() != model.boundary_shape(from) {
        return Err(Error::ShapeMismatch {
            left: state.shape().to_vec(),
            right: model.boundary_shape(from).to_vec(),
        });
    }
    for layer in (to..from).rev() {
        let spec = &model.layers()[layer];
        let next = chain_step(&spec.layer, &trace.records()[layer], trace.layer_input(layer), &state)?;
        observer(&StepEvent {
            layer: Some(layer),
            kind: Some(spec.kind()),
            before: &state,
            after: &next,
        });
        state = next;
    }
    Ok(state)
}

/// Dense composite between two boundaries, one row per selected output cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePair {
    /// Flat indices into boundary `i` that the rows correspond to.
    pub cells: Vec<usize>,
    pub cols: usize,
    /// Row-major `[cells.len(), cols]`.
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl DensePair {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn pos_row(&self, r: usize) -> &[f64] {
        &self.pos[r * self.cols..(r + 1) * self.cols]
    }

    pub fn neg_row(&self, r: usize) -> &[f64] {
        &self.neg[r * self.cols..(r + 1) * self.cols]
    }
}

pub const LAYER_TO_LAYER_LIMIT: usize = 1 << 16;

/// Composite excitation from boundary `O_i` to boundary `O_j` (`i > j`),
/// restricted to the given cells of `O_i` (all cells when `None`).
pub fn pane_layer_to_layer<T: Real>(
    model: &ModelGraph<T>,
    trace: &ForwardTrace<T>,
    i: usize,
    j: usize,
    restrict: Option<&[usize]>,
) -> Result<DensePair> {
    check_trace(model, trace)?;
    let n = model.layers().len();
    if i <= j || i > n {
        return Err(Error::Invalid(format!(
            "layer-to-layer needs boundaries i > j within 0..={n}, got i={i}, j={j}"
        )));
    }
    let top_shape = model.boundary_shape(i).to_vec();
    let top_len: usize = top_shape.iter().product();
    let cells: Vec<usize> = match restrict {
        Some(c) => c.to_vec(),
        None => (0..top_len).collect(),
    };
    if let Some(&bad) = cells.iter().find(|&&c| c >= top_len) {
        return Err(Error::Invalid(format!("cell {bad} outside boundary of {top_len} elements")));
    }
    let cols: usize = model.boundary_shape(j).iter().product();
    let needed = cells.len().saturating_mul(cols);
    if needed > LAYER_TO_LAYER_LIMIT {
        return Err(Error::SizeGuard {
            what: "layer-to-layer composite",
            needed,
            limit: LAYER_TO_LAYER_LIMIT,
        });
    }
    let mut pos = Vec::with_capacity(needed);
    let mut neg = Vec::with_capacity(needed);
    for &cell in &cells {
        let mut seed = ChainState::zeros(&top_shape);
        let mut p = seed.pos.into_data();
        p[cell] = 1.0;
        seed.pos = Tensor::from_parts(top_shape.clone(), p);
        let end = propagate(model, trace, i, j, seed, &mut |_| {})?;
        pos.extend_from_slice(end.pos.data());
        neg.extend_from_slice(end.neg.data());
    }
    Ok(DensePair { cells, cols, pos, neg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, Layer, LayerSpec, Linear};

    fn lin(w: &[f64], out: usize, inp: usize) -> Layer<f64> {
        Layer::Linear(Linear::new(Tensor::new(&[out, inp], w).unwrap(), Tensor::zeros(&[out])).unwrap())
    }

    #[test]
    fn single_linear_layer() {
        let m = ModelGraph::new("l", vec![2], vec![LayerSpec::new("fc", lin(&[3.0, 1.0], 1, 2))], None).unwrap();
        let t = forward(&m, &Tensor::new(&[2], &[1.0, -2.0]).unwrap()).unwrap();
        let p = pane_explain(&m, &t, 0).unwrap();
        assert_eq!(p.pos.data(), &[3.0, 0.0]);
        assert_eq!(p.neg.data(), &[0.0, 1.0]);
        assert!(pane_explain(&m, &t, 1).is_err());
    }

    #[test]
    fn two_scalar_layers() {
        let m = ModelGraph::new(
            "s",
            vec![1],
            vec![LayerSpec::new("a", lin(&[2.0], 1, 1)), LayerSpec::new("b", lin(&[-3.0], 1, 1))],
            None,
        )
        .unwrap();
        let t = forward(&m, &Tensor::new(&[1], &[1.0]).unwrap()).unwrap();
        let p = pane_explain(&m, &t, 0).unwrap();
        assert_eq!(p.pos.data(), &[-6.0]);
        assert_eq!(p.neg.data(), &[0.0]);
    }

    #[test]
    fn identity_model() {
        let m = ModelGraph::new(
            "id",
            vec![3],
            vec![LayerSpec::new("fc", lin(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, 3))],
            None,
        )
        .unwrap();
        let t = forward(&m, &Tensor::new(&[3], &[1.0, 2.0, 3.0]).unwrap()).unwrap();
        let p = pane_explain(&m, &t, 2).unwrap();
        assert_eq!(p.pos.data(), &[0.0, 0.0, 1.0]);
        assert_eq!(p.neg.data(), &[0.0; 3]);
    }

    #[test]
    fn trace_from_other_model_is_rejected() {
        let a = ModelGraph::new("a", vec![1], vec![LayerSpec::new("fc", lin(&[2.0], 1, 1))], None).unwrap();
        let b = ModelGraph::new("b", vec![1], vec![LayerSpec::new("fc", lin(&[3.0], 1, 1))], None).unwrap();
        let t = forward(&a, &Tensor::new(&[1], &[1.0]).unwrap()).unwrap();
        assert!(matches!(pane_explain(&b, &t, 0), Err(Error::TraceMismatch)));
    }

    #[test]
    fn layer_to_layer_contracts() {
        let m = ModelGraph::new(
            "s",
            vec![2],
            vec![
                LayerSpec::new("a", lin(&[1.0, -1.0, 2.0, 0.5], 2, 2)),
                LayerSpec::new("b", lin(&[1.0, 1.0], 1, 2)),
            ],
            None,
        )
        .unwrap();
        let t = forward(&m, &Tensor::new(&[2], &[1.0, 3.0]).unwrap()).unwrap();
        assert!(pane_layer_to_layer(&m, &t, 1, 1, None).is_err());
        let full = pane_layer_to_layer(&m, &t, 2, 0, None).unwrap();
        let p = pane_explain(&m, &t, 0).unwrap();
        assert_eq!(full.pos_row(0), p.pos.data());
        assert_eq!(full.neg_row(0), p.neg.data());
        // Base case: O_1 = [1 - 3, 2 + 1.5] = [-2, 3.5].
        let base = pane_layer_to_layer(&m, &t, 1, 0, None).unwrap();
        assert_eq!(base.pos_row(0), &[0.0, -1.0]);
        assert_eq!(base.neg_row(0), &[1.0, 0.0]);
        assert_eq!(base.pos_row(1), &[2.0, 0.5]);
        assert_eq!(base.neg_row(1), &[0.0, 0.0]);
    }

    #[test]
    fn sidecar_round_trip() {
        let m = ModelGraph::new("l", vec![2], vec![LayerSpec::new("fc", lin(&[3.0, 1.0], 1, 2))], None).unwrap();
        let t = forward(&m, &Tensor::new(&[2], &[1.0, -2.0]).unwrap()).unwrap();
        let p = pane_explain(&m, &t, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("x");
        p.save(&stem).unwrap();
        assert_eq!(ExcitationPair::load(&stem).unwrap(), p);
        let json = std::fs::read_to_string(dir.path().join("x.json")).unwrap();
        assert!(json.contains("\"class_index\": 0"));
    }
}
