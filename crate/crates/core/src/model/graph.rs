use sha2::{Digest, Sha256};

use super::layer::{InputNorm, Layer, LayerSpec};
use crate::error::{Error, Result};
use crate::tensor::Real;

/// An ordered, shape-validated stack of layers ending in a logit vector.
#[derive(Debug, Clone)]
pub struct ModelGraph<T = f32> {
    pub name: String,
    layers: Vec<LayerSpec<T>>,
    input_shape: Vec<usize>,
    norm: Option<InputNorm<T>>,
    /// Shapes of `O_0 .. O_N`.
    boundaries: Vec<Vec<usize>>,
    hash: String,
    /// Digest of the file this graph was read from, if any.
    pub source_hash: Option<String>,
}

impl<T: Real> ModelGraph<T> {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec<T>>,
        norm: Option<InputNorm<T>>,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Model(format!("invalid input shape {input_shape:?}")));
        }
        if layers.is_empty() {
            return Err(Error::Model("model has no layers".into()));
        }
        if let Some(n) = &norm {
            if n.channels() != input_shape[0] {
                return Err(Error::Model(format!(
                    "normalization has {} channels, input has {}",
                    n.channels(),
                    input_shape[0]
                )));
            }
        }
        let mut boundaries = vec![input_shape.clone()];
        for (i, spec) in layers.iter().enumerate() {
            let next = spec
                .layer
                .output_shape(boundaries.last().unwrap())
                .map_err(|reason| Error::LayerShape {
                    layer: i,
                    name: spec.name.clone(),
                    reason,
                })?;
            boundaries.push(next);
        }
        if boundaries.last().unwrap().len() != 1 {
            return Err(Error::Model(format!(
                "final output {:?} is not a logit vector",
                boundaries.last().unwrap()
            )));
        }
        let mut graph = ModelGraph {
            name: name.into(),
            layers,
            input_shape,
            norm,
            boundaries,
            hash: String::new(),
            source_hash: None,
        };
        graph.hash = graph.compute_hash();
        Ok(graph)
    }

    pub fn layers(&self) -> &[LayerSpec<T>] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn norm(&self) -> Option<&InputNorm<T>> {
        self.norm.as_ref()
    }

    pub fn class_count(&self) -> usize {
        self.boundaries.last().unwrap()[0]
    }

    /// Shape of boundary `n` (`0` = model input, `n` = output of layer `n - 1`).
    pub fn boundary_shape(&self, n: usize) -> &[usize] {
        &self.boundaries[n]
    }

    pub fn boundary_shapes(&self) -> &[Vec<usize>] {
        &self.boundaries
    }

    /// Content digest over kind, geometry and native-precision parameters.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn last_conv(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l.layer, Layer::Conv2d(_)))
    }

    pub fn cast<U: Real>(&self) -> ModelGraph<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerSpec::new(l.name.clone(), l.layer.cast()))
            .collect();
        let mut g = ModelGraph::new(
            self.name.clone(),
            self.input_shape.clone(),
            layers,
            self.norm.as_ref().map(InputNorm::cast),
        )
        .expect("casting preserves shape validity");
        g.source_hash = self.source_hash.clone();
        g
    }

    fn compute_hash(&self) -> String {
        let mut bytes = Vec::new();
        bytes.push(T::DTYPE.code());
        let push_usize = |b: &mut Vec<u8>, v: usize| b.extend_from_slice(&(v as u64).to_le_bytes());
        for &e in &self.input_shape {
            push_usize(&mut bytes, e);
        }
        let push_vals = |b: &mut Vec<u8>, vals: &[T]| {
            for &v in vals {
                v.write_le(b);
            }
        };
        if let Some(n) = &self.norm {
            push_vals(&mut bytes, &n.mean);
            push_vals(&mut bytes, &n.std);
        }
        for spec in &self.layers {
            bytes.push(spec.kind().code());
            match &spec.layer {
                Layer::Linear(l) => {
                    push_vals(&mut bytes, l.weight.data());
                    push_vals(&mut bytes, l.bias.data());
                }
                Layer::Conv2d(c) => {
                    for &e in c.weight.shape() {
                        push_usize(&mut bytes, e);
                    }
                    push_usize(&mut bytes, c.stride);
                    push_usize(&mut bytes, c.padding);
                    push_vals(&mut bytes, c.weight.data());
                    push_vals(&mut bytes, c.bias.data());
                }
                Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                    push_usize(&mut bytes, p.kh);
                    push_usize(&mut bytes, p.kw);
                    push_usize(&mut bytes, p.stride);
                }
                Layer::BatchNorm(bn) => {
                    push_vals(&mut bytes, &[bn.eps]);
                    for t in [&bn.gamma, &bn.beta, &bn.mean, &bn.var] {
                        push_vals(&mut bytes, t.data());
                    }
                }
                Layer::Relu | Layer::Flatten => {}
            }
        }
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layer::{Linear, Pool};
    use crate::tensor::Tensor;

    #[test]
    fn shape_chain_is_validated() {
        let lin = Linear::new(Tensor::<f64>::zeros(&[2, 5]), Tensor::zeros(&[2])).unwrap();
        let bad = ModelGraph::new(
            "bad",
            vec![1, 4, 4],
            vec![
                LayerSpec::new("pool", Layer::MaxPool2d(Pool::new(2, 2, 2).unwrap())),
                LayerSpec::new("flat", Layer::Flatten),
                LayerSpec::new("fc", Layer::Linear(lin.clone())),
            ],
            None,
        );
        assert!(matches!(bad, Err(Error::LayerShape { layer: 2, .. })));

        let lin4 = Linear::new(Tensor::<f64>::zeros(&[2, 4]), Tensor::zeros(&[2])).unwrap();
        let good = ModelGraph::new(
            "good",
            vec![1, 4, 4],
            vec![
                LayerSpec::new("pool", Layer::MaxPool2d(Pool::new(2, 2, 2).unwrap())),
                LayerSpec::new("flat", Layer::Flatten),
                LayerSpec::new("fc", Layer::Linear(lin4)),
            ],
            None,
        )
        .unwrap();
        assert_eq!(good.class_count(), 2);
        assert_eq!(good.boundary_shape(1), &[1, 2, 2]);
    }

    #[test]
    fn output_must_be_a_vector() {
        let g = ModelGraph::<f64>::new("r", vec![1, 2, 2], vec![LayerSpec::new("r", Layer::Relu)], None);
        assert!(g.is_err());
    }

    #[test]
    fn hash_tracks_parameters() {
        let mk = |w: f64| {
            let lin = Linear::new(Tensor::new(&[1, 1], &[w]).unwrap(), Tensor::zeros(&[1])).unwrap();
            ModelGraph::new("m", vec![1], vec![LayerSpec::new("fc", Layer::Linear(lin))], None).unwrap()
        };
        assert_eq!(mk(1.0).hash(), mk(1.0).hash());
        assert_ne!(mk(1.0).hash(), mk(2.0).hash());
    }
}
