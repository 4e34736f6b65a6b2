//! Layer definitions, the weight-file codec and the recording forward pass.

mod format;
mod forward;
mod graph;
mod layer;

pub use format::{load_model, load_model_file, save_model, WEIGHT_MAGIC};
pub use forward::{forward, logits, softmax, ForwardTrace, LayerRecord};
pub(crate) use forward::valid_range;
pub use graph::ModelGraph;
pub use layer::{BatchNorm, Conv2d, InputNorm, Layer, LayerKind, LayerSpec, Linear, Pool};
