//! `PANEW001` weight files.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "PANEW001"                         8 bytes
//! u32 layer_count
//! per layer:
//!   u8  kind code (1 Linear, 2 Conv2d, 3 ReLU, 4 MaxPool, 5 AvgPool, 6 BatchNorm, 7 Flatten)
//!   u16 name length, UTF-8 name
//!   header   Linear: u32 out, in
//!            Conv2d: u32 out, in, kh, kw, stride, padding
//!            pools:  u32 kh, kw, stride
//!            BatchNorm: u32 channels, f32 eps
//!   payload  f32 weight, bias (Linear, Conv2d); f32 gamma, beta, mean, var (BatchNorm)
//! metadata extension, zero or more records until the checksum:
//!   4-byte tag, u32 payload length, payload
//!   "INSH": u32 rank, rank x u32 input extents
//!   "NORM": u32 channels, f32 mean[channels], f32 std[channels]
//!   "NAME": UTF-8 model name
//!   unknown tags are skipped
//! u32 CRC32 (IEEE) of every preceding byte
//! ```

use std::path::Path;

use super::graph::{hex_digest, ModelGraph};
use super::layer::{BatchNorm, Conv2d, InputNorm, Layer, LayerKind, LayerSpec, Linear, Pool};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const WEIGHT_MAGIC: &[u8; 8] = b"PANEW001";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - (self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n = shape
            .iter()
            .try_fold(4usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Format(format!("tensor extents {shape:?} overflow")))?;
        let bytes = self.take(n)?;
        Tensor::from_vec(shape.to_vec(), bytes.chunks_exact(4).map(f32::read_le).collect())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses and validates a weight file.
pub fn load_model(bytes: &[u8]) -> Result<ModelGraph<f32>> {
    if bytes.len() < WEIGHT_MAGIC.len() {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: WEIGHT_MAGIC.len() - bytes.len(),
        });
    }
    if &bytes[..8] != WEIGHT_MAGIC {
        return Err(Error::BadMagic { expected: "PANEW001" });
    }
    // Parse first so truncation is reported with its offset rather than as a
    // checksum failure.
    let body_end = bytes.len().saturating_sub(4);
    let mut r = Reader {
        bytes: &bytes[..body_end.max(8)],
        pos: 8,
    };
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let kind_offset = r.pos;
        let code = r.u8()?;
        let kind = LayerKind::from_code(code).ok_or(Error::UnknownKind {
            code,
            offset: kind_offset,
        })?;
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format(format!("layer name at offset {} is not UTF-8", kind_offset + 3)))?
            .to_string();
        let layer = match kind {
            LayerKind::Linear => {
                let (out, inp) = (r.dim()?, r.dim()?);
                let weight = r.tensor(&[out, inp])?;
                let bias = r.tensor(&[out])?;
                Layer::Linear(Linear::new(weight, bias)?)
            }
            LayerKind::Conv2d => {
                let (out, inp, kh, kw, stride, padding) =
                    (r.dim()?, r.dim()?, r.dim()?, r.dim()?, r.dim()?, r.dim()?);
                let weight = r.tensor(&[out, inp, kh, kw])?;
                let bias = r.tensor(&[out])?;
                Layer::Conv2d(Conv2d::new(weight, bias, stride, padding)?)
            }
            LayerKind::Relu => Layer::Relu,
            LayerKind::MaxPool2d | LayerKind::AvgPool2d => {
                let pool = Pool::new(r.dim()?, r.dim()?, r.dim()?)?;
                if kind == LayerKind::MaxPool2d {
                    Layer::MaxPool2d(pool)
                } else {
                    Layer::AvgPool2d(pool)
                }
            }
            LayerKind::BatchNorm => {
                let c = r.dim()?;
                let eps = r.f32()?;
                let gamma = r.tensor(&[c])?;
                let beta = r.tensor(&[c])?;
                let mean = r.tensor(&[c])?;
                let var = r.tensor(&[c])?;
                Layer::BatchNorm(BatchNorm::new(gamma, beta, mean, var, eps)?)
            }
            LayerKind::Flatten => Layer::Flatten,
        };
        layers.push(LayerSpec::new(name, layer));
    }

    let mut input_shape = None;
    let mut norm = None;
    let mut name = String::from("model");
    while r.remaining() > 0 {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u32()? as usize;
        let payload = r.take(len)?;
        let mut p = Reader { bytes: payload, pos: 0 };
        match &tag {
            b"INSH" => {
                let rank = p.dim()?;
                input_shape = Some((0..rank).map(|_| p.dim()).collect::<Result<Vec<_>>>()?);
            }
            b"NORM" => {
                let c = p.dim()?;
                let mean = (0..c).map(|_| p.f32()).collect::<Result<Vec<_>>>()?;
                let std = (0..c).map(|_| p.f32()).collect::<Result<Vec<_>>>()?;
                norm = Some(InputNorm::new(mean, std)?);
            }
            b"NAME" => {
                name = String::from_utf8(payload.to_vec())
                    .map_err(|_| Error::Format("model name is not UTF-8".into()))?;
            }
            _ => {}
        }
    }

    if bytes.len() < 12 {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: 4,
        });
    }
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let input_shape = match input_shape {
        Some(s) => s,
        None => match layers.first().map(|l| &l.layer) {
            Some(Layer::Linear(l)) => vec![l.in_features()],
            _ => return Err(Error::Format("missing INSH input-shape record".into())),
        },
    };
    let mut graph = ModelGraph::new(name, input_shape, layers, norm)?;
    graph.source_hash = Some(hex_digest(bytes));
    Ok(graph)
}

pub fn load_model_file(path: &Path) -> Result<ModelGraph<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_model(&bytes)
}

/// Serializes a model; parameters are stored as f32.
pub fn save_model<T: Real>(model: &ModelGraph<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    put_u32(&mut out, model.layers().len());
    let put_vals = |out: &mut Vec<u8>, vals: &[T]| {
        for v in vals {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    };
    for spec in model.layers() {
        out.push(spec.kind().code());
        out.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        match &spec.layer {
            Layer::Linear(l) => {
                put_u32(&mut out, l.out_features());
                put_u32(&mut out, l.in_features());
                put_vals(&mut out, l.weight.data());
                put_vals(&mut out, l.bias.data());
            }
            Layer::Conv2d(c) => {
                for &e in c.weight.shape() {
                    put_u32(&mut out, e);
                }
                put_u32(&mut out, c.stride);
                put_u32(&mut out, c.padding);
                put_vals(&mut out, c.weight.data());
                put_vals(&mut out, c.bias.data());
            }
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                put_u32(&mut out, p.kh);
                put_u32(&mut out, p.kw);
                put_u32(&mut out, p.stride);
            }
            Layer::BatchNorm(bn) => {
                put_u32(&mut out, bn.channels());
                out.extend_from_slice(&(bn.eps.to_f64() as f32).to_le_bytes());
                for t in [&bn.gamma, &bn.beta, &bn.mean, &bn.var] {
                    put_vals(&mut out, t.data());
                }
            }
            Layer::Relu | Layer::Flatten => {}
        }
    }

    let mut insh = Vec::new();
    put_u32(&mut insh, model.input_shape().len());
    for &e in model.input_shape() {
        put_u32(&mut insh, e);
    }
    put_record(&mut out, b"INSH", &insh);
    if let Some(n) = model.norm() {
        let mut rec = Vec::new();
        put_u32(&mut rec, n.channels());
        put_vals(&mut rec, &n.mean);
        put_vals(&mut rec, &n.std);
        put_record(&mut out, b"NORM", &rec);
    }
    put_record(&mut out, b"NAME", model.name.as_bytes());

    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    put_u32(out, payload.len());
    out.extend_from_slice(payload);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_layer() -> ModelGraph<f32> {
        let conv = Conv2d::new(
            Tensor::new(&[2, 1, 2, 2], &[1.0, -1.0, 0.5, 0.25, 0.0, 2.0, -0.5, 1.0]).unwrap(),
            Tensor::new(&[2], &[0.1, -0.1]).unwrap(),
            1,
            0,
        )
        .unwrap();
        let lin = Linear::new(
            Tensor::new(&[2, 8], &[0.5; 16]).unwrap(),
            Tensor::new(&[2], &[0.0, 1.0]).unwrap(),
        )
        .unwrap();
        ModelGraph::new(
            "vgg-ish",
            vec![1, 3, 3],
            vec![
                LayerSpec::new("conv1", Layer::Conv2d(conv)),
                LayerSpec::new("relu1", Layer::Relu),
                LayerSpec::new("flatten", Layer::Flatten),
                LayerSpec::new("fc", Layer::Linear(lin)),
            ],
            Some(InputNorm::new(vec![10.0], vec![2.0]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let m = four_layer();
        let bytes = save_model(&m);
        let back = load_model(&bytes).unwrap();
        assert_eq!(back.layers().len(), 4);
        assert_eq!(back.layers(), m.layers());
        assert_eq!(back.input_shape(), &[1, 3, 3]);
        assert_eq!(back.norm(), m.norm());
        assert_eq!(back.hash(), m.hash());
        assert_eq!(back.name, "vgg-ish");
    }

    #[test]
    fn header_bytes() {
        let bytes = save_model(&four_layer());
        assert_eq!(&bytes[..8], b"PANEW001");
        assert_eq!(&bytes[8..12], &4u32.to_le_bytes());
        assert_eq!(bytes[12], 2);
        assert_eq!(&bytes[13..15], &5u16.to_le_bytes());
        assert_eq!(&bytes[15..20], b"conv1");
        let header: Vec<u32> = bytes[20..44]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(header, vec![2, 1, 2, 2, 1, 0]);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = save_model(&four_layer());
        let err = load_model(&bytes[..60]).unwrap_err();
        match err {
            Error::Truncated { offset, .. } => assert!(offset <= 56, "offset {offset}"),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = save_model(&four_layer());
        // Flip a bit inside a weight value.
        bytes[50] ^= 0x01;
        assert!(matches!(load_model(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = save_model(&four_layer());
        bytes[7] = b'2';
        assert!(matches!(load_model(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn inconsistent_shapes_are_rejected() {
        // Linear declares in=1 while the input-shape record says [3].
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        put_u32(&mut out, 1);
        out.push(LayerKind::Linear.code());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(b"fc");
        put_u32(&mut out, 2);
        put_u32(&mut out, 1);
        for v in [1.0f32, 2.0, 0.0, 0.0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut insh = Vec::new();
        put_u32(&mut insh, 1);
        put_u32(&mut insh, 3);
        put_record(&mut out, b"INSH", &insh);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(load_model(&out), Err(Error::LayerShape { layer: 0, .. })));
    }

    #[test]
    fn unknown_kind_code() {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        put_u32(&mut out, 1);
        out.push(9);
        out.extend_from_slice(&0u16.to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(load_model(&out), Err(Error::UnknownKind { code: 9, offset: 12 })));
    }
}
