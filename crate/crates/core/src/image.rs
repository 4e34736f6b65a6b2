//! Binary PGM/PPM codecs, heatmap rendering and crash-safe file output.
//!
//! Images are `[C, H, W]` tensors holding 0–255 pixel values.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{decode_raw, Real, Tensor, RAW_MAGIC};

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) if m.first() == Some(&b'P') => {
            return Err(Error::UnsupportedImage(format!(
                "netpbm variant {} (only binary P5/P6)",
                String::from_utf8_lossy(m)
            )))
        }
        _ => return Err(Error::UnsupportedImage("not a PGM/PPM or raw tensor file".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::UnsupportedImage("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::UnsupportedImage("malformed header field".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::UnsupportedImage("missing separator after max value".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedImage(format!("max value {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedImage("zero image extent".into()));
    }
    Ok(Header {
        channels,
        width,
        height,
        data_start: pos + 1,
    })
}

/// Decodes a binary PGM/PPM into `[C, H, W]`.
pub fn decode_netpbm<T: Real>(bytes: &[u8]) -> Result<Tensor<T>> {
    let h = parse_header(bytes)?;
    let plane = h.width * h.height;
    let need = plane * h.channels;
    let data = bytes
        .get(h.data_start..h.data_start + need)
        .ok_or_else(|| Error::UnsupportedImage(format!("pixel data shorter than {need} bytes")))?;
    let mut out = vec![T::ZERO; need];
    for (p, px) in data.chunks_exact(h.channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            out[c * plane + p] = T::from_f64(v as f64);
        }
    }
    Tensor::from_vec(vec![h.channels, h.height, h.width], out)
}

/// Encodes a `[1|3, H, W]` tensor, rounding and clamping to bytes.
pub fn encode_netpbm<T: Real>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let s = img.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(Error::UnsupportedImage(format!("cannot encode tensor of shape {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for p in 0..plane {
        for ch in 0..c {
            out.push(to_byte(img.data()[ch * plane + p].to_f64()));
        }
    }
    Ok(out)
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Reads a PGM (P5), PPM (P6) or raw tensor file.
pub fn read_image<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(RAW_MAGIC) {
        let t = decode_raw(&bytes)?.cast::<T>();
        if t.rank() != 3 {
            return Err(Error::UnsupportedImage(format!("raw tensor of rank {} is not an image", t.rank())));
        }
        return Ok(t);
    }
    decode_netpbm(&bytes)
}

pub fn write_image<T: Real>(img: &Tensor<T>, path: &Path) -> Result<()> {
    atomic_write(path, &encode_netpbm(img)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatStyle {
    /// Min-max normalized PGM.
    Gray,
    /// PPM with positive values in red and negative values in blue.
    Signed,
}

/// Renders an `[H, W]` map as an 8-bit image tensor (`[1,H,W]` or `[3,H,W]`).
pub fn render_heatmap(map: &Tensor<f64>, style: HeatStyle) -> Result<Tensor<f64>> {
    if map.rank() != 2 {
        return Err(Error::Invalid(format!("heatmap must be [H, W], got {:?}", map.shape())));
    }
    if !map.all_finite() {
        return Err(Error::NonFinite {
            index: map.data().iter().position(|v| !v.is_finite()).unwrap(),
            value: f64::NAN,
        });
    }
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let v = map.data();
    match style {
        HeatStyle::Gray => {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let data = if hi > lo {
                v.iter().map(|&x| ((x - lo) / (hi - lo) * 255.0).round()).collect()
            } else {
                vec![128.0; v.len()]
            };
            Tensor::from_vec(vec![1, h, w], data)
        }
        HeatStyle::Signed => {
            let m = map.max_abs();
            let plane = h * w;
            let mut data = vec![0.0; 3 * plane];
            if m > 0.0 {
                for (p, &x) in v.iter().enumerate() {
                    let level = (x.abs() / m * 255.0).round();
                    if x > 0.0 {
                        data[p] = level;
                    } else if x < 0.0 {
                        data[2 * plane + p] = level;
                    }
                }
            }
            Tensor::from_vec(vec![3, h, w], data)
        }
    }
}

pub fn write_heatmap(map: &Tensor<f64>, path: &Path, style: HeatStyle) -> Result<()> {
    write_image(&render_heatmap(map, style)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_pgm() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 64]);
        let t: Tensor<f64> = decode_netpbm(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 128.0, 255.0, 64.0]);
    }

    #[test]
    fn decode_ppm_channel_major() {
        let mut bytes = b"P6 # comment\n2 1 255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 1, 2, 3]);
        let t: Tensor<f32> = decode_netpbm(&bytes).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.get(&[0, 0, 0]), Some(255.0));
        assert_eq!(t.get(&[1, 0, 0]), Some(0.0));
        assert_eq!(t.data(), &[255.0, 1.0, 0.0, 2.0, 0.0, 3.0]);
    }

    #[test]
    fn ascii_variant_rejected() {
        let r = decode_netpbm::<f32>(b"P3\n1 1\n255\n0 0 0\n");
        assert!(matches!(r, Err(Error::UnsupportedImage(_))));
        assert!(decode_netpbm::<f32>(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_netpbm::<f32>(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn constant_map_is_mid_gray() {
        let img = render_heatmap(&Tensor::full(&[2, 3], 4.2), HeatStyle::Gray).unwrap();
        assert!(img.data().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn signed_extremes() {
        let img = render_heatmap(&Tensor::new(&[1, 3], &[-1.0, 1.0, 0.0]).unwrap(), HeatStyle::Signed).unwrap();
        // Channel planes: red, green, blue.
        assert_eq!(img.data(), &[0.0, 255.0, 0.0, 0.0, 0.0, 0.0, 255.0, 0.0, 0.0]);
    }

    #[test]
    fn written_pgm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let map = Tensor::new(&[2, 2], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        write_heatmap(&map, &path, HeatStyle::Gray).unwrap();
        let back: Tensor<f64> = read_image(&path).unwrap();
        assert_eq!(back.data(), &[0.0, 85.0, 170.0, 255.0]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
