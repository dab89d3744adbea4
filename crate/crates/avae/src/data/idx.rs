//! IDX image/label file format.
//!
//! Layout: two zero magic bytes, a type byte (`0x08`, unsigned byte), a
//! dimension-count byte, that many big-endian 32-bit dimension sizes, then
//! the payload bytes in row-major order. Pixel reads scale to `[0, 1]` by
//! division by 255; label files are read raw.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TYPE_UNSIGNED_BYTE: u8 = 0x08;

fn format_err(path: &Path, offset: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        detail: detail.into(),
    }
}

fn read_raw(path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < 4 {
        return Err(format_err(path, bytes.len(), "file shorter than IDX header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(path, 0, "bad magic bytes (expected 0x00 0x00)"));
    }
    if bytes[2] != TYPE_UNSIGNED_BYTE {
        return Err(format_err(
            path,
            2,
            format!("unsupported type byte 0x{:02x} (expected 0x08)", bytes[2]),
        ));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated dimension table ({} dims declared)", ndim),
        ));
    }
    let mut shape = Vec::with_capacity(ndim);
    for d in 0..ndim {
        let o = 4 + 4 * d;
        let size = u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        shape.push(size as usize);
    }
    let expect: usize = shape.iter().product();
    if bytes.len() < header + expect {
        return Err(format_err(
            path,
            bytes.len(),
            format!(
                "payload truncated: shape {:?} needs {} bytes, file ends early",
                shape, expect
            ),
        ));
    }
    if bytes.len() > header + expect {
        return Err(format_err(
            path,
            header + expect,
            format!("{} trailing bytes after declared payload", bytes.len() - header - expect),
        ));
    }
    Ok((shape, bytes[header..].to_vec()))
}

/// Reads an IDX file of unsigned bytes as a tensor scaled to `[0, 1]`.
pub fn read_idx(path: impl AsRef<Path>) -> Result<Tensor> {
    let (shape, payload) = read_raw(path.as_ref())?;
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(shape, data)
}

/// Reads a 1-D IDX label file as raw class indices.
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let (shape, payload) = read_raw(path)?;
    if shape.len() != 1 {
        return Err(format_err(
            path,
            3,
            format!("label file must be 1-D, got {:?}", shape),
        ));
    }
    Ok(payload.into_iter().map(|b| b as usize).collect())
}

fn header_bytes(shape: &[usize]) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, TYPE_UNSIGNED_BYTE, shape.len() as u8];
    if shape.len() > u8::MAX as usize {
        return Err(Error::shape("write_idx", "more than 255 dimensions"));
    }
    for &d in shape {
        let d = u32::try_from(d)
            .map_err(|_| Error::shape("write_idx", format!("dimension {} exceeds u32", d)))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

/// Writes `[0, 1]`-scaled values back to IDX bytes via `round(x * 255)`;
/// together with [`read_idx`] this is the identity on integer images.
pub fn write_idx(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = header_bytes(tensor.shape())?;
    for (i, &x) in tensor.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(
                "write_idx",
                format!("value {} at flat index {} outside [0, 1]", x, i),
            ));
        }
        bytes.push((x * 255.0).round() as u8);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes class indices as a 1-D IDX label file.
pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = header_bytes(&[labels.len()])?;
    for (i, &l) in labels.iter().enumerate() {
        if l > u8::MAX as usize {
            return Err(Error::domain(
                "write_idx",
                format!("label {} at index {} exceeds one byte", l, i),
            ));
        }
        bytes.push(l as u8);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
