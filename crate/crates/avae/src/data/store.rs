//! Flat-binary tensor store with a text sidecar.
//!
//! The `.bin` file is the concatenation of all tensors as little-endian
//! 64-bit floats. The sidecar lists, one per line, free-form key/value pairs
//! and tensor records (name, byte offset, shape) in write order:
//!
//! ```text
//! avae-store v1
//! kv source pamap2.csv
//! tensor features 0 2 800 40
//! tensor labels 256000 1 800
//! ```
//!
//! Both dataset caches and training checkpoints use this format.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "avae-store v1";

#[derive(Default, Debug)]
pub struct Store {
    pub tensors: Vec<(String, Tensor)>,
    pub kvs: Vec<(String, String)>,
}

impl Store {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn kv(&self, key: &str) -> Option<&str> {
        self.kvs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn required_tensor(&self, name: &str, path: &Path) -> Result<&Tensor> {
        self.tensor(name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("missing tensor {:?}", name),
        })
    }

    pub fn required_kv(&self, key: &str, path: &Path) -> Result<&str> {
        self.kv(key).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("missing key {:?}", key),
        })
    }
}

/// Writes tensors and metadata; `bin` and `meta` paths are created or
/// truncated. Tensor names and kv keys must be free of whitespace.
pub fn write_store(
    bin: impl AsRef<Path>,
    meta: impl AsRef<Path>,
    tensors: &[(&str, &Tensor)],
    kvs: &[(&str, String)],
) -> Result<()> {
    let bin = bin.as_ref();
    let meta = meta.as_ref();
    for (name, _) in tensors {
        if name.chars().any(char::is_whitespace) || name.is_empty() {
            return Err(Error::Config(format!("invalid tensor name {:?}", name)));
        }
    }
    for (key, value) in kvs {
        if key.chars().any(char::is_whitespace) || key.is_empty() {
            return Err(Error::Config(format!("invalid metadata key {:?}", key)));
        }
        if value.contains('\n') {
            return Err(Error::Config(format!("metadata {:?} contains a newline", key)));
        }
    }

    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    for (key, value) in kvs {
        header.push_str(&format!("kv {} {}\n", key, value));
    }

    let mut bin_out = std::io::BufWriter::new(
        std::fs::File::create(bin).io_ctx(format!("creating {}", bin.display()))?,
    );
    let mut offset = 0u64;
    for (name, tensor) in tensors {
        header.push_str(&format!("tensor {} {} {}", name, offset, tensor.ndim()));
        for d in tensor.shape() {
            header.push_str(&format!(" {}", d));
        }
        header.push('\n');
        for x in tensor.iter() {
            bin_out
                .write_all(&x.to_le_bytes())
                .io_ctx(format!("writing {}", bin.display()))?;
        }
        offset += 8 * tensor.len() as u64;
    }
    bin_out
        .flush()
        .io_ctx(format!("writing {}", bin.display()))?;
    std::fs::write(meta, header).io_ctx(format!("writing {}", meta.display()))?;
    Ok(())
}

/// Reads a store written by [`write_store`], validating sizes and offsets.
pub fn read_store(bin: impl AsRef<Path>, meta: impl AsRef<Path>) -> Result<Store> {
    let bin = bin.as_ref();
    let meta = meta.as_ref();
    let text =
        std::fs::read_to_string(meta).io_ctx(format!("reading {}", meta.display()))?;
    let bytes = std::fs::read(bin).io_ctx(format!("reading {}", bin.display()))?;

    let mut lines = text.lines();
    let mut line_offset = 0u64;
    let first = lines.next().unwrap_or("");
    if first != MAGIC {
        return Err(Error::Format {
            path: meta.to_path_buf(),
            offset: 0,
            detail: format!("expected header {:?}, got {:?}", MAGIC, first),
        });
    }
    line_offset += first.len() as u64 + 1;

    let mut store = Store::default();
    let mut consumed = 0usize;
    for line in lines {
        let this_offset = line_offset;
        line_offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: String| Error::Format {
            path: meta.to_path_buf(),
            offset: this_offset,
            detail,
        };
        let mut parts = line.splitn(2, ' ');
        let tag = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("");
        match tag {
            "kv" => {
                let (key, value) = rest
                    .split_once(' ')
                    .map(|(k, v)| (k, v.to_string()))
                    .unwrap_or((rest, String::new()));
                store.kvs.push((key.to_string(), value));
            }
            "tensor" => {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                if fields.len() < 3 {
                    return Err(bad(format!("malformed tensor record {:?}", line)));
                }
                let name = fields[0].to_string();
                let offset: usize = fields[1]
                    .parse()
                    .map_err(|_| bad(format!("bad offset {:?}", fields[1])))?;
                let ndim: usize = fields[2]
                    .parse()
                    .map_err(|_| bad(format!("bad rank {:?}", fields[2])))?;
                if fields.len() != 3 + ndim {
                    return Err(bad(format!(
                        "rank {} but {} dimension fields",
                        ndim,
                        fields.len() - 3
                    )));
                }
                let mut shape = Vec::with_capacity(ndim);
                for f in &fields[3..] {
                    shape.push(
                        f.parse::<usize>()
                            .map_err(|_| bad(format!("bad dimension {:?}", f)))?,
                    );
                }
                let count: usize = shape.iter().product();
                let end = offset + 8 * count;
                if end > bytes.len() {
                    return Err(Error::Format {
                        path: bin.to_path_buf(),
                        offset: bytes.len() as u64,
                        detail: format!(
                            "tensor {:?} needs bytes {}..{} but file has {}",
                            name,
                            offset,
                            end,
                            bytes.len()
                        ),
                    });
                }
                let data: Vec<f64> = bytes[offset..end]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                consumed += 8 * count;
                store.tensors.push((name, Tensor::new(shape, data)?));
            }
            _ => return Err(bad(format!("unknown record tag {:?}", tag))),
        }
    }
    if consumed != bytes.len() {
        return Err(Error::Format {
            path: bin.to_path_buf(),
            offset: consumed as u64,
            detail: format!(
                "binary holds {} bytes but records account for {}",
                bytes.len(),
                consumed
            ),
        });
    }
    Ok(store)
}
