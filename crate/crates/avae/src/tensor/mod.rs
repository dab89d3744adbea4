//! Dense tensors and reverse-mode automatic differentiation.
//!
//! [`Tensor`] is an immutable row-major `f64` array with shared storage, so
//! clones are cheap and safe to capture in gradient closures. [`Tape`] records
//! operations on [`Value`] handles and replays them backwards to produce
//! per-leaf gradients. [`adam::AdamState`] applies the Adam update rule, and
//! [`rng`] derives independent, reproducible random streams from a single run
//! seed.

pub mod adam;
pub mod check;
pub mod linalg;
pub mod ops;
pub mod rng;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use linalg::PadMode;
pub use rng::{sample_standard_normal, sample_uniform, StreamKind, StreamRng};
pub use tape::{Gradients, Tape, Value};

use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64` values with copy-on-write semantics.
///
/// The element count always equals the product of the dimensions; dimensions
/// of size zero are permitted and yield an empty tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::shape(
                "tensor",
                format!(
                    "shape {:?} implies {} elements, got {}",
                    shape,
                    expect,
                    data.len()
                ),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; n]),
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: Arc::new(vec![value]),
        }
    }

    /// Builds a matrix from nested rows; rows must have equal lengths.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape("tensor", "ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of {} elements", self.len());
        self.data[0]
    }

    /// Number of rows when the tensor is interpreted as `[rows, row_len]`.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per leading-dimension slice.
    pub fn row_len(&self) -> usize {
        let r = self.rows();
        if r == 0 {
            0
        } else {
            self.len() / r
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.ndim(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&x| f(x)).collect()),
        }
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add_tensor(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: Arc::new(data),
        })
    }

    /// Same data viewed under a new shape with an equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if expect != self.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?} changes element count", self.shape, shape),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    /// Gathers leading-dimension slices in the given order. Indices may
    /// repeat; out-of-range indices are an error.
    pub fn take_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let n = self.rows();
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            if i >= n {
                return Err(Error::shape(
                    "take_rows",
                    format!("index {} out of range for {} rows", i, n),
                ));
            }
            data.extend_from_slice(&self.data[i * w..(i + 1) * w]);
        }
        let mut shape = self.shape.clone();
        if shape.is_empty() {
            return Err(Error::shape("take_rows", "scalar input"));
        }
        shape[0] = idx.len();
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    /// Stacks tensors along the leading dimension; trailing dims must agree.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let trailing = &first.shape[1..];
        let mut rows = 0;
        let mut data = Vec::new();
        for t in parts {
            if t.shape.len() != first.shape.len() || &t.shape[1..] != trailing {
                return Err(Error::shape(
                    "concat_rows",
                    format!("{:?} vs {:?}", first.shape, t.shape),
                ));
            }
            rows += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = rows;
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}
