//! Deterministic mini-batch iteration.

use crate::error::{Error, Result};
use crate::tensor::{rng::shuffled_indices, StreamKind, StreamRng, Tensor};

use super::Dataset;

/// One mini-batch. `y` holds one-hot rows for labelled samples and zero rows
/// otherwise; it is `None` when the batch contains no labelled sample at all.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Tensor,
    pub y: Option<Tensor>,
    pub labelled: Vec<bool>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labelled.is_empty()
    }

    /// Positions (within the batch) of labelled samples.
    pub fn labelled_positions(&self) -> Vec<usize> {
        self.labelled
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| l.then_some(i))
            .collect()
    }
}

/// Splits the dataset into shuffled batches for one epoch. The permutation
/// is keyed by `(seed, epoch)` only; the final batch may be short. Every
/// sample appears exactly once.
pub fn batches(ds: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if ds.is_empty() {
        return Err(Error::Config("cannot batch an empty dataset".into()));
    }
    let mut rng = StreamRng::new(seed).stream(StreamKind::Shuffle, epoch);
    let order = shuffled_indices(ds.len(), &mut rng);
    let k = ds.n_classes;
    let mut out = Vec::with_capacity(ds.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let x = ds.features.take_rows(chunk)?;
        let labelled: Vec<bool> = chunk.iter().map(|&i| ds.labels[i].is_some()).collect();
        let y = if labelled.iter().any(|&l| l) {
            let mut onehot = vec![0.0; chunk.len() * k];
            for (row, &i) in chunk.iter().enumerate() {
                if let Some(c) = ds.labels[i] {
                    onehot[row * k + c] = 1.0;
                }
            }
            Some(Tensor::new(vec![chunk.len(), k], onehot)?)
        } else {
            None
        };
        out.push(Batch {
            x,
            y,
            labelled,
            indices: chunk.to_vec(),
        });
    }
    Ok(out)
}
