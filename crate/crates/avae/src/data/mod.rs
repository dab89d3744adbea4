//! Dataset ingestion and the semi-supervised protocol.
//!
//! Raw sources (time-series CSV, IDX image files, flat attribute tables)
//! become a [`Dataset`]: a feature tensor plus per-sample optional labels.
//! Preparation normalizes with statistics fit on the training split only,
//! windows time series, and caches the result as flat binary plus a text
//! sidecar. At training time [`mask::apply_supervision_mask`] hides labels
//! down to the requested supervision rate and [`batches::batches`] yields
//! deterministic shuffled mini-batches.

pub mod batches;
pub mod csvio;
pub mod idx;
pub mod mask;
pub mod normalize;
pub mod store;
pub mod synthetic;
pub mod window;

pub use batches::{batches, Batch};
pub use mask::apply_supervision_mask;
pub use normalize::{zscore_apply, zscore_fit, zscore_normalize, NormStats};
pub use window::window_series;

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{rng::shuffled_indices, StreamKind, StreamRng, Tensor};

/// A set of samples with optional labels.
///
/// `features` is `[N, M]` for vector data or `[N, H, W, C]` for images.
/// `None` labels mark unlabelled samples; present labels lie in
/// `[0, n_classes)`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<Option<usize>>,
    pub n_classes: usize,
    pub metadata: String,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<Option<usize>>,
        n_classes: usize,
        metadata: impl Into<String>,
    ) -> Result<Dataset> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Config("dataset has no samples".into()));
        }
        if features.ndim() != 2 && features.ndim() != 4 {
            return Err(Error::shape(
                "dataset",
                format!("features must be [N, M] or [N, H, W, C], got {:?}", features.shape()),
            ));
        }
        if labels.len() != n {
            return Err(Error::shape(
                "dataset",
                format!("{} samples but {} labels", n, labels.len()),
            ));
        }
        if n_classes == 0 {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&l| l >= n_classes) {
            return Err(Error::Config(format!(
                "label {} outside [0, {})",
                bad, n_classes
            )));
        }
        if let Some((i, _)) = features.iter().enumerate().find(|(_, x)| x.is_nan()) {
            return Err(Error::domain(
                "dataset",
                format!("NaN feature at flat index {}", i),
            ));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
            metadata: metadata.into(),
        })
    }

    /// Convenience constructor for fully labelled data.
    pub fn labelled(
        features: Tensor,
        labels: Vec<usize>,
        n_classes: usize,
        metadata: impl Into<String>,
    ) -> Result<Dataset> {
        Dataset::new(
            features,
            labels.into_iter().map(Some).collect(),
            n_classes,
            metadata,
        )
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened feature width per sample.
    pub fn feature_dim(&self) -> usize {
        self.features.row_len()
    }

    pub fn is_image(&self) -> bool {
        self.features.ndim() == 4
    }

    pub fn labelled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Rows carrying a label, in dataset order.
    pub fn labelled_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|_| i))
            .collect()
    }

    pub fn take(&self, idx: &[usize]) -> Result<Dataset> {
        let features = self.features.take_rows(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            features,
            labels,
            n_classes: self.n_classes,
            metadata: self.metadata.clone(),
        })
    }
}

/// Shuffles (keyed by `seed`) and splits into train/test by `train_fraction`.
/// The split is deterministic and both halves are non-empty unless
/// `train_fraction` is 1, in which case the test set is empty only when the
/// caller accepts it.
pub fn split_train_test(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} outside (0, 1]",
            train_fraction
        )));
    }
    let n = ds.len();
    let mut rng = StreamRng::new(seed).stream(StreamKind::Split, 0);
    let idx = shuffled_indices(n, &mut rng);
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n);
    let train = ds.take(&idx[..n_train])?;
    if n_train == n {
        return Err(Error::Config(format!(
            "train fraction {} leaves an empty test split for {} samples",
            train_fraction, n
        )));
    }
    let test = ds.take(&idx[n_train..])?;
    Ok((train, test))
}

/// Caches a dataset as `<dir>/<name>.bin` + `<dir>/<name>.meta`. Labels are
/// stored as a float row with `-1` marking unlabelled samples.
pub fn write_dataset(dir: &Path, name: &str, ds: &Dataset) -> Result<Dataset> {
    let labels: Vec<f64> = ds
        .labels
        .iter()
        .map(|l| l.map_or(-1.0, |c| c as f64))
        .collect();
    let labels = Tensor::new(vec![ds.len()], labels)?;
    store::write_store(
        dir.join(format!("{name}.bin")),
        dir.join(format!("{name}.meta")),
        &[("features", &ds.features), ("labels", &labels)],
        &[
            ("n_classes", ds.n_classes.to_string()),
            ("metadata", ds.metadata.clone()),
        ],
    )?;
    read_dataset(dir, name)
}

/// Loads a dataset cached by [`write_dataset`].
pub fn read_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let meta = dir.join(format!("{name}.meta"));
    let s = store::read_store(dir.join(format!("{name}.bin")), &meta)?;
    let features = s.required_tensor("features", &meta)?.clone();
    let raw = s.required_tensor("labels", &meta)?;
    let labels = raw
        .iter()
        .map(|&v| if v < 0.0 { None } else { Some(v as usize) })
        .collect();
    let n_classes = s
        .required_kv("n_classes", &meta)?
        .parse()
        .map_err(|_| Error::Format {
            path: meta.clone(),
            offset: 0,
            detail: "n_classes is not a count".into(),
        })?;
    let metadata = s.required_kv("metadata", &meta)?.to_string();
    Dataset::new(features, labels, n_classes, metadata)
}
