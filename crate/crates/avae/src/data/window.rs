//! Sliding-window segmentation of labelled time series.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride implied by a window length and overlap fraction:
/// `round(window * (1 - overlap))`, which must be at least 1.
pub fn window_stride(window: usize, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!(
            "overlap fraction {} outside [0, 1)",
            overlap
        )));
    }
    let stride = (window as f64 * (1.0 - overlap)).round() as usize;
    if stride == 0 {
        return Err(Error::Config(format!(
            "window {} with overlap {} rounds to a zero stride",
            window, overlap
        )));
    }
    Ok(stride)
}

/// Number of windows over `t` timesteps: `floor((t - window)/stride) + 1`.
pub fn window_count(t: usize, window: usize, stride: usize) -> usize {
    debug_assert!(t >= window && stride >= 1);
    (t - window) / stride + 1
}

/// Cuts a `[T, C]` series into overlapping windows flattened row-major to
/// `[W, window*C]`. Each window takes the majority label of its rows, ties
/// resolved toward the lowest class index.
pub fn window_series(
    series: &Tensor,
    labels: &[usize],
    window: usize,
    overlap: f64,
) -> Result<(Tensor, Vec<usize>)> {
    if series.ndim() != 2 {
        return Err(Error::shape(
            "window_series",
            format!("expected [T, C], got {:?}", series.shape()),
        ));
    }
    let (t, c) = (series.rows(), series.shape()[1]);
    if labels.len() != t {
        return Err(Error::shape(
            "window_series",
            format!("{} timesteps but {} labels", t, labels.len()),
        ));
    }
    if window == 0 || window > t {
        return Err(Error::Config(format!(
            "window {} does not fit a series of {} timesteps",
            window, t
        )));
    }
    let stride = window_stride(window, overlap)?;
    let w = window_count(t, window, stride);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(w * window * c);
    let mut out_labels = Vec::with_capacity(w);
    for wi in 0..w {
        let start = wi * stride;
        for r in start..start + window {
            out.extend_from_slice(series.row(r));
        }
        let mut votes = vec![0usize; n_classes];
        for &l in &labels[start..start + window] {
            votes[l] += 1;
        }
        let best = (0..n_classes)
            .max_by_key(|&k| (votes[k], std::cmp::Reverse(k)))
            .expect("window has rows");
        out_labels.push(best);
    }
    Ok((Tensor::new(vec![w, window * c], out)?, out_labels))
}
