//! Synthetic Gaussian-mixture datasets for tests, examples, and the
//! directional ablation experiments.

use crate::error::{Error, Result};
use crate::tensor::{sample_standard_normal, StreamKind, StreamRng, Tensor};

use super::Dataset;

/// `n` samples in 2-D, one isotropic Gaussian per class centered at
/// `centers[k]` with standard deviation `spread`. Samples are distributed
/// round-robin over classes, so counts differ by at most one.
pub fn gaussian_mixture(
    n: usize,
    centers: &[[f64; 2]],
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if centers.is_empty() {
        return Err(Error::Config("mixture needs at least one class".into()));
    }
    if n < centers.len() {
        return Err(Error::Config(format!(
            "{} samples cannot cover {} classes",
            n,
            centers.len()
        )));
    }
    if spread <= 0.0 {
        return Err(Error::Config(format!("spread {} must be positive", spread)));
    }
    let mut rng = StreamRng::new(seed).stream(StreamKind::Synthetic, 0);
    let noise = sample_standard_normal(&[n, 2], &mut rng);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % centers.len();
        data.push(centers[k][0] + spread * noise.get2(i, 0));
        data.push(centers[k][1] + spread * noise.get2(i, 1));
        labels.push(k);
    }
    Dataset::labelled(
        Tensor::new(vec![n, 2], data)?,
        labels,
        centers.len(),
        format!("gaussian-mixture(n={}, k={}, spread={})", n, centers.len(), spread),
    )
}

/// The two-class overlapping mixture used by the ablation experiments:
/// classes at `(-d/2, 0)` and `(d/2, 0)` with unit-free spread `s`.
pub fn two_gaussians(n: usize, separation: f64, spread: f64, seed: u64) -> Result<Dataset> {
    gaussian_mixture(
        n,
        &[[-separation / 2.0, 0.0], [separation / 2.0, 0.0]],
        spread,
        seed,
    )
}
