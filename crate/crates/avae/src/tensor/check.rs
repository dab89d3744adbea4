//! Finite-difference gradient checking.
//!
//! Used by the test suite and the `autodiff_basics` example to validate every
//! backward rule against central differences on randomly sampled inputs.

use super::Tensor;
use crate::error::Result;

/// Central-difference gradient of a scalar function at `x`, step `h` per
/// coordinate.
pub fn numeric_gradient(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    h: f64,
) -> Result<Tensor> {
    let base = x.to_vec();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = f(&Tensor::new(x.shape().to_vec(), plus)?)?;
        let fm = f(&Tensor::new(x.shape().to_vec(), minus)?)?;
        grad.push((fp - fm) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Relative error between matching entries:
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Largest per-entry [`rel_err`] between two gradients of equal shape.
pub fn max_rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
