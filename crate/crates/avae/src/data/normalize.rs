//! Z-score normalization with train-only statistics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-column mean and population standard deviation.
///
/// Columns whose raw std fell below `1e-12` are stored with `std = 0` and
/// always transform to zero, so constant columns stay exactly constant.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits per-column statistics on a `[N, M]` tensor, `N >= 1`.
pub fn zscore_fit(features: &Tensor) -> Result<NormStats> {
    if features.ndim() != 2 || features.rows() == 0 {
        return Err(Error::shape(
            "zscore_fit",
            format!("expected non-empty [N, M], got {:?}", features.shape()),
        ));
    }
    let (n, m) = (features.rows(), features.shape()[1]);
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (j, x) in features.row(i).iter().enumerate() {
            mean[j] += x;
        }
    }
    for mj in mean.iter_mut() {
        *mj /= n as f64;
    }
    let mut var = vec![0.0; m];
    for i in 0..n {
        for (j, x) in features.row(i).iter().enumerate() {
            let d = x - mean[j];
            var[j] += d * d;
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s < 1e-12 {
                0.0
            } else {
                s
            }
        })
        .collect();
    Ok(NormStats { mean, std })
}

/// Applies stored statistics: `(x - mean) / std`, zero for guarded columns.
pub fn zscore_apply(features: &Tensor, stats: &NormStats) -> Result<Tensor> {
    if features.ndim() != 2 || features.shape()[1] != stats.mean.len() {
        return Err(Error::shape(
            "zscore_apply",
            format!(
                "features {:?} vs {} fitted columns",
                features.shape(),
                stats.mean.len()
            ),
        ));
    }
    let m = stats.mean.len();
    let data = features
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let j = i % m;
            if stats.std[j] == 0.0 {
                0.0
            } else {
                (x - stats.mean[j]) / stats.std[j]
            }
        })
        .collect();
    Tensor::new(features.shape().to_vec(), data)
}

/// Fit and apply in one step; returns the transformed tensor and the
/// statistics for reuse on held-out data.
pub fn zscore_normalize(features: &Tensor) -> Result<(Tensor, NormStats)> {
    let stats = zscore_fit(features)?;
    let out = zscore_apply(features, &stats)?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_1_2_3_standardizes_with_population_std() {
        // mean 2, population std sqrt(2/3): z = (x-2)/0.8164... = ±1.2247, 0.
        let t = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let (z, stats) = zscore_normalize(&t).unwrap();
        assert!((z.data()[0] + 1.2247448713915890).abs() < 1e-12);
        assert!(z.data()[1].abs() < 1e-12);
        assert!((z.data()[2] - 1.2247448713915890).abs() < 1e-12);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let t = Tensor::new(vec![3, 2], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let (z, stats) = zscore_normalize(&t).unwrap();
        assert_eq!(stats.std[0], 0.0);
        assert_eq!(z.get2(0, 0), 0.0);
        assert_eq!(z.get2(1, 0), 0.0);
        assert_eq!(z.get2(2, 0), 0.0);
        assert_ne!(z.get2(0, 1), z.get2(1, 1));
    }

    #[test]
    fn standardized_data_is_a_fixed_point() {
        let t = Tensor::new(vec![4, 1], vec![-1.5, -0.5, 0.5, 1.5]).unwrap();
        let (z1, _) = zscore_normalize(&t).unwrap();
        let (z2, _) = zscore_normalize(&z1).unwrap();
        for (a, b) in z1.iter().zip(z2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_reuses_training_statistics() {
        let train = Tensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap();
        let test = Tensor::new(vec![2, 1], vec![4.0, -2.0]).unwrap();
        let stats = zscore_fit(&train).unwrap();
        let z = zscore_apply(&test, &stats).unwrap();
        // mean 1, std 1: test values shift by -1.
        assert_eq!(z.data(), &[3.0, -3.0]);
    }

    #[test]
    fn fit_rejects_empty_and_misshaped() {
        assert!(zscore_fit(&Tensor::new(vec![0, 2], vec![]).unwrap()).is_err());
        assert!(zscore_fit(&Tensor::new(vec![4], vec![0.0; 4]).unwrap()).is_err());
        let stats = NormStats {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let wide = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert!(zscore_apply(&wide, &stats).is_err());
    }
}
