//! Supervision-rate masking.
//!
//! Given fully labelled training data and a rate `gamma`, exactly
//! `round(gamma * N)` samples keep their labels; the rest become unlabelled
//! but stay in the dataset. Stratified selection keeps `round(gamma * N_k)`
//! per class, nudged one sample at a time toward the global total; a uniform
//! mode ignores class structure.

use crate::error::{Error, Result};
use crate::tensor::{rng::shuffled_indices, StreamKind, StreamRng};

use super::Dataset;

fn per_class_counts(class_sizes: &[usize], gamma: f64, target: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = class_sizes
        .iter()
        .map(|&n| ((gamma * n as f64).round() as usize).min(n))
        .collect();
    loop {
        let total: usize = counts.iter().sum();
        if total == target {
            return counts;
        }
        // Remainder of class k under the current allocation; the most
        // under-served class absorbs an increment, the most over-served
        // gives one back. Ties resolve to the lowest class index.
        let remainder = |k: usize| gamma * class_sizes[k] as f64 - counts[k] as f64;
        if total < target {
            let k = (0..counts.len())
                .filter(|&k| counts[k] < class_sizes[k])
                .max_by(|&a, &b| {
                    remainder(a)
                        .partial_cmp(&remainder(b))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .expect("target <= N guarantees capacity");
            counts[k] += 1;
        } else {
            let k = (0..counts.len())
                .filter(|&k| counts[k] > 0)
                .min_by(|&a, &b| {
                    remainder(a)
                        .partial_cmp(&remainder(b))
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .expect("positive total has a donor");
            counts[k] -= 1;
        }
    }
}

/// Hides labels down to rate `gamma`. Returns the masked dataset and any
/// warnings (classes left without a single label).
pub fn apply_supervision_mask(
    ds: &Dataset,
    gamma: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Dataset, Vec<String>)> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!(
            "supervision rate {} outside (0, 1]",
            gamma
        )));
    }
    if ds.labelled_count() != ds.len() {
        return Err(Error::Config(
            "supervision mask requires fully labelled input".into(),
        ));
    }
    let n = ds.len();
    let target = (gamma * n as f64).round() as usize;
    if target == 0 {
        return Err(Error::Config(format!(
            "supervision rate {} keeps zero of {} labels",
            gamma, n
        )));
    }

    let mut rng = StreamRng::new(seed).stream(StreamKind::Mask, 0);
    let order = shuffled_indices(n, &mut rng);
    let mut keep = vec![false; n];
    let mut warnings = Vec::new();

    if stratified {
        let k = ds.n_classes;
        let mut class_sizes = vec![0usize; k];
        for l in ds.labels.iter().flatten() {
            class_sizes[*l] += 1;
        }
        let counts = per_class_counts(&class_sizes, gamma, target);
        for (c, (&kept, &size)) in counts.iter().zip(&class_sizes).enumerate() {
            if kept == 0 && size > 0 {
                warnings.push(format!(
                    "class {} keeps 0 of {} labels at rate {}",
                    c, size, gamma
                ));
            }
        }
        let mut remaining = counts;
        for &i in &order {
            let c = ds.labels[i].expect("fully labelled");
            if remaining[c] > 0 {
                remaining[c] -= 1;
                keep[i] = true;
            }
        }
    } else {
        for &i in order.iter().take(target) {
            keep[i] = true;
        }
    }

    let labels = ds
        .labels
        .iter()
        .zip(&keep)
        .map(|(l, &k)| if k { *l } else { None })
        .collect();
    let masked = Dataset {
        features: ds.features.clone(),
        labels,
        n_classes: ds.n_classes,
        metadata: ds.metadata.clone(),
    };
    Ok((masked, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn balanced(n: usize, k: usize) -> Dataset {
        let features = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::labelled(features, (0..n).map(|i| i % k).collect(), k, "toy").unwrap()
    }

    #[test]
    fn exact_count_and_per_class_stratification() {
        let ds = balanced(100, 2);
        let (masked, warnings) = apply_supervision_mask(&ds, 0.2, 3, true).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(masked.labelled_count(), 20);
        let per_class: Vec<usize> = (0..2)
            .map(|c| masked.labels.iter().flatten().filter(|&&l| l == c).count())
            .collect();
        assert_eq!(per_class, vec![10, 10]);
        assert_eq!(masked.len(), 100);
    }

    #[test]
    fn gamma_one_is_identity() {
        let ds = balanced(30, 3);
        let (masked, _) = apply_supervision_mask(&ds, 1.0, 0, true).unwrap();
        assert_eq!(masked.labels, ds.labels);
    }

    #[test]
    fn reproducible_under_fixed_seed_and_sensitive_to_it() {
        let ds = balanced(50, 2);
        let (a, _) = apply_supervision_mask(&ds, 0.3, 9, true).unwrap();
        let (b, _) = apply_supervision_mask(&ds, 0.3, 9, true).unwrap();
        let (c, _) = apply_supervision_mask(&ds, 0.3, 10, true).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn unbalanced_counts_adjust_to_global_total() {
        // Sizes 7 and 3 at rate 0.5: target round(5) = 5; per class
        // round(3.5)=4 (capped 4? no, round-half-even? f64 round: 3.5 -> 4)
        // and round(1.5)=2 gives 6, one decrement lands on the most
        // over-served class.
        let features = Tensor::new(vec![10, 1], (0..10).map(|i| i as f64).collect()).unwrap();
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let ds = Dataset::labelled(features, labels, 2, "t").unwrap();
        let (masked, _) = apply_supervision_mask(&ds, 0.5, 1, true).unwrap();
        assert_eq!(masked.labelled_count(), 5);
        let c1 = masked.labels.iter().flatten().filter(|&&l| l == 1).count();
        let c0 = masked.labelled_count() - c1;
        // Class proportions stay within one sample of gamma * N_k.
        assert!((c0 as f64 - 3.5).abs() <= 1.0, "class 0 kept {}", c0);
        assert!((c1 as f64 - 1.5).abs() <= 1.0, "class 1 kept {}", c1);
    }

    #[test]
    fn tiny_rate_warns_on_empty_class() {
        // 10 samples, 5 classes, rate 0.2 -> 2 labels; at least 3 classes
        // keep nothing.
        let ds = balanced(10, 5);
        let (masked, warnings) = apply_supervision_mask(&ds, 0.2, 0, true).unwrap();
        assert_eq!(masked.labelled_count(), 2);
        assert!(warnings.len() >= 3, "{:?}", warnings);
    }

    #[test]
    fn uniform_mode_hits_exact_count() {
        let ds = balanced(101, 3);
        let (masked, _) = apply_supervision_mask(&ds, 0.33, 5, false).unwrap();
        assert_eq!(masked.labelled_count(), 33);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = balanced(10, 2);
        assert!(apply_supervision_mask(&ds, 0.0, 0, true).is_err());
        assert!(apply_supervision_mask(&ds, 1.1, 0, true).is_err());
        assert!(apply_supervision_mask(&ds, 0.01, 0, true).is_err());
        let (masked, _) = apply_supervision_mask(&ds, 0.5, 0, true).unwrap();
        assert!(apply_supervision_mask(&masked, 0.5, 0, true).is_err());
    }
}
