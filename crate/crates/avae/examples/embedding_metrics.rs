//! The metric layer on hand-made embeddings: k-nearest-neighbour voting,
//! confusion matrices, accuracy, and one-vs-rest ROC/AUC, with no model in
//! the loop.
//!
//! Run with `cargo run --release --example embedding_metrics`.

use avae::evaluator::{
    accuracy, confusion_matrix, knn_with_scores, roc_auc, roc_points, EmbeddingSet, Split,
};
use avae::tensor::{sample_standard_normal, StreamKind, StreamRng};
use avae::{Result, Tensor};

/// Three Gaussian blobs in 2-D, one per class, with every fourth training
/// row left unlabelled (kNN simply skips those).
fn blobs(n_per_class: usize, seed: u64, split: Split) -> Result<EmbeddingSet> {
    let centers = [[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]];
    let mut rng = StreamRng::new(seed).stream(StreamKind::Synthetic, 0);
    let noise = sample_standard_normal(&[3 * n_per_class, 2], &mut rng);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..3 * n_per_class {
        let class = i % 3;
        let c = centers[class];
        rows.push(vec![c[0] + 0.8 * noise.get2(i, 0), c[1] + 0.8 * noise.get2(i, 1)]);
        let hide = split == Split::Train && i % 4 == 3;
        labels.push((!hide).then_some(class));
    }
    Ok(EmbeddingSet {
        codes: Tensor::from_rows(&rows)?,
        labels,
        n_classes: 3,
        split,
    })
}

fn main() -> Result<()> {
    let train = blobs(60, 1, Split::Train)?;
    let test = blobs(25, 2, Split::Test)?;
    let y_true: Vec<usize> = test.labels.iter().map(|l| l.unwrap()).collect();

    let knn = knn_with_scores(&train, &test.codes, 3)?;
    let confusion = confusion_matrix(&y_true, &knn.pred, 3)?;
    println!("confusion (rows = truth):");
    for row in &confusion {
        println!("  {row:?}");
    }
    println!("accuracy: {:.4}", accuracy(&confusion));

    // Scores are kNN vote fractions, so each one-vs-rest ROC has at most
    // k + 2 distinct points.
    let auc = roc_auc(&knn.scores, &y_true)?;
    for (class, a) in auc.iter().enumerate() {
        match a {
            Some(a) => println!("class {class} AUC: {a:.4}"),
            None => println!("class {class} AUC: undefined (single class)"),
        }
    }
    let curve = roc_points(&knn.scores, &y_true, 0)?;
    println!("class 0 ROC:");
    for p in &curve {
        println!("  fpr {:.3} tpr {:.3} at threshold {}", p.fpr, p.tpr, p.threshold);
    }
    Ok(())
}
