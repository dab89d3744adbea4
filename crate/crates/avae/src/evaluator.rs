//! The classification head and metrics: embeddings from a frozen model, kNN
//! with deterministic tie-breaking, confusion matrix, one-vs-rest ROC/AUC
//! with midrank tie handling, and CSV export.
//!
//! Every ablation runs the identical metric pipeline; the only thing that
//! varies is which latent quantity supplies the codes (the posterior mean,
//! a posterior sample, or the exclusive code). Neighbor search is exact, and
//! the metric is Euclidean distance over codes standardized with statistics
//! fitted on the training embeddings alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Ablation;
use crate::data::{zscore_apply, zscore_fit, Dataset};
use crate::error::IoContext;
use crate::params::ParamStore;
use crate::tensor::{StreamKind, StreamRng, Tape, Tensor};
use crate::vaepp::VaeppNet;
use crate::{Error, Result};

/// Rows per forward pass when embedding a dataset.
const EMBED_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    /// Index of the evaluation noise stream, so the two splits draw
    /// different but reproducible samples.
    fn stream_index(&self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

/// Codes for one dataset split, produced by a frozen model. Re-embedding
/// from the same checkpoint yields identical codes.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    /// `[N, D]` latent codes.
    pub codes: Tensor,
    /// Per-row label; `None` marks unlabelled rows.
    pub labels: Vec<Option<usize>>,
    pub n_classes: usize,
    pub split: Split,
}

/// Which latent quantity serves as the embedding.
enum CodeSource {
    /// Posterior mean (standard-VAE ablation evaluated at its mean).
    Mu,
    /// Posterior sample drawn from the evaluation noise stream.
    Sample,
    /// The exclusive code of the split latent.
    Exclusive,
}

impl CodeSource {
    fn for_ablation(ablation: Ablation) -> CodeSource {
        match ablation {
            Ablation::VaeMu => CodeSource::Mu,
            Ablation::Vae => CodeSource::Sample,
            Ablation::Vaepp | Ablation::Avae => CodeSource::Exclusive,
        }
    }
}

/// Embeds a dataset with the code source that matches the ablation.
pub fn embed(
    vae: &VaeppNet,
    store: &ParamStore,
    ds: &Dataset,
    ablation: Ablation,
    seed: u64,
    split: Split,
) -> Result<EmbeddingSet> {
    let source = CodeSource::for_ablation(ablation);
    let mut rng = StreamRng::new(seed).stream(StreamKind::EvalEpsilon, split.stream_index());

    let n = ds.len();
    let mut parts: Vec<Tensor> = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + EMBED_BATCH).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let tape = Tape::new();
        let x = tape.input(ds.features.take_rows(&idx)?);
        let code = match source {
            CodeSource::Exclusive => vae.encode(&tape, store, &x)?,
            CodeSource::Mu => {
                let head = vae.head_input(&tape, store, &x)?;
                let eps = Tensor::zeros(&[end - start, vae.latent_dim]);
                vae.generate_with_eps(&tape, store, &head, eps)?.mu
            }
            CodeSource::Sample => {
                let head = vae.head_input(&tape, store, &x)?;
                vae.generate(&tape, store, &head, &mut rng)?.z_s
            }
        };
        parts.push(code.tensor());
        start = end;
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Ok(EmbeddingSet {
        codes: Tensor::concat_rows(&refs)?,
        labels: ds.labels.clone(),
        n_classes: ds.n_classes,
        split,
    })
}

/// Predictions plus the per-class neighbor-vote fractions used as ROC
/// scores (`[Q, K]`, rows sum to 1).
pub struct KnnOutput {
    pub pred: Vec<usize>,
    pub scores: Tensor,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact k-nearest-neighbor classification with majority vote. Vote ties are
/// broken by the smallest summed distance among the tied classes, then by
/// the lowest class index. Only labelled rows of `train` participate.
pub fn knn_classify(train: &EmbeddingSet, query: &Tensor, k: usize) -> Result<Vec<usize>> {
    Ok(knn_with_scores(train, query, k)?.pred)
}

/// [`knn_classify`] plus vote-fraction scores for ROC construction.
pub fn knn_with_scores(train: &EmbeddingSet, query: &Tensor, k: usize) -> Result<KnnOutput> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    if train.codes.ndim() != 2 || query.ndim() != 2 {
        return Err(Error::shape(
            "knn",
            format!(
                "codes must be [N, D] and queries [Q, D], got {:?} and {:?}",
                train.codes.shape(),
                query.shape()
            ),
        ));
    }
    if train.codes.shape()[1] != query.shape()[1] {
        return Err(Error::shape(
            "knn",
            format!(
                "code width {} does not match query width {}",
                train.codes.shape()[1],
                query.shape()[1]
            ),
        ));
    }

    let pool: Vec<(usize, usize)> = train
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|c| (i, c)))
        .collect();
    if pool.len() < k {
        return Err(Error::contract(format!(
            "kNN needs at least {k} labelled rows, the training split has {}",
            pool.len()
        )));
    }

    let kk = train.n_classes;
    let q = query.rows();
    let mut pred = Vec::with_capacity(q);
    let mut scores = vec![0.0; q * kk];
    let mut dists = vec![0.0f64; pool.len()];
    let mut taken = vec![false; pool.len()];

    for qi in 0..q {
        let qrow = query.row(qi);
        for (pi, &(row, _)) in pool.iter().enumerate() {
            dists[pi] = euclidean(qrow, train.codes.row(row));
            taken[pi] = false;
        }

        // k passes of linear selection keep the search independent of any
        // sort-based oracle used to test it.
        let mut votes = vec![0usize; kk];
        let mut class_dist = vec![0.0f64; kk];
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for pi in 0..pool.len() {
                if taken[pi] {
                    continue;
                }
                match best {
                    None => best = Some(pi),
                    Some(b) if dists[pi] < dists[b] => best = Some(pi),
                    _ => {}
                }
            }
            let b = best.expect("pool holds at least k rows");
            taken[b] = true;
            votes[pool[b].1] += 1;
            class_dist[pool[b].1] += dists[b];
        }

        let top = *votes.iter().max().expect("at least one class");
        let winner = (0..kk)
            .filter(|&c| votes[c] == top)
            .min_by(|&a, &b| class_dist[a].total_cmp(&class_dist[b]).then(a.cmp(&b)))
            .expect("some class holds the top vote");
        pred.push(winner);
        for c in 0..kk {
            scores[qi * kk + c] = votes[c] as f64 / k as f64;
        }
    }

    Ok(KnnOutput {
        pred,
        scores: Tensor::new(vec![q, kk], scores)?,
    })
}

/// Entry `(i, j)` counts samples of true class `i` predicted as `j`.
/// Empty inputs give the zero matrix.
pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::contract(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::contract(format!(
                "class pair ({t}, {p}) outside [0, {n_classes})"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Trace over total; 0 for an empty matrix.
pub fn accuracy(confusion: &[Vec<u64>]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let diag: u64 = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    diag as f64 / total as f64
}

fn auc_midrank(scores: &[f64], is_pos: &[bool]) -> Option<f64> {
    let n_pos = is_pos.iter().filter(|&&p| p).count();
    let n_neg = is_pos.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[i..=j] {
            if is_pos[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUC per class from `[N, K]` scores, by the rank-statistic
/// formulation with midrank ties. Classes missing a positive or a negative
/// get `None` rather than an error.
pub fn roc_auc(scores: &Tensor, y_true: &[usize]) -> Result<Vec<Option<f64>>> {
    let (n, kk) = check_scores(scores, y_true)?;
    let mut out = Vec::with_capacity(kk);
    for c in 0..kk {
        let col: Vec<f64> = (0..n).map(|i| scores.get2(i, c)).collect();
        let is_pos: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        out.push(auc_midrank(&col, &is_pos));
    }
    Ok(out)
}

fn check_scores(scores: &Tensor, y_true: &[usize]) -> Result<(usize, usize)> {
    if scores.ndim() != 2 {
        return Err(Error::shape(
            "roc",
            format!("scores must be [N, K], got {:?}", scores.shape()),
        ));
    }
    let (n, kk) = (scores.shape()[0], scores.shape()[1]);
    if y_true.len() != n {
        return Err(Error::contract(format!(
            "{} scores rows but {} labels",
            n,
            y_true.len()
        )));
    }
    if let Some(&bad) = y_true.iter().find(|&&t| t >= kk) {
        return Err(Error::contract(format!("label {bad} outside [0, {kk})")));
    }
    Ok((n, kk))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// The one-vs-rest ROC curve for `class`: one point per distinct score
/// (classifying `score >= threshold` as positive) plus the all-negative
/// anchor at threshold infinity. Empty when the class lacks a positive or a
/// negative, matching the undefined-AUC convention.
pub fn roc_points(scores: &Tensor, y_true: &[usize], class: usize) -> Result<Vec<RocPoint>> {
    let (n, kk) = check_scores(scores, y_true)?;
    if class >= kk {
        return Err(Error::contract(format!("class {class} outside [0, {kk})")));
    }
    let n_pos = y_true.iter().filter(|&&t| t == class).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(Vec::new());
    }

    let mut rows: Vec<(f64, bool)> = (0..n)
        .map(|i| (scores.get2(i, class), y_true[i] == class))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        while i < rows.len() && rows[i].0 == t {
            if rows[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: t,
        });
    }
    Ok(points)
}

/// Writes `class,fpr,tpr,threshold` rows for every class with a defined
/// curve.
pub fn write_roc_csv(path: &Path, scores: &Tensor, y_true: &[usize]) -> Result<()> {
    let kk = check_scores(scores, y_true)?.1;
    let mut out = String::from("class,fpr,tpr,threshold\n");
    for c in 0..kk {
        for p in roc_points(scores, y_true, c)? {
            out.push_str(&format!("{c},{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
    }
    std::fs::write(path, out).io_ctx(format!("writing {}", path.display()))
}

/// Writes `label,dim0..dimD-1` rows; unlabelled rows carry label `-1`.
/// Re-exporting the same set produces a byte-identical file.
pub fn export_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let d = set.codes.row_len();
    let mut out = String::from("label");
    for j in 0..d {
        out.push_str(&format!(",dim{j}"));
    }
    out.push('\n');
    for (i, label) in set.labels.iter().enumerate() {
        match label {
            Some(c) => out.push_str(&c.to_string()),
            None => out.push_str("-1"),
        }
        for v in set.codes.row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).io_ctx(format!("writing {}", path.display()))
}

/// Metrics of one finished run. Serializes to JSON with a stable field
/// order and no volatile fields, so identical runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub ablation: String,
    pub gamma: f64,
    pub seed: u64,
    pub epochs: usize,
    pub n_train: usize,
    pub n_labelled: usize,
    pub n_test: usize,
    pub accuracy: f64,
    /// Per-class one-vs-rest AUC; `null` where undefined.
    pub auc: Vec<Option<f64>>,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "dataset,ablation,rate,seed,accuracy,mean_auc";

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<MetricsReport> {
        Ok(serde_json::from_str(text)?)
    }

    /// Labelled fraction as a percentage, the unit sweeps are indexed by.
    pub fn rate(&self) -> u32 {
        (self.gamma * 100.0).round() as u32
    }

    /// Mean AUC over the classes where it is defined.
    pub fn mean_auc(&self) -> Option<f64> {
        let defined: Vec<f64> = self.auc.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }

    /// One flat row for sweep aggregation, matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let auc = self.mean_auc().map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.dataset,
            self.ablation,
            self.rate(),
            self.seed,
            self.accuracy,
            auc
        )
    }
}

/// Everything [`evaluate`] computes: raw embeddings for export plus the
/// classification metrics over the labelled test rows.
pub struct Evaluation {
    pub train_embeddings: EmbeddingSet,
    pub test_embeddings: EmbeddingSet,
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    /// Vote-fraction scores `[Q, K]` for the labelled test rows.
    pub scores: Tensor,
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub auc: Vec<Option<f64>>,
}

/// Runs the full metric pipeline: embed both splits, standardize codes with
/// train-split statistics, classify the labelled test rows with kNN, and
/// derive accuracy, confusion, and per-class AUC.
pub fn evaluate(
    vae: &VaeppNet,
    store: &ParamStore,
    ablation: Ablation,
    train: &Dataset,
    test: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Evaluation> {
    let train_embeddings = embed(vae, store, train, ablation, seed, Split::Train)?;
    let test_embeddings = embed(vae, store, test, ablation, seed, Split::Test)?;

    let stats = zscore_fit(&train_embeddings.codes)?;
    let train_norm = EmbeddingSet {
        codes: zscore_apply(&train_embeddings.codes, &stats)?,
        labels: train_embeddings.labels.clone(),
        n_classes: train_embeddings.n_classes,
        split: Split::Train,
    };
    let test_codes = zscore_apply(&test_embeddings.codes, &stats)?;

    let idx = test.labelled_indices();
    let y_true: Vec<usize> = idx.iter().map(|&i| test.labels[i].expect("labelled")).collect();
    let query = test_codes.take_rows(&idx)?;

    let knn = knn_with_scores(&train_norm, &query, k)?;
    let confusion = confusion_matrix(&y_true, &knn.pred, test.n_classes)?;
    let acc = accuracy(&confusion);
    let auc = roc_auc(&knn.scores, &y_true)?;

    Ok(Evaluation {
        train_embeddings,
        test_embeddings,
        y_true,
        y_pred: knn.pred,
        scores: knn.scores,
        confusion,
        accuracy: acc,
        auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::two_gaussians;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn set(codes: Vec<Vec<f64>>, labels: Vec<Option<usize>>, n_classes: usize) -> EmbeddingSet {
        EmbeddingSet {
            codes: Tensor::from_rows(&codes).unwrap(),
            labels,
            n_classes,
            split: Split::Train,
        }
    }

    fn query(rows: Vec<Vec<f64>>) -> Tensor {
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn exact_match_wins_at_k1() {
        let train = set(
            vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 0.0]],
            vec![Some(0), Some(1), Some(2)],
            3,
        );
        let pred = knn_classify(&train, &query(vec![vec![5.0, 5.0]]), 1).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn majority_vote_at_k3() {
        // Neighbors of the origin: two of class 1 (d = 1, 2) and one of
        // class 0 (d = 3).
        let train = set(
            vec![vec![1.0], vec![-2.0], vec![3.0], vec![50.0]],
            vec![Some(1), Some(1), Some(0), Some(0)],
            2,
        );
        let pred = knn_classify(&train, &query(vec![vec![0.0]]), 3).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn vote_tie_prefers_smaller_summed_distance() {
        // k = 2: one neighbor per class, class 1 closer.
        let train = set(
            vec![vec![0.5], vec![-2.0]],
            vec![Some(1), Some(0)],
            2,
        );
        let pred = knn_classify(&train, &query(vec![vec![0.0]]), 2).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn full_tie_prefers_lowest_class() {
        // Equal vote, equal summed distance: symmetric neighbors.
        let train = set(
            vec![vec![1.0], vec![-1.0]],
            vec![Some(1), Some(0)],
            2,
        );
        let pred = knn_classify(&train, &query(vec![vec![0.0]]), 2).unwrap();
        assert_eq!(pred, vec![0]);
    }

    #[test]
    fn too_few_labelled_rows_is_a_contract_error() {
        let train = set(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![Some(0), None, None],
            2,
        );
        let err = knn_classify(&train, &query(vec![vec![0.0]]), 3).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
    }

    #[test]
    fn vote_fractions_are_thirds_and_sum_to_one() {
        let train = set(
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![Some(0), Some(0), Some(1), Some(1)],
            2,
        );
        let out = knn_with_scores(&train, &query(vec![vec![0.0], vec![5.0]]), 3).unwrap();
        for qi in 0..2 {
            let mut sum = 0.0;
            for c in 0..2 {
                let s = out.scores.get2(qi, c);
                assert!(
                    [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].iter().any(|&v| (s - v).abs() < 1e-15),
                    "unexpected vote fraction {s}"
                );
                sum += s;
            }
            assert!((sum - 1.0).abs() < 1e-15);
        }
        assert_eq!(out.pred, vec![0, 1]);
    }

    /// Independent oracle: full distance sort instead of repeated selection.
    fn knn_oracle(train: &EmbeddingSet, query: &Tensor, k: usize) -> Vec<usize> {
        let mut pred = Vec::new();
        for qi in 0..query.rows() {
            let mut rows: Vec<(f64, usize, usize)> = train
                .labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.map(|c| (euclidean(query.row(qi), train.codes.row(i)), i, c)))
                .collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            rows.truncate(k);
            let kk = train.n_classes;
            let mut votes = vec![0usize; kk];
            let mut dist = vec![0.0f64; kk];
            for &(d, _, c) in &rows {
                votes[c] += 1;
                dist[c] += d;
            }
            let top = *votes.iter().max().unwrap();
            let mut winner = usize::MAX;
            for c in 0..kk {
                if votes[c] != top {
                    continue;
                }
                if winner == usize::MAX
                    || dist[c] < dist[winner]
                    || (dist[c] == dist[winner] && c < winner)
                {
                    winner = c;
                }
            }
            pred.push(winner);
        }
        pred
    }

    #[test]
    fn knn_matches_sort_oracle_on_random_instances() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let n = rng.random_range(5..40);
            let d = rng.random_range(1..5);
            let kk = rng.random_range(2..5);
            let codes: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| (rng.random_range(0..7) as f64) / 2.0).collect())
                .collect();
            let labels: Vec<Option<usize>> = (0..n).map(|_| Some(rng.random_range(0..kk))).collect();
            let train = set(codes, labels, kk);
            let q: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..d).map(|_| (rng.random_range(0..7) as f64) / 2.0).collect())
                .collect();
            let q = query(q);
            let k = rng.random_range(1..=n.min(5));
            assert_eq!(knn_classify(&train, &q, k).unwrap(), knn_oracle(&train, &q, k));
        }
    }

    #[test]
    fn confusion_hand_count() {
        let m = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(m, vec![vec![1, 1], vec![0, 1]]);
        assert!((accuracy(&m) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_degenerate_and_invalid_cases() {
        assert_eq!(confusion_matrix(&[], &[], 2).unwrap(), vec![vec![0, 0]; 2]);
        assert_eq!(accuracy(&confusion_matrix(&[], &[], 2).unwrap()), 0.0);
        assert!(matches!(
            confusion_matrix(&[0, 2], &[0, 0], 2).unwrap_err(),
            Error::Contract(_)
        ));
        assert!(matches!(
            confusion_matrix(&[0], &[], 2).unwrap_err(),
            Error::Contract(_)
        ));
    }

    #[test]
    fn perfect_prediction_gives_diagonal_and_unit_accuracy() {
        let y = [0, 1, 2, 1, 0];
        let m = confusion_matrix(&y, &y, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i][j] == 0, i != j || m[i][j] == 0);
                if i != j {
                    assert_eq!(m[i][j], 0);
                }
            }
        }
        assert_eq!(accuracy(&m), 1.0);
    }

    fn binary_scores(s: &[f64]) -> Tensor {
        // Column 1 carries the positive-class score, column 0 its mirror.
        let rows: Vec<Vec<f64>> = s.iter().map(|&v| vec![1.0 - v, v]).collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn auc_hand_values() {
        let s = binary_scores(&[0.9, 0.8, 0.4, 0.3]);
        let auc = roc_auc(&s, &[1, 1, 0, 0]).unwrap();
        assert_eq!(auc[1], Some(1.0));
        assert_eq!(auc[0], Some(1.0)); // mirrored column separates equally

        // One discordant positive-negative pair out of four.
        let s = binary_scores(&[0.9, 0.4, 0.8, 0.3]);
        let auc = roc_auc(&s, &[1, 1, 0, 0]).unwrap();
        assert!((auc[1].unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn identical_scores_give_half_auc() {
        let s = binary_scores(&[0.5; 6]);
        let auc = roc_auc(&s, &[1, 0, 1, 0, 1, 0]).unwrap();
        assert_eq!(auc[1], Some(0.5));
    }

    #[test]
    fn single_class_auc_is_undefined() {
        let s = binary_scores(&[0.1, 0.2, 0.3]);
        let auc = roc_auc(&s, &[1, 1, 1]).unwrap();
        assert_eq!(auc, vec![None, None]);
    }

    /// Brute-force P(score_pos > score_neg) + half ties.
    fn auc_pairwise(scores: &[f64], y: &[usize], class: usize) -> Option<f64> {
        let pos: Vec<f64> = scores
            .iter()
            .zip(y)
            .filter(|(_, &t)| t == class)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(y)
            .filter(|(_, &t)| t != class)
            .map(|(&s, _)| s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut acc = 0.0;
        for &p in &pos {
            for &n in &neg {
                acc += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        Some(acc / (pos.len() * neg.len()) as f64)
    }

    #[test]
    fn midrank_auc_matches_pairwise_oracle() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..30 {
            let n = rng.random_range(4..50);
            // Coarse grid forces plenty of ties.
            let col: Vec<f64> = (0..n).map(|_| (rng.random_range(0..4) as f64) / 3.0).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let scores = binary_scores(&col);
            let auc = roc_auc(&scores, &y).unwrap();
            for class in 0..2 {
                let per_class: Vec<f64> =
                    (0..n).map(|i| scores.get2(i, class)).collect();
                let oracle = auc_pairwise(&per_class, &y, class);
                match (auc[class], oracle) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                    (a, b) => assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn roc_curve_is_monotone_and_anchored() {
        let s = binary_scores(&[0.9, 0.7, 0.7, 0.4, 0.2, 0.1]);
        let pts = roc_points(&s, &[1, 1, 0, 1, 0, 0], 1).unwrap();
        assert_eq!(pts[0], RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY });
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in pts.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            assert!(w[1].threshold < w[0].threshold);
        }
        // Five distinct scores plus the anchor.
        assert_eq!(pts.len(), 6);
    }

    #[test]
    fn roc_csv_lists_defined_classes_only() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("roc.csv");
        // Class 1 never occurs, so only class 0's curve is defined... but
        // with two columns class 0 still has positives and negatives.
        let s = binary_scores(&[0.9, 0.1, 0.4]);
        write_roc_csv(&path, &s, &[0, 0, 0]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("class,fpr,tpr,threshold"));
        assert_eq!(lines.count(), 0, "single-class input defines no curve");

        write_roc_csv(&path, &s, &[0, 1, 0]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().count() > 1);
        assert!(text.lines().skip(1).all(|l| l.starts_with("0,") || l.starts_with("1,")));
    }

    #[test]
    fn export_writes_sentinel_labels_and_reproduces_bytes() {
        let e = set(
            vec![vec![1.0, -2.5], vec![0.25, 0.0], vec![3.0, 4.0]],
            vec![Some(1), None, Some(0)],
            2,
        );
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a.csv");
        let b = tmp.path().join("b.csv");
        export_embeddings(&e, &a).unwrap();
        export_embeddings(&e, &b).unwrap();
        let text = std::fs::read_to_string(&a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "label,dim0,dim1");
        assert_eq!(lines[1], "1,1,-2.5");
        assert_eq!(lines[2], "-1,0.25,0");
        assert_eq!(lines[3], "0,3,4");
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn embedding_is_deterministic_for_every_source() {
        let ds = two_gaussians(30, 4.0, 0.6, 5).unwrap();
        for ablation in crate::config::Ablation::ALL {
            let split = ablation.split_latent();
            let mut init = StreamRng::new(3).stream(StreamKind::Init, 0);
            let mut store = ParamStore::default();
            let vae = VaeppNet::new(
                &mut store,
                &mut init,
                crate::vaepp::Arch::Vector { features: 2 },
                4,
                split,
            )
            .unwrap();
            let a = embed(&vae, &store, &ds, ablation, 9, Split::Test).unwrap();
            let b = embed(&vae, &store, &ds, ablation, 9, Split::Test).unwrap();
            assert_eq!(a.codes.data(), b.codes.data(), "{ablation:?}");
            assert_eq!(a.codes.shape(), &[30, 4]);
        }
    }

    #[test]
    fn posterior_sources_differ_as_expected() {
        let ds = two_gaussians(12, 4.0, 0.6, 6).unwrap();
        let mut init = StreamRng::new(4).stream(StreamKind::Init, 0);
        let mut store = ParamStore::default();
        let vae = VaeppNet::new(
            &mut store,
            &mut init,
            crate::vaepp::Arch::Vector { features: 2 },
            4,
            false,
        )
        .unwrap();
        let mu = embed(&vae, &store, &ds, Ablation::VaeMu, 9, Split::Test).unwrap();
        let zs = embed(&vae, &store, &ds, Ablation::Vae, 9, Split::Test).unwrap();
        assert_ne!(mu.codes.data(), zs.codes.data());
        // Train and test splits draw from distinct noise streams.
        let zs_train = embed(&vae, &store, &ds, Ablation::Vae, 9, Split::Train).unwrap();
        assert_ne!(zs.codes.data(), zs_train.codes.data());
    }

    #[test]
    fn evaluate_ties_the_report_identities_together() {
        let train = two_gaussians(60, 6.0, 0.5, 7).unwrap();
        let test = two_gaussians(40, 6.0, 0.5, 8).unwrap();
        let (masked, _) = crate::data::apply_supervision_mask(&train, 0.5, 7, true).unwrap();

        let mut init = StreamRng::new(11).stream(StreamKind::Init, 0);
        let mut store = ParamStore::default();
        let vae = VaeppNet::new(
            &mut store,
            &mut init,
            crate::vaepp::Arch::Vector { features: 2 },
            4,
            true,
        )
        .unwrap();

        let ev = evaluate(&vae, &store, Ablation::Avae, &masked, &test, 3, 7).unwrap();
        let total: u64 = ev.confusion.iter().flatten().sum();
        assert_eq!(total as usize, test.labelled_count());
        let diag: u64 = ev.confusion.iter().enumerate().map(|(i, r)| r[i]).sum();
        assert_eq!(ev.accuracy, diag as f64 / total as f64);
        assert_eq!(ev.auc.len(), 2);
        assert_eq!(ev.y_true.len(), ev.y_pred.len());
        assert_eq!(ev.scores.shape(), &[40, 2]);
        // Untrained but well-separated data: far better than chance.
        assert!(ev.accuracy > 0.6, "accuracy {}", ev.accuracy);
    }

    #[test]
    fn metrics_report_round_trips_and_flattens() {
        let report = MetricsReport {
            dataset: "toy".into(),
            ablation: "avae".into(),
            gamma: 0.2,
            seed: 3,
            epochs: 50,
            n_train: 100,
            n_labelled: 20,
            n_test: 40,
            accuracy: 0.925,
            auc: vec![Some(0.99), None],
            confusion: vec![vec![19, 1], vec![2, 18]],
        };
        let json = report.to_json().unwrap();
        assert_eq!(MetricsReport::from_json(&json).unwrap(), report);
        assert_eq!(report.rate(), 20);
        assert_eq!(report.mean_auc(), Some(0.99));
        assert_eq!(report.csv_row(), "toy,avae,20,3,0.925,0.99");
        assert!(!json.contains("time"), "reports must stay timestamp-free");
    }
}
