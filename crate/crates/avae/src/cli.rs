//! The command-line surface: `prepare`, `train`, `eval`, `sweep`, and
//! `export-embeddings`.
//!
//! Every run writes into `<out>/<dataset>/<ablation>/<rate>/<seed>/` and
//! leaves its fully-resolved configuration there, so any table cell can be
//! reproduced from the run directory alone. `train` on a directory that
//! already holds a checkpoint resumes it (a no-op once the epoch budget is
//! reached), which keeps repeated invocations idempotent.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, RunConfig};
use crate::data::csvio::read_csv;
use crate::data::idx::{read_idx, read_idx_labels};
use crate::data::window::window_stride;
use crate::data::{
    apply_supervision_mask, read_dataset, split_train_test, window_series, write_dataset,
    zscore_apply, zscore_fit, Dataset,
};
use crate::error::IoContext;
use crate::evaluator::{embed, evaluate, export_embeddings, write_roc_csv, MetricsReport, Split};
use crate::trainer;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROC_FILE: &str = "roc.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.txt";

#[derive(Parser)]
#[command(
    name = "avae",
    version,
    about = "Semi-supervised representation learning with adversarial variational embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, window, split, and cache a raw dataset.
    Prepare(PrepareArgs),
    /// Train one run from a prepared dataset and report test metrics.
    Train(TrainArgs),
    /// Recompute metrics for an existing run directory.
    Eval(EvalArgs),
    /// Train the supervision-rate x ablation x seed grid and aggregate it.
    Sweep(SweepArgs),
    /// Write the latent codes of a finished run as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw input: a CSV file, or a directory holding IDX image/label files.
    #[arg(long)]
    data: PathBuf,
    /// Input format.
    #[arg(long, value_parser = ["csv", "idx"])]
    format: String,
    /// Sliding-window length for CSV time series; 1 keeps rows as samples.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Fractional overlap between consecutive windows, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    /// Fraction of samples assigned to the training split.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Shuffle seed for the split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory to write the prepared dataset into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (`key = value` lines, `#` comments).
    #[arg(long)]
    config: PathBuf,
    /// Field overrides, e.g. `--set ablation=avae gamma=0.6`.
    #[arg(long = "set", num_args = 1.., value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory holding the checkpoint.
    #[arg(long)]
    run: PathBuf,
    /// Prepared dataset directory, if it moved since training.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base configuration; each grid cell overrides gamma, ablation, seed.
    #[arg(long)]
    config: PathBuf,
    /// Field overrides applied to the base configuration.
    #[arg(long = "set", num_args = 1.., value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Supervision rates in percent.
    #[arg(long, default_value = "20,40,60,80,100")]
    rates: String,
    /// Comma-separated ablation names.
    #[arg(long, default_value = "vae_mu,vae,vaepp,avae")]
    ablations: String,
    /// Number of seeds per cell, counted up from the base seed.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Parallel worker slots.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ExportArgs {
    /// Run directory holding the checkpoint.
    #[arg(long)]
    run: PathBuf,
    /// Prepared dataset directory, if it moved since training.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Which split(s) to export.
    #[arg(long, default_value = "both", value_parser = ["train", "test", "both"])]
    split: String,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses and dispatches; used by the binary.
pub fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse_from(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land here too; let clap pick stream and code.
            let _ = e.print();
            return std::process::ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}

/// Parses the given argument vector and runs it to completion. The first
/// element is the program name, as in `std::env::args`.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    dispatch(&cli.command)
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportEmbeddings(a) => cmd_export(a),
    }
}

/// What `prepare` records next to the cached splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub format: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
    /// Per-sample feature shape, e.g. `[20]` or `[28, 28, 1]`.
    pub sample_shape: Vec<usize>,
    pub window: Option<usize>,
    pub overlap: Option<f64>,
    pub stride: Option<usize>,
    /// `None` when the source shipped its own test split.
    pub train_frac: Option<f64>,
    pub seed: u64,
    /// Train-split normalization statistics; absent for image data, which
    /// stays in pixel space.
    pub norm_mean: Option<Vec<f64>>,
    pub norm_std: Option<Vec<f64>>,
}

fn cmd_prepare(a: &PrepareArgs) -> Result<()> {
    let (train, test, manifest) = match a.format.as_str() {
        "csv" => prepare_csv(a)?,
        "idx" => prepare_idx(a)?,
        other => return Err(Error::Config(format!("unknown format {other:?}"))),
    };
    std::fs::create_dir_all(&a.out).io_ctx(format!("creating {}", a.out.display()))?;
    write_dataset(&a.out, "train", &train)?;
    write_dataset(&a.out, "test", &test)?;
    let json = serde_json::to_string_pretty(&manifest)?;
    let path = a.out.join(MANIFEST_FILE);
    std::fs::write(&path, json + "\n").io_ctx(format!("writing {}", path.display()))?;
    println!(
        "prepared {}: {} train / {} test samples, {} classes, sample shape {:?}",
        a.out.display(),
        manifest.n_train,
        manifest.n_test,
        manifest.n_classes,
        manifest.sample_shape
    );
    Ok(())
}

fn prepare_csv(a: &PrepareArgs) -> Result<(Dataset, Dataset, Manifest)> {
    let (series, labels, n_classes) = read_csv(&a.data)?;
    let (features, window_labels) = window_series(&series, &labels, a.window, a.overlap)?;
    let ds = Dataset::labelled(
        features,
        window_labels,
        n_classes,
        format!("csv:{}", a.data.display()),
    )?;
    let (train_raw, test_raw) = split_train_test(&ds, a.train_frac, a.seed)?;

    let stats = zscore_fit(&train_raw.features)?;
    let train = Dataset::new(
        zscore_apply(&train_raw.features, &stats)?,
        train_raw.labels.clone(),
        n_classes,
        train_raw.metadata.clone(),
    )?;
    let test = Dataset::new(
        zscore_apply(&test_raw.features, &stats)?,
        test_raw.labels.clone(),
        n_classes,
        test_raw.metadata.clone(),
    )?;

    let manifest = Manifest {
        source: a.data.display().to_string(),
        format: "csv".into(),
        n_train: train.len(),
        n_test: test.len(),
        n_classes,
        sample_shape: train.features.shape()[1..].to_vec(),
        window: Some(a.window),
        overlap: Some(a.overlap),
        stride: Some(window_stride(a.window, a.overlap)?),
        train_frac: Some(a.train_frac),
        seed: a.seed,
        norm_mean: Some(stats.mean.clone()),
        norm_std: Some(stats.std.clone()),
    };
    Ok((train, test, manifest))
}

/// Accepted IDX file names per role, tried in order.
const IDX_TRAIN_IMAGES: &[&str] = &["train-images.idx", "train-images-idx3-ubyte"];
const IDX_TRAIN_LABELS: &[&str] = &["train-labels.idx", "train-labels-idx1-ubyte"];
const IDX_TEST_IMAGES: &[&str] = &["test-images.idx", "t10k-images-idx3-ubyte"];
const IDX_TEST_LABELS: &[&str] = &["test-labels.idx", "t10k-labels-idx1-ubyte"];

fn find_idx(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.exists())
}

fn read_idx_pair(images: &Path, labels: &Path) -> Result<(crate::Tensor, Vec<usize>)> {
    let x = read_idx(images)?;
    let y = read_idx_labels(labels)?;
    if x.rows() != y.len() {
        return Err(Error::Format {
            path: labels.to_path_buf(),
            offset: 0,
            detail: format!("{} labels for {} images", y.len(), x.rows()),
        });
    }
    // Greyscale image stacks arrive as [N, H, W]; add the channel axis.
    let x = match x.ndim() {
        3 => {
            let s = x.shape().to_vec();
            x.reshaped(vec![s[0], s[1], s[2], 1])?
        }
        2 => x,
        _ => {
            return Err(Error::Format {
                path: images.to_path_buf(),
                offset: 0,
                detail: format!("expected [N, H, W] or [N, M] payload, got {:?}", x.shape()),
            })
        }
    };
    Ok((x, y))
}

fn prepare_idx(a: &PrepareArgs) -> Result<(Dataset, Dataset, Manifest)> {
    let dir = &a.data;
    let describe = |names: &[&str]| format!("{} (looked for {})", dir.display(), names.join(", "));
    let timg = find_idx(dir, IDX_TRAIN_IMAGES)
        .ok_or_else(|| Error::Config(format!("no training images in {}", describe(IDX_TRAIN_IMAGES))))?;
    let tlab = find_idx(dir, IDX_TRAIN_LABELS)
        .ok_or_else(|| Error::Config(format!("no training labels in {}", describe(IDX_TRAIN_LABELS))))?;
    let (train_x, train_y) = read_idx_pair(&timg, &tlab)?;

    let own_test = match (
        find_idx(dir, IDX_TEST_IMAGES),
        find_idx(dir, IDX_TEST_LABELS),
    ) {
        (Some(i), Some(l)) => Some(read_idx_pair(&i, &l)?),
        _ => None,
    };

    let max_label = |ys: &[usize]| ys.iter().max().map_or(0, |m| m + 1);
    let n_classes = match &own_test {
        Some((_, test_y)) => max_label(&train_y).max(max_label(test_y)),
        None => max_label(&train_y),
    };
    let meta = format!("idx:{}", dir.display());

    let (train, test, train_frac) = match own_test {
        Some((test_x, test_y)) => (
            Dataset::labelled(train_x, train_y, n_classes, meta.clone())?,
            Dataset::labelled(test_x, test_y, n_classes, meta)?,
            None,
        ),
        None => {
            let ds = Dataset::labelled(train_x, train_y, n_classes, meta)?;
            let (train, test) = split_train_test(&ds, a.train_frac, a.seed)?;
            (train, test, Some(a.train_frac))
        }
    };

    let manifest = Manifest {
        source: dir.display().to_string(),
        format: "idx".into(),
        n_train: train.len(),
        n_test: test.len(),
        n_classes,
        sample_shape: train.features.shape()[1..].to_vec(),
        window: None,
        overlap: None,
        stride: None,
        train_frac,
        seed: a.seed,
        norm_mean: None,
        norm_std: None,
    };
    Ok((train, test, manifest))
}

/// Reads a config file and applies `KEY=VALUE` overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).io_ctx(format!("reading {}", path.display()))?;
    let mut cfg = RunConfig::parse_str(&text)?;
    for pair in overrides {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {pair:?} is not of the form KEY=VALUE"))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.set)?;
    let report = run_one(&cfg)?;
    println!(
        "{} accuracy {:.4} ({} test samples) -> {}",
        report.ablation,
        report.accuracy,
        report.n_test,
        cfg.run_dir().display()
    );
    Ok(())
}

/// Trains (or resumes) one configured run, evaluates it on the test split,
/// and leaves checkpoint, trace, resolved config, metrics, and ROC points in
/// the run directory.
pub fn run_one(cfg: &RunConfig) -> Result<MetricsReport> {
    let data_dir = PathBuf::from(&cfg.data);
    let train_set = read_dataset(&data_dir, "train")?;
    let test_set = read_dataset(&data_dir, "test")?;

    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir).io_ctx(format!("creating {}", run_dir.display()))?;
    let outcome = if run_dir.join(trainer::CHECKPOINT_META).exists() {
        trainer::resume(cfg, &train_set, &run_dir)?
    } else {
        trainer::train(cfg, &train_set, Some(&run_dir))?
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let resolved_path = run_dir.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&resolved_path, outcome.config.to_text())
        .io_ctx(format!("writing {}", resolved_path.display()))?;

    let ev = evaluate(
        &outcome.vae,
        &outcome.store,
        cfg.ablation,
        &outcome.masked,
        &test_set,
        cfg.knn_k,
        cfg.seed,
    )?;
    let report = MetricsReport {
        dataset: cfg.dataset_name(),
        ablation: cfg.ablation.as_str().into(),
        gamma: cfg.gamma,
        seed: cfg.seed,
        epochs: outcome.epochs_done,
        n_train: train_set.len(),
        n_labelled: outcome.masked.labelled_count(),
        n_test: test_set.len(),
        accuracy: ev.accuracy,
        auc: ev.auc.clone(),
        confusion: ev.confusion.clone(),
    };
    let metrics_path = run_dir.join(METRICS_FILE);
    std::fs::write(&metrics_path, report.to_json()?)
        .io_ctx(format!("writing {}", metrics_path.display()))?;
    write_roc_csv(&run_dir.join(ROC_FILE), &ev.scores, &ev.y_true)?;
    Ok(report)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let report = eval_run(&a.run, a.data.as_deref())?;
    println!(
        "{} accuracy {:.4} ({} test samples)",
        report.ablation, report.accuracy, report.n_test
    );
    Ok(())
}

/// Recomputes metrics from a run directory's checkpoint and rewrites its
/// metrics and ROC files. Training state is untouched.
pub fn eval_run(run_dir: &Path, data_override: Option<&Path>) -> Result<MetricsReport> {
    let cp = trainer::load_checkpoint(run_dir)?;
    let mut cfg = cp.config()?;
    if let Some(dir) = data_override {
        cfg.data = dir.display().to_string();
    }
    let data_dir = PathBuf::from(&cfg.data);
    let train_set = read_dataset(&data_dir, "train")?;
    let test_set = read_dataset(&data_dir, "test")?;

    let (resolved, store, vae, _disc) = trainer::restore_for_eval(run_dir, &train_set)?;
    let (masked, _) = apply_supervision_mask(&train_set, resolved.gamma, resolved.seed, true)?;
    let ev = evaluate(
        &vae,
        &store,
        resolved.ablation,
        &masked,
        &test_set,
        resolved.knn_k,
        resolved.seed,
    )?;
    let report = MetricsReport {
        dataset: resolved.dataset_name(),
        ablation: resolved.ablation.as_str().into(),
        gamma: resolved.gamma,
        seed: resolved.seed,
        epochs: cp.epochs_done()?,
        n_train: train_set.len(),
        n_labelled: masked.labelled_count(),
        n_test: test_set.len(),
        accuracy: ev.accuracy,
        auc: ev.auc.clone(),
        confusion: ev.confusion.clone(),
    };
    let metrics_path = run_dir.join(METRICS_FILE);
    std::fs::write(&metrics_path, report.to_json()?)
        .io_ctx(format!("writing {}", metrics_path.display()))?;
    write_roc_csv(&run_dir.join(ROC_FILE), &ev.scores, &ev.y_true)?;
    Ok(report)
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let cp = trainer::load_checkpoint(&a.run)?;
    let mut cfg = cp.config()?;
    if let Some(dir) = &a.data {
        cfg.data = dir.display().to_string();
    }
    let data_dir = PathBuf::from(&cfg.data);
    let train_set = read_dataset(&data_dir, "train")?;
    let (resolved, store, vae, _disc) = trainer::restore_for_eval(&a.run, &train_set)?;

    let out_dir = a.out.clone().unwrap_or_else(|| a.run.clone());
    std::fs::create_dir_all(&out_dir).io_ctx(format!("creating {}", out_dir.display()))?;

    if a.split == "train" || a.split == "both" {
        // Train rows keep only the labels training saw; hidden ones export
        // as the -1 sentinel.
        let (masked, _) = apply_supervision_mask(&train_set, resolved.gamma, resolved.seed, true)?;
        let set = embed(&vae, &store, &masked, resolved.ablation, resolved.seed, Split::Train)?;
        let path = out_dir.join("embeddings-train.csv");
        export_embeddings(&set, &path)?;
        println!("wrote {}", path.display());
    }
    if a.split == "test" || a.split == "both" {
        let test_set = read_dataset(&data_dir, "test")?;
        let set = embed(&vae, &store, &test_set, resolved.ablation, resolved.seed, Split::Test)?;
        let path = out_dir.join("embeddings-test.csv");
        export_embeddings(&set, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_rates(text: &str) -> Result<Vec<u32>> {
    let mut rates = Vec::new();
    for part in text.split(',') {
        let rate: u32 = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("rate {part:?} is not an integer percent")))?;
        if !(1..=100).contains(&rate) {
            return Err(Error::Config(format!("rate {rate} outside [1, 100]")));
        }
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err(Error::Config("no rates given".into()));
    }
    Ok(rates)
}

fn parse_ablations(text: &str) -> Result<Vec<Ablation>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        out.push(part.trim().parse()?);
    }
    if out.is_empty() {
        return Err(Error::Config("no ablations given".into()));
    }
    Ok(out)
}

/// One sweep cell: the derived config plus its grid coordinates.
struct GridRun {
    cfg: RunConfig,
    label: String,
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let base = load_config(&a.config, &a.set)?;
    let rates = parse_rates(&a.rates)?;
    let ablations = parse_ablations(&a.ablations)?;
    if a.seeds == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }

    let mut grid = Vec::new();
    for &rate in &rates {
        for &ablation in &ablations {
            for s in 0..a.seeds {
                let mut cfg = base.clone();
                cfg.gamma = rate as f64 / 100.0;
                cfg.ablation = ablation;
                cfg.seed = base.seed + s;
                let label = format!("{}/{}/{}", ablation.as_str(), rate, cfg.seed);
                grid.push(GridRun { cfg, label });
            }
        }
    }

    let results = run_grid(&grid, a.jobs);

    let sweep_dir = PathBuf::from(base.out_root()).join(base.dataset_name());
    std::fs::create_dir_all(&sweep_dir).io_ctx(format!("creating {}", sweep_dir.display()))?;

    let mut runs_csv = String::from(MetricsReport::CSV_HEADER);
    runs_csv.push('\n');
    let mut failures = String::new();
    for (run, result) in grid.iter().zip(&results) {
        match result {
            Ok(report) => {
                runs_csv.push_str(&report.csv_row());
                runs_csv.push('\n');
            }
            Err(e) => {
                failures.push_str(&format!("{}: {e}\n", run.label));
            }
        }
    }
    let runs_path = sweep_dir.join(RUNS_FILE);
    std::fs::write(&runs_path, &runs_csv).io_ctx(format!("writing {}", runs_path.display()))?;

    let summary = summarize(&rates, &ablations, &grid, &results);
    let summary_path = sweep_dir.join(SUMMARY_FILE);
    std::fs::write(&summary_path, &summary)
        .io_ctx(format!("writing {}", summary_path.display()))?;

    let failures_path = sweep_dir.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path)
                .io_ctx(format!("removing {}", failures_path.display()))?;
        }
    } else {
        std::fs::write(&failures_path, &failures)
            .io_ctx(format!("writing {}", failures_path.display()))?;
    }

    print!("{summary}");
    println!("wrote {} and {}", runs_path.display(), summary_path.display());

    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        return Err(Error::Config(format!(
            "{failed} of {} runs failed; see {}",
            results.len(),
            failures_path.display()
        )));
    }
    Ok(())
}

/// Executes the grid with at most `jobs` runs in flight. Results come back
/// in grid order regardless of scheduling.
fn run_grid(grid: &[GridRun], jobs: usize) -> Vec<Result<MetricsReport>> {
    let jobs = jobs.max(1).min(grid.len().max(1));
    if jobs <= 1 {
        return grid.iter().map(|run| run_one(&run.cfg)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<MetricsReport>>>> =
        grid.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= grid.len() {
                    break;
                }
                let result = run_one(&grid[i].cfg);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("worker finished").expect("slot filled"))
        .collect()
}

/// The table-shaped aggregate: one row per rate, one column per ablation,
/// cells `mean±std` of accuracy in percent over the seeds that succeeded.
fn summarize(
    rates: &[u32],
    ablations: &[Ablation],
    grid: &[GridRun],
    results: &[Result<MetricsReport>],
) -> String {
    let mut out = String::from("rate");
    for ablation in ablations {
        out.push(',');
        out.push_str(ablation.as_str());
    }
    out.push('\n');
    for &rate in rates {
        out.push_str(&rate.to_string());
        for &ablation in ablations {
            let cell: Vec<f64> = grid
                .iter()
                .zip(results)
                .filter(|(run, r)| {
                    run.cfg.ablation == ablation && run.cfg.gamma == rate as f64 / 100.0 && r.is_ok()
                })
                .map(|(_, r)| r.as_ref().expect("filtered to ok").accuracy * 100.0)
                .collect();
            out.push(',');
            if !cell.is_empty() {
                let n = cell.len() as f64;
                let mean = cell.iter().sum::<f64>() / n;
                let var = cell.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
                out.push_str(&format!("{:.2}±{:.2}", mean, var.sqrt()));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::two_gaussians;

    fn write_gaussian_csv(path: &Path, n: usize, seed: u64) {
        let ds = two_gaussians(n, 6.0, 0.5, seed).unwrap();
        let mut text = String::new();
        for i in 0..ds.len() {
            let row = ds.features.row(i);
            text.push_str(&format!("{},{},{}\n", row[0], row[1], ds.labels[i].unwrap()));
        }
        std::fs::write(path, text).unwrap();
    }

    fn prepare_gaussians(dir: &Path, n: usize) -> PathBuf {
        let csv = dir.join("points.csv");
        write_gaussian_csv(&csv, n, 41);
        let prepared = dir.join("prepared");
        run([
            "avae",
            "prepare",
            "--data",
            csv.to_str().unwrap(),
            "--format",
            "csv",
            "--train-frac",
            "0.75",
            "--out",
            prepared.to_str().unwrap(),
        ])
        .unwrap();
        prepared
    }

    fn write_config(dir: &Path, prepared: &Path, extra: &str) -> PathBuf {
        let out = dir.join("runs");
        let text = format!(
            "data = {}\nout = {}\nepochs = 2\nbatch_size = 16\nlr_vae = 0.001\n\
             lr_disc = 0.001\nlatent_dim = 4\ndisc_hidden = 4\ngamma = 0.5\nseed = 3\n{extra}",
            prepared.display(),
            out.display()
        );
        let path = dir.join("run.cfg");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn override_pairs_apply_and_unknown_keys_list_valid_ones() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.cfg");
        std::fs::write(&path, "epochs = 5\n").unwrap();
        let cfg = load_config(&path, &["gamma=0.4".into(), "ablation=vaepp".into()]).unwrap();
        assert_eq!(cfg.gamma, 0.4);
        assert_eq!(cfg.ablation, Ablation::Vaepp);

        let err = load_config(&path, &["nope=1".into()]).unwrap_err();
        assert!(err.to_string().contains("lr_vae"), "{err}");
        let err = load_config(&path, &["gamma".into()]).unwrap_err();
        assert!(err.to_string().contains("KEY=VALUE"), "{err}");
    }

    #[test]
    fn prepare_csv_windows_splits_and_normalizes() {
        let tmp = tempfile::tempdir().unwrap();
        let csv = tmp.path().join("series.csv");
        // 30 timesteps, 2 channels, two label blocks.
        let mut text = String::new();
        for t in 0..30 {
            text.push_str(&format!("{},{},{}\n", t as f64, (t * t) as f64, (t >= 15) as u8));
        }
        std::fs::write(&csv, text).unwrap();

        let out = tmp.path().join("prep");
        run([
            "avae",
            "prepare",
            "--data",
            csv.to_str().unwrap(),
            "--format",
            "csv",
            "--window",
            "10",
            "--overlap",
            "0.5",
            "--train-frac",
            "0.8",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();

        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap())
                .unwrap();
        // stride 5 over 30 timesteps: (30 - 10) / 5 + 1 = 5 windows.
        assert_eq!(manifest.stride, Some(5));
        assert_eq!(manifest.n_train + manifest.n_test, 5);
        assert_eq!(manifest.n_train, 4);
        assert_eq!(manifest.sample_shape, vec![20]);
        assert_eq!(manifest.n_classes, 2);

        // Train features carry fitted statistics: each column is centered.
        let train = read_dataset(&out, "train").unwrap();
        let (n, m) = (train.len(), train.feature_dim());
        for j in 0..m {
            let mean: f64 = (0..n).map(|i| train.features.row(i)[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
        }
        let stats = manifest.norm_mean.unwrap();
        assert_eq!(stats.len(), 20);
    }

    #[test]
    fn prepare_idx_uses_shipped_test_split() {
        use crate::data::idx::{write_idx, write_idx_labels};
        let tmp = tempfile::tempdir().unwrap();
        let raw = tmp.path().join("raw");
        std::fs::create_dir_all(&raw).unwrap();

        let img = |n: usize, v: f64| {
            crate::Tensor::new(vec![n, 4, 4], vec![v; n * 16]).unwrap()
        };
        // Byte-exact pixel levels survive the IDX round trip bit for bit.
        let quarter = 51.0 / 255.0;
        write_idx(raw.join("train-images.idx"), &img(9, 102.0 / 255.0)).unwrap();
        write_idx_labels(raw.join("train-labels.idx"), &[0, 1, 2, 0, 1, 2, 0, 1, 2]).unwrap();
        write_idx(raw.join("test-images.idx"), &img(3, quarter)).unwrap();
        write_idx_labels(raw.join("test-labels.idx"), &[0, 1, 2]).unwrap();

        let out = tmp.path().join("prep");
        run([
            "avae",
            "prepare",
            "--data",
            raw.to_str().unwrap(),
            "--format",
            "idx",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();

        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(manifest.n_train, 9);
        assert_eq!(manifest.n_test, 3);
        assert_eq!(manifest.n_classes, 3);
        assert_eq!(manifest.sample_shape, vec![4, 4, 1]);
        assert_eq!(manifest.train_frac, None);
        assert_eq!(manifest.norm_mean, None);

        let test = read_dataset(&out, "test").unwrap();
        assert!(test.is_image());
        assert!(test.features.iter().all(|&v| v == quarter));
    }

    #[test]
    fn prepare_missing_input_fails() {
        let tmp = tempfile::tempdir().unwrap();
        let err = run([
            "avae",
            "prepare",
            "--data",
            tmp.path().join("absent.csv").to_str().unwrap(),
            "--format",
            "csv",
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Format { .. } | Error::Io { .. }), "{err}");
    }

    #[test]
    fn train_eval_export_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let prepared = prepare_gaussians(tmp.path(), 48);
        let cfg_path = write_config(tmp.path(), &prepared, "");

        run(["avae", "train", "--config", cfg_path.to_str().unwrap()]).unwrap();

        let run_dir = tmp.path().join("runs/prepared/avae/50/3");
        for file in [
            trainer::CHECKPOINT_BIN,
            trainer::CHECKPOINT_META,
            trainer::TRACE_FILE,
            METRICS_FILE,
            ROC_FILE,
            RESOLVED_CONFIG_FILE,
        ] {
            assert!(run_dir.join(file).exists(), "{file} missing");
        }
        let resolved =
            RunConfig::parse_str(&std::fs::read_to_string(run_dir.join(RESOLVED_CONFIG_FILE)).unwrap())
                .unwrap();
        assert_eq!(resolved.latent_dim, 4, "defaults must be materialized");

        let first = std::fs::read(run_dir.join(METRICS_FILE)).unwrap();
        let report = MetricsReport::from_json(std::str::from_utf8(&first).unwrap()).unwrap();
        assert_eq!(report.n_test, 12);
        assert_eq!(report.epochs, 2);

        // eval recomputes the same metrics from the checkpoint.
        run(["avae", "eval", "--run", run_dir.to_str().unwrap()]).unwrap();
        assert_eq!(std::fs::read(run_dir.join(METRICS_FILE)).unwrap(), first);

        // export writes both splits with the sentinel convention.
        run([
            "avae",
            "export-embeddings",
            "--run",
            run_dir.to_str().unwrap(),
        ])
        .unwrap();
        let train_csv =
            std::fs::read_to_string(run_dir.join("embeddings-train.csv")).unwrap();
        assert_eq!(train_csv.lines().count(), 36 + 1);
        assert!(train_csv.lines().skip(1).any(|l| l.starts_with("-1,")));
        let test_csv = std::fs::read_to_string(run_dir.join("embeddings-test.csv")).unwrap();
        assert_eq!(test_csv.lines().count(), 12 + 1);
        assert!(!test_csv.lines().skip(1).any(|l| l.starts_with("-1,")));
    }

    #[test]
    fn repeated_training_is_idempotent() {
        let tmp = tempfile::tempdir().unwrap();
        let prepared = prepare_gaussians(tmp.path(), 32);
        let cfg_path = write_config(tmp.path(), &prepared, "ablation = vaepp\n");

        run(["avae", "train", "--config", cfg_path.to_str().unwrap()]).unwrap();
        let run_dir = tmp.path().join("runs/prepared/vaepp/50/3");
        let first = std::fs::read(run_dir.join(METRICS_FILE)).unwrap();

        run(["avae", "train", "--config", cfg_path.to_str().unwrap()]).unwrap();
        assert_eq!(std::fs::read(run_dir.join(METRICS_FILE)).unwrap(), first);
        // Trace still holds exactly one header and two epochs.
        let trace = std::fs::read_to_string(run_dir.join(trainer::TRACE_FILE)).unwrap();
        assert_eq!(trace.lines().count(), 3);
    }

    #[test]
    fn sweep_writes_per_run_rows_and_table_summary() {
        let tmp = tempfile::tempdir().unwrap();
        let prepared = prepare_gaussians(tmp.path(), 32);
        let cfg_path = write_config(tmp.path(), &prepared, "epochs = 1\n");

        run([
            "avae",
            "sweep",
            "--config",
            cfg_path.to_str().unwrap(),
            "--rates",
            "50,100",
            "--ablations",
            "vae_mu,vaepp",
            "--seeds",
            "2",
        ])
        .unwrap();

        let sweep_dir = tmp.path().join("runs/prepared");
        let runs = std::fs::read_to_string(sweep_dir.join(RUNS_FILE)).unwrap();
        let lines: Vec<&str> = runs.trim().lines().collect();
        assert_eq!(lines[0], MetricsReport::CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 2 * 2, "one row per run");

        let summary = std::fs::read_to_string(sweep_dir.join(SUMMARY_FILE)).unwrap();
        let rows: Vec<&str> = summary.trim().lines().collect();
        assert_eq!(rows[0], "rate,vae_mu,vaepp");
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("50,"));
        assert!(rows[2].starts_with("100,"));
        assert!(rows[1].contains('±'));
        assert!(!sweep_dir.join(FAILURES_FILE).exists());
    }

    #[test]
    fn sweep_records_failures_and_keeps_going() {
        let tmp = tempfile::tempdir().unwrap();
        let prepared = prepare_gaussians(tmp.path(), 32);
        // latent_dim 3 cannot host the 2x2 discriminator kernel, so every
        // adversarial run fails while the plain ones succeed.
        let cfg_path = write_config(tmp.path(), &prepared, "epochs = 1\nlatent_dim = 3\n");

        let err = run([
            "avae",
            "sweep",
            "--config",
            cfg_path.to_str().unwrap(),
            "--rates",
            "50",
            "--ablations",
            "vaepp,avae",
            "--seeds",
            "1",
        ])
        .unwrap_err();
        assert!(err.to_string().contains("1 of 2 runs failed"), "{err}");

        let sweep_dir = tmp.path().join("runs/prepared");
        let runs = std::fs::read_to_string(sweep_dir.join(RUNS_FILE)).unwrap();
        assert_eq!(runs.trim().lines().count(), 2, "only the good run has a row");
        let failures = std::fs::read_to_string(sweep_dir.join(FAILURES_FILE)).unwrap();
        assert!(failures.contains("avae/50/3"), "{failures}");
    }

    #[test]
    fn rate_and_ablation_lists_reject_garbage() {
        assert!(parse_rates("20,40").is_ok());
        assert!(parse_rates("20,foo").is_err());
        assert!(parse_rates("0").is_err());
        assert!(parse_rates("120").is_err());
        assert_eq!(
            parse_ablations("vae_mu, avae").unwrap(),
            vec![Ablation::VaeMu, Ablation::Avae]
        );
        let err = parse_ablations("nope").unwrap_err();
        assert!(err.to_string().contains("vaepp"), "{err}");
    }

    #[test]
    fn unknown_cli_flags_are_rejected() {
        assert!(run(["avae", "train", "--config", "x", "--bogus"]).is_err());
        assert!(run(["avae", "nope"]).is_err());
    }
}
