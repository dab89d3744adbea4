//! The data-preparation pipeline on a sensor-style time series: CSV
//! ingestion, overlapping windows labelled by majority vote, a seeded
//! train/test split, z-scoring with train-set statistics only, and caching
//! the prepared tensors for later runs.
//!
//! Run with `cargo run --release --example prepare_sensor_csv`.

use std::io::Write;

use avae::data::csvio::read_csv;
use avae::data::window::{window_count, window_series, window_stride};
use avae::data::{read_dataset, split_train_test, write_dataset, zscore_apply, zscore_fit, Dataset};
use avae::Result;

fn main() -> Result<()> {
    // Two channels, 600 timesteps: a drifting sine labelled by whether the
    // regime is slow (class 0) or fast (class 1).
    let dir = tempfile::tempdir().expect("temp dir");
    let csv_path = dir.path().join("sensor.csv");
    {
        let mut f = std::fs::File::create(&csv_path).expect("create csv");
        writeln!(f, "ch_a,ch_b,label").expect("header");
        for t in 0..600 {
            let fast = (t / 150) % 2 == 1;
            let freq = if fast { 0.9 } else { 0.2 };
            let a = (t as f64 * freq).sin() + 0.01 * t as f64;
            let b = (t as f64 * freq * 0.5).cos() * 2.0;
            writeln!(f, "{a:.5},{b:.5},{}", fast as usize).expect("row");
        }
    }

    let (series, labels, n_classes) = read_csv(&csv_path)?;
    println!("read {:?} timesteps x {} channels, {} classes", series.rows(), series.row_len(), n_classes);

    let (window, overlap) = (32, 0.5);
    let stride = window_stride(window, overlap)?;
    let expect = window_count(series.rows(), window, stride);
    let (windows, window_labels) = window_series(&series, &labels, window, overlap)?;
    println!("windows: {} of width {} (stride {stride}, predicted {expect})", windows.rows(), windows.row_len());

    let ds = Dataset::labelled(windows, window_labels, n_classes, "sensor demo")?;
    let (train, test) = split_train_test(&ds, 0.75, 9)?;

    // Normalization statistics come from the training split alone; the test
    // split reuses them untouched.
    let stats = zscore_fit(&train.features)?;
    let train = Dataset::new(zscore_apply(&train.features, &stats)?, train.labels, n_classes, &*train.metadata)?;
    let test = Dataset::new(zscore_apply(&test.features, &stats)?, test.labels, n_classes, &*test.metadata)?;
    let col0: Vec<f64> = train.features.iter().step_by(train.feature_dim()).copied().collect();
    let mean0 = col0.iter().sum::<f64>() / col0.len() as f64;
    println!("train split {} rows, test split {} rows, first-column train mean {mean0:.2e}", train.len(), test.len());

    let cached = write_dataset(dir.path(), "train", &train)?;
    let reread = read_dataset(dir.path(), "train")?;
    assert_eq!(cached.features.data(), reread.features.data());
    assert_eq!(train.labels, reread.labels);
    println!("cached and re-read {} rows from {:?}", reread.len(), dir.path().join("train.bin"));
    Ok(())
}
