//! Run configuration: a flat `key = value` text format, flag overrides, and
//! the hash that guards checkpoint resumption.
//!
//! Every run persists its fully-resolved config, so a run directory is
//! self-describing and any table cell can be reproduced from it. The hash
//! covers only fields that change training semantics; paths, the epoch
//! budget, and evaluation-only knobs stay out so a run can be resumed with a
//! larger budget or re-evaluated without being refused.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Input layout of the prepared dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Vector,
    Image,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Vector => "vector",
            Mode::Image => "image",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "vector" => Ok(Mode::Vector),
            "image" => Ok(Mode::Image),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected vector or image"
            ))),
        }
    }
}

/// Which model variant trains and which latent quantity becomes the
/// downstream embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Standard VAE, mean vector as the representation.
    VaeMu,
    /// Standard VAE, sampled code as the representation.
    Vae,
    /// Split-latent VAE without the adversary, exclusive code.
    Vaepp,
    /// Full model: split latent plus adversarial training.
    Avae,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::VaeMu, Ablation::Vae, Ablation::Vaepp, Ablation::Avae];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::VaeMu => "vae_mu",
            Ablation::Vae => "vae",
            Ablation::Vaepp => "vaepp",
            Ablation::Avae => "avae",
        }
    }

    /// Whether the latent code is split into an exclusive part feeding the
    /// generator heads.
    pub fn split_latent(&self) -> bool {
        matches!(self, Ablation::Vaepp | Ablation::Avae)
    }

    /// Whether a discriminator trains alongside the autoencoder.
    pub fn adversarial(&self) -> bool {
        matches!(self, Ablation::Avae)
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Ablation> {
        match s {
            "vae_mu" => Ok(Ablation::VaeMu),
            "vae" => Ok(Ablation::Vae),
            "vaepp" => Ok(Ablation::Vaepp),
            "avae" => Ok(Ablation::Avae),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?}; expected vae_mu, vae, vaepp, or avae"
            ))),
        }
    }
}

/// Everything a training run needs, with long-run defaults; the examples
/// show faster settings for small data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Directory holding the prepared dataset.
    pub data: String,
    /// Dataset name used in the run-directory layout; defaults to the final
    /// component of `data`.
    pub dataset: String,
    /// Output root; defaults to `$AVAE_OUT_DIR` or `runs`.
    pub out: String,
    pub mode: Mode,
    pub ablation: Ablation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_vae: f64,
    pub lr_disc: f64,
    pub w1: f64,
    pub w2: f64,
    pub lambda_adv: f64,
    /// Supervision rate: fraction of training labels kept visible.
    pub gamma: f64,
    /// Latent width; 0 derives it from the data (quarter of the feature
    /// count for vectors, 32 for images).
    pub latent_dim: usize,
    /// Discriminator hidden width; 0 derives ceil(M/4) from the data.
    pub disc_hidden: usize,
    pub seed: u64,
    /// Checkpoint cadence in epochs; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Whether labelled samples also feed the real/fake term.
    pub labelled_in_unsup: bool,
    /// Ablation switch: let adversarial gradient reach the encoder through
    /// the real (exclusive-code) branch too.
    pub adv_through_real: bool,
    pub early_stop: bool,
    /// No-improvement window (epochs) for early stopping.
    pub early_stop_window: usize,
    pub knn_k: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            data: String::new(),
            dataset: String::new(),
            out: String::new(),
            mode: Mode::Vector,
            ablation: Ablation::Avae,
            epochs: 200,
            batch_size: 64,
            lr_vae: 1e-5,
            lr_disc: 1e-4,
            w1: 0.9,
            w2: 0.1,
            lambda_adv: 1.0,
            gamma: 1.0,
            latent_dim: 0,
            disc_hidden: 0,
            seed: 0,
            checkpoint_every: 0,
            labelled_in_unsup: true,
            adv_through_real: false,
            early_stop: false,
            early_stop_window: 20,
            knn_k: 3,
        }
    }
}

/// Field names accepted in config files and `--set` overrides, in the order
/// they are serialized.
pub const CONFIG_KEYS: [&str; 22] = [
    "data",
    "dataset",
    "out",
    "mode",
    "ablation",
    "epochs",
    "batch_size",
    "lr_vae",
    "lr_disc",
    "w1",
    "w2",
    "lambda_adv",
    "gamma",
    "latent_dim",
    "disc_hidden",
    "seed",
    "checkpoint_every",
    "labelled_in_unsup",
    "adv_through_real",
    "early_stop",
    "early_stop_window",
    "knn_k",
];

/// Fields covered by the resume-guard hash: everything that changes what the
/// trained parameters would be. Paths, naming, the epoch budget, checkpoint
/// cadence, and eval-only knobs are excluded.
const HASHED_KEYS: [&str; 16] = [
    "mode",
    "ablation",
    "batch_size",
    "lr_vae",
    "lr_disc",
    "w1",
    "w2",
    "lambda_adv",
    "gamma",
    "latent_dim",
    "disc_hidden",
    "seed",
    "labelled_in_unsup",
    "adv_through_real",
    "early_stop",
    "early_stop_window",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!("cannot parse {value:?} as a value for {key}"))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "cannot parse {value:?} as a value for {key}; expected true or false"
        ))),
    }
}

impl RunConfig {
    /// Parses a flat config file: one `key = value` per line, `#` comments,
    /// blank lines ignored. Unknown keys are rejected. Fields not mentioned
    /// keep their defaults.
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = value.to_string(),
            "dataset" => self.dataset = value.to_string(),
            "out" => self.out = value.to_string(),
            "mode" => self.mode = value.parse()?,
            "ablation" => self.ablation = value.parse()?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr_vae" => self.lr_vae = parse_value(key, value)?,
            "lr_disc" => self.lr_disc = parse_value(key, value)?,
            "w1" => self.w1 = parse_value(key, value)?,
            "w2" => self.w2 = parse_value(key, value)?,
            "lambda_adv" => self.lambda_adv = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "latent_dim" => self.latent_dim = parse_value(key, value)?,
            "disc_hidden" => self.disc_hidden = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value)?,
            "labelled_in_unsup" => self.labelled_in_unsup = parse_bool(key, value)?,
            "adv_through_real" => self.adv_through_real = parse_bool(key, value)?,
            "early_stop" => self.early_stop = parse_bool(key, value)?,
            "early_stop_window" => self.early_stop_window = parse_value(key, value)?,
            "knn_k" => self.knn_k = parse_value(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key {other:?}; valid keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// The value of one field, as it would appear in a config file.
    pub fn value_of(&self, key: &str) -> Option<String> {
        Some(match key {
            "data" => self.data.clone(),
            "dataset" => self.dataset.clone(),
            "out" => self.out.clone(),
            "mode" => self.mode.as_str().to_string(),
            "ablation" => self.ablation.as_str().to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr_vae" => self.lr_vae.to_string(),
            "lr_disc" => self.lr_disc.to_string(),
            "w1" => self.w1.to_string(),
            "w2" => self.w2.to_string(),
            "lambda_adv" => self.lambda_adv.to_string(),
            "gamma" => self.gamma.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "disc_hidden" => self.disc_hidden.to_string(),
            "seed" => self.seed.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "labelled_in_unsup" => self.labelled_in_unsup.to_string(),
            "adv_through_real" => self.adv_through_real.to_string(),
            "early_stop" => self.early_stop.to_string(),
            "early_stop_window" => self.early_stop_window.to_string(),
            "knn_k" => self.knn_k.to_string(),
            _ => return None,
        })
    }

    /// Serializes every field (`key = value` lines) for the persisted
    /// resolved config. `parse_str` round-trips this exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = self.value_of(key).expect("every listed key serializes");
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// Hex digest over the training-semantics fields; the resume guard.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for key in HASHED_KEYS {
            hasher.update(key.as_bytes());
            hasher.update(b"=");
            hasher.update(self.value_of(key).expect("hashed keys serialize").as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Human-readable field-by-field diff of the hash-covered settings,
    /// used when refusing to resume from a mismatched checkpoint.
    pub fn diff_hashed(&self, other: &RunConfig) -> Vec<String> {
        let mut out = Vec::new();
        for key in HASHED_KEYS {
            let a = self.value_of(key).expect("hashed keys serialize");
            let b = other.value_of(key).expect("hashed keys serialize");
            if a != b {
                out.push(format!("{key}: checkpoint has {a}, requested {b}"));
            }
        }
        out
    }

    /// Bounds checks on everything that has bounds.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.lr_vae <= 0.0 || !self.lr_vae.is_finite() {
            return Err(Error::Config("lr_vae must be positive".into()));
        }
        if self.lr_disc <= 0.0 || !self.lr_disc.is_finite() {
            return Err(Error::Config("lr_disc must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 || !self.w1.is_finite() || !self.w2.is_finite() {
            return Err(Error::Config("w1 and w2 must be non-negative".into()));
        }
        if self.lambda_adv < 0.0 || !self.lambda_adv.is_finite() {
            return Err(Error::Config("lambda_adv must be non-negative".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be at least 1".into()));
        }
        if self.early_stop && self.early_stop_window == 0 {
            return Err(Error::Config(
                "early_stop_window must be at least 1 when early_stop is on".into(),
            ));
        }
        Ok(())
    }

    /// Output root: the configured one, else `$AVAE_OUT_DIR`, else `runs`.
    pub fn out_root(&self) -> String {
        if !self.out.is_empty() {
            return self.out.clone();
        }
        match std::env::var("AVAE_OUT_DIR") {
            Ok(v) if !v.is_empty() => v,
            _ => "runs".to_string(),
        }
    }

    /// Dataset name for the run layout: configured, else the final path
    /// component of `data`.
    pub fn dataset_name(&self) -> String {
        if !self.dataset.is_empty() {
            return self.dataset.clone();
        }
        std::path::Path::new(&self.data)
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string())
    }

    /// Run directory for this config: `<out>/<dataset>/<ablation>/<rate>/<seed>`,
    /// with the supervision rate as an integer percentage.
    pub fn run_dir(&self) -> std::path::PathBuf {
        let rate = (self.gamma * 100.0).round() as u32;
        std::path::Path::new(&self.out_root())
            .join(self.dataset_name())
            .join(self.ablation.as_str())
            .join(rate.to_string())
            .join(self.seed.to_string())
    }
}
