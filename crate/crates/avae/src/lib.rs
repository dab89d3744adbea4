//! Adversarial variational embeddings for semi-supervised learning.
//!
//! This crate trains a variational autoencoder whose latent code is split in
//! two: a deterministic part `z_i` used as the downstream embedding, and a
//! stochastic part `z_s` sampled from a Gaussian whose parameters are read
//! off `z_i`. A small convolutional discriminator plays a GAN-style game
//! against the sampled code, pushing label structure into the latent space
//! even when only a fraction of the training data is labelled. Embeddings are
//! scored with a k-nearest-neighbour classifier plus one-vs-rest ROC/AUC.
//!
//! The quickest way in is the `examples/` directory, one runnable program per
//! capability:
//!
//! * `autodiff_basics` – tensors, the gradient tape, and finite-difference
//!   checks on a composite loss.
//! * `latent_exclusivity` – deterministic re-encoding vs. fresh stochastic
//!   draws from the same trained model.
//! * `train_synthetic` – end-to-end training on a two-Gaussian toy set.
//! * `ablation_sweep` – the four model variants compared on one dataset.
//! * `prepare_sensor_csv` – windowing, normalization, and caching of a
//!   sensor-style CSV time series.
//! * `digits_image_mode` – the convolutional encoder/decoder pair on 28x28
//!   greyscale digits.
//! * `embedding_metrics` – kNN, confusion matrices, and ROC/AUC on toy
//!   embeddings.
//!
//! The same functionality is scriptable through a thin `avae` binary with
//! `prepare`, `train`, `eval`, `sweep`, and `export-embeddings` subcommands;
//! see the crate README for the file formats it reads and writes.

pub mod adversary;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluator;
mod layers;
pub mod params;
pub mod tensor;
pub mod trainer;
pub mod vaepp;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Value};
