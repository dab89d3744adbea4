//! The joint optimization loop: per batch, one Adam step on the
//! discriminator objective over detached codes, then one Adam step on the
//! autoencoder objective plus the adversarial generator term computed through
//! the freshly-updated, frozen discriminator. No-adversary ablations skip the
//! first step and the generator term.
//!
//! All randomness is drawn from counter-keyed streams indexed by (seed,
//! purpose, epoch), so a run resumed at an epoch boundary replays exactly the
//! epochs a straight-through run would have executed. Checkpoints therefore
//! carry no explicit rng state, only the completed-epoch count.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::adversary::{loss_gan, Discriminator, GanBatch};
use crate::config::{Mode, RunConfig, CONFIG_KEYS};
use crate::data::store::{read_store, write_store, Store};
use crate::data::{apply_supervision_mask, batches, Batch, Dataset};
use crate::error::IoContext;
use crate::params::ParamStore;
use crate::tensor::{adam_step, AdamState, StreamKind, StreamRng, Tape, Tensor};
use crate::vaepp::{Arch, VaeppNet};
use crate::{Error, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_HEADER: &str = "epoch,recon,kl,gan_label,gan_unlabel,ms";
pub const CHECKPOINT_BIN: &str = "checkpoint.bin";
pub const CHECKPOINT_META: &str = "checkpoint.meta";
const CHECKPOINT_FORMAT: &str = "avae-checkpoint-v1";

/// Loss telemetry for one completed epoch. Values are means over the epoch's
/// batches; the adversarial fields are `None` for ablations without a
/// discriminator.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub gan_label: Option<f64>,
    pub gan_unlabel: Option<f64>,
    pub ms: u64,
}

impl EpochRecord {
    /// Total autoencoder loss this epoch.
    pub fn vae_total(&self) -> f64 {
        self.recon + self.kl
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.recon,
            self.kl,
            opt(&self.gan_label),
            opt(&self.gan_unlabel),
            self.ms
        )
    }
}

/// Everything a finished (or resumed) run hands back for evaluation.
pub struct TrainOutcome {
    /// Config with derived fields materialized (latent width, disc hidden).
    pub config: RunConfig,
    pub store: ParamStore,
    pub vae: VaeppNet,
    pub disc: Option<Discriminator>,
    /// Records produced by this call (a resume holds only its own epochs).
    pub trace: Vec<EpochRecord>,
    pub epochs_done: usize,
    /// The supervision-masked training set used for the run.
    pub masked: Dataset,
    /// Supervision-mask warnings (classes left without labels, etc).
    pub warnings: Vec<String>,
}

struct Session {
    cfg: RunConfig,
    store: ParamStore,
    vae: VaeppNet,
    disc: Option<Discriminator>,
    adam_vae: Vec<AdamState>,
    adam_disc: Vec<AdamState>,
    masked: Dataset,
    warnings: Vec<String>,
}

/// Running per-epoch loss sums.
#[derive(Default)]
struct EpochAccum {
    recon: f64,
    kl: f64,
    batches: usize,
    gan_label: f64,
    gan_label_n: usize,
    gan_unlabel: f64,
    gan_unlabel_n: usize,
}

impl Session {
    fn build(cfg: &RunConfig, train: &Dataset) -> Result<Session> {
        cfg.validate()?;
        let arch = match (cfg.mode, train.is_image()) {
            (Mode::Vector, false) => Arch::Vector {
                features: train.feature_dim(),
            },
            (Mode::Image, true) => Arch::Image,
            (mode, _) => {
                return Err(Error::Config(format!(
                    "config mode is {} but the prepared dataset is {}",
                    mode.as_str(),
                    if train.is_image() { "image" } else { "vector" }
                )))
            }
        };

        let mut resolved = cfg.clone();
        if resolved.latent_dim == 0 {
            resolved.latent_dim = arch.default_latent_dim();
        }
        if resolved.disc_hidden == 0 {
            resolved.disc_hidden = arch.feature_len().div_ceil(4);
        }

        let mut init = StreamRng::new(resolved.seed).stream(StreamKind::Init, 0);
        let mut store = ParamStore::default();
        let vae = VaeppNet::new(
            &mut store,
            &mut init,
            arch,
            resolved.latent_dim,
            resolved.ablation.split_latent(),
        )?;
        let disc = if resolved.ablation.adversarial() {
            Some(Discriminator::new(
                &mut store,
                &mut init,
                resolved.latent_dim,
                train.n_classes,
                resolved.disc_hidden,
            )?)
        } else {
            None
        };

        let adam_vae = vae
            .params()
            .iter()
            .map(|&id| AdamState::new(resolved.lr_vae, store.get(id).shape()))
            .collect();
        let adam_disc = disc
            .as_ref()
            .map(|d| {
                d.params()
                    .iter()
                    .map(|&id| AdamState::new(resolved.lr_disc, store.get(id).shape()))
                    .collect()
            })
            .unwrap_or_default();

        let (masked, warnings) = apply_supervision_mask(train, resolved.gamma, resolved.seed, true)?;

        Ok(Session {
            cfg: resolved,
            store,
            vae,
            disc,
            adam_vae,
            adam_disc,
            masked,
            warnings,
        })
    }

    fn into_outcome(self, trace: Vec<EpochRecord>, epochs_done: usize) -> TrainOutcome {
        TrainOutcome {
            config: self.cfg,
            store: self.store,
            vae: self.vae,
            disc: self.disc,
            trace,
            epochs_done,
            masked: self.masked,
            warnings: self.warnings,
        }
    }
}

fn check_finite(v: f64, what: &str, epoch: usize, batch: usize) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    Err(Error::NumericFault {
        epoch,
        batch,
        detail: format!("{what} is {v}"),
    })
}

/// One Adam step on the discriminator objective. The codes in `gan` are
/// detached tensors, so no gradient can reach the autoencoder from here.
fn disc_step(
    s: &mut Session,
    gan: &GanBatch,
    epoch: usize,
    batch_idx: usize,
) -> Result<(Option<f64>, f64)> {
    let disc = s.disc.as_ref().expect("adversarial ablation has a discriminator");
    let tape = Tape::new();
    let losses = loss_gan(
        disc,
        &tape,
        &s.store,
        gan,
        s.cfg.w1,
        s.cfg.w2,
        s.cfg.labelled_in_unsup,
    )?;
    check_finite(losses.total.item(), "discriminator loss", epoch, batch_idx)?;
    let grads = losses.total.backward()?;
    let ids: Vec<_> = disc.params().to_vec();
    for (id, state) in ids.into_iter().zip(&mut s.adam_disc) {
        let grad = grads.param_or_zeros(id, s.store.get(id).shape());
        let next = adam_step(s.store.get(id), &grad, state)?;
        s.store.set(id, next)?;
    }
    Ok((
        losses.label.as_ref().map(|l| l.item()),
        losses.unlabel.item(),
    ))
}

/// One Adam step on the autoencoder objective: the variational loss plus,
/// when an adversary is present, the generator term through the frozen,
/// already-updated discriminator.
fn vae_step(
    s: &mut Session,
    batch: &Batch,
    eps_rng: &mut ChaCha8Rng,
    epoch: usize,
    batch_idx: usize,
) -> Result<(f64, f64, Option<(Option<f64>, f64)>)> {
    let tape = Tape::new();
    let x = tape.input(batch.x.clone());
    let fwd = s.vae.forward(&tape, &s.store, &x, eps_rng)?;
    let vl = s.vae.loss(&x, &fwd)?;
    let recon = vl.recon.item();
    let kl = vl.kl.item();
    check_finite(recon + kl, "autoencoder loss", epoch, batch_idx)?;

    let mut gan_stats = None;
    let objective = if s.disc.is_some() {
        let z_i = fwd
            .latent
            .z_i
            .as_ref()
            .expect("adversarial ablation uses the split latent");
        let gan = GanBatch::assemble(
            &z_i.tensor(),
            &fwd.latent.z_s.tensor(),
            batch.y.as_ref(),
            &batch.labelled,
            s.masked.n_classes,
        )?;
        gan_stats = Some(disc_step(s, &gan, epoch, batch_idx)?);

        let disc = s.disc.as_ref().expect("checked above");
        let logits_fake = disc.discriminate_frozen(&tape, &s.store, &fwd.latent.z_s)?;
        let mut adv = crate::adversary::generator_adversarial_loss(&logits_fake)?;
        if s.cfg.adv_through_real {
            let logits_real = disc.discriminate_frozen(&tape, &s.store, z_i)?;
            adv = adv.add(&crate::adversary::generator_adversarial_loss(&logits_real)?)?;
        }
        vl.total.add(&adv.scale(s.cfg.lambda_adv))?
    } else {
        vl.total
    };
    check_finite(objective.item(), "training objective", epoch, batch_idx)?;

    let grads = objective.backward()?;
    let ids: Vec<_> = s.vae.params().to_vec();
    for (id, state) in ids.into_iter().zip(&mut s.adam_vae) {
        let grad = grads.param_or_zeros(id, s.store.get(id).shape());
        let next = adam_step(s.store.get(id), &grad, state)?;
        s.store.set(id, next)?;
    }
    Ok((recon, kl, gan_stats))
}

fn run_epochs(
    s: &mut Session,
    start_epoch: usize,
    out_dir: Option<&Path>,
) -> Result<(Vec<EpochRecord>, usize)> {
    let mut trace_file = match out_dir {
        Some(dir) => Some(open_trace(dir, start_epoch > 1)?),
        None => None,
    };

    let rng = StreamRng::new(s.cfg.seed);
    let mut trace = Vec::new();
    let mut epochs_done = start_epoch - 1;
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;

    for epoch in start_epoch..=s.cfg.epochs {
        let t0 = Instant::now();
        let mut acc = EpochAccum::default();
        let mut eps_rng = rng.stream(StreamKind::Epsilon, epoch as u64);
        let parts = batches(&s.masked, s.cfg.batch_size, s.cfg.seed, epoch as u64)?;
        for (bi, batch) in parts.iter().enumerate() {
            let (recon, kl, gan) = vae_step(s, batch, &mut eps_rng, epoch, bi)?;
            acc.recon += recon;
            acc.kl += kl;
            acc.batches += 1;
            if let Some((label, unlabel)) = gan {
                if let Some(l) = label {
                    acc.gan_label += l;
                    acc.gan_label_n += 1;
                }
                acc.gan_unlabel += unlabel;
                acc.gan_unlabel_n += 1;
            }
        }

        let n = acc.batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            recon: acc.recon / n,
            kl: acc.kl / n,
            gan_label: (acc.gan_label_n > 0).then(|| acc.gan_label / acc.gan_label_n as f64),
            gan_unlabel: (acc.gan_unlabel_n > 0)
                .then(|| acc.gan_unlabel / acc.gan_unlabel_n as f64),
            ms: t0.elapsed().as_millis() as u64,
        };
        if let Some(f) = trace_file.as_mut() {
            writeln!(f, "{}", record.csv_row()).io_ctx("writing trace")?;
            f.flush().io_ctx("flushing trace")?;
        }
        let total = record.vae_total();
        trace.push(record);
        epochs_done = epoch;

        if let Some(dir) = out_dir {
            let cadence = s.cfg.checkpoint_every;
            if cadence > 0 && epoch % cadence == 0 && epoch != s.cfg.epochs {
                write_checkpoint(dir, s, epoch)?;
            }
        }

        if total < best {
            best = total;
            best_epoch = epoch;
        }
        if s.cfg.early_stop && epoch - best_epoch >= s.cfg.early_stop_window {
            break;
        }
    }

    if let Some(dir) = out_dir {
        write_checkpoint(dir, s, epochs_done)?;
    }
    Ok((trace, epochs_done))
}

fn open_trace(dir: &Path, append: bool) -> Result<File> {
    std::fs::create_dir_all(dir).io_ctx(format!("creating {}", dir.display()))?;
    let path = dir.join(TRACE_FILE);
    if append && path.exists() {
        return OpenOptions::new()
            .append(true)
            .open(&path)
            .io_ctx(format!("opening {}", path.display()));
    }
    let mut f = File::create(&path).io_ctx(format!("creating {}", path.display()))?;
    writeln!(f, "{TRACE_HEADER}").io_ctx("writing trace header")?;
    Ok(f)
}

/// Trains from scratch. When `out_dir` is given, the run streams its trace
/// CSV there and writes checkpoints (every `checkpoint_every` epochs and at
/// the end); a numeric fault leaves the last completed checkpoint in place.
pub fn train(cfg: &RunConfig, train_set: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut session = Session::build(cfg, train_set)?;
    let (trace, done) = run_epochs(&mut session, 1, out_dir)?;
    Ok(session.into_outcome(trace, done))
}

/// Continues a checkpointed run up to `cfg.epochs`. Refuses checkpoints whose
/// training-semantics hash differs, listing the differing fields. A run that
/// already reached the budget is returned as-is.
pub fn resume(cfg: &RunConfig, train_set: &Dataset, dir: &Path) -> Result<TrainOutcome> {
    let cp = load_checkpoint(dir)?;
    let mut session = Session::build(cfg, train_set)?;

    let cp_cfg = cp.config()?;
    if cp.hash()? != session.cfg.hash() {
        let diff = cp_cfg.diff_hashed(&session.cfg).join("\n");
        return Err(Error::ConfigMismatch { diff });
    }
    restore_session(&mut session, &cp)?;

    let done = cp.epochs_done()?;
    if done >= session.cfg.epochs {
        return Ok(session.into_outcome(Vec::new(), done));
    }
    let (trace, done) = run_epochs(&mut session, done + 1, Some(dir))?;
    Ok(session.into_outcome(trace, done))
}

fn write_checkpoint(dir: &Path, s: &Session, epochs_done: usize) -> Result<()> {
    std::fs::create_dir_all(dir).io_ctx(format!("creating {}", dir.display()))?;
    let mut named: Vec<(String, Tensor)> = Vec::new();
    let adam_pairs = s
        .vae
        .params()
        .iter()
        .zip(&s.adam_vae)
        .chain(s.disc.iter().flat_map(|d| d.params().iter()).zip(&s.adam_disc));
    for (&id, state) in adam_pairs {
        let name = s.store.name(id);
        named.push((format!("param.{name}"), s.store.get(id).clone()));
        named.push((format!("adam.{name}.m"), state.m.clone()));
        named.push((format!("adam.{name}.v"), state.v.clone()));
        named.push((format!("adam.{name}.step"), Tensor::scalar(state.step as f64)));
    }
    let tensors: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), t)).collect();

    let mut kvs: Vec<(&str, String)> = vec![
        ("format", CHECKPOINT_FORMAT.to_string()),
        ("config_hash", s.cfg.hash()),
        ("epochs_done", epochs_done.to_string()),
        ("n_classes", s.masked.n_classes.to_string()),
    ];
    let mut config_keys: Vec<String> = Vec::new();
    for key in CONFIG_KEYS {
        config_keys.push(format!("config.{key}"));
    }
    for (i, key) in CONFIG_KEYS.iter().enumerate() {
        kvs.push((
            config_keys[i].as_str(),
            s.cfg.value_of(key).expect("every config key serializes"),
        ));
    }

    write_store(
        dir.join(CHECKPOINT_BIN),
        dir.join(CHECKPOINT_META),
        &tensors,
        &kvs,
    )
}

/// A checkpoint read back from disk.
pub struct Checkpoint {
    pub dir: PathBuf,
    store: Store,
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let store = read_store(dir.join(CHECKPOINT_BIN), dir.join(CHECKPOINT_META))?;
    let meta = dir.join(CHECKPOINT_META);
    let format = store.required_kv("format", &meta)?;
    if format != CHECKPOINT_FORMAT {
        return Err(Error::Format {
            path: meta,
            offset: 0,
            detail: format!("unsupported checkpoint format {format:?}"),
        });
    }
    Ok(Checkpoint {
        dir: dir.to_path_buf(),
        store,
    })
}

impl Checkpoint {
    fn meta_path(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_META)
    }

    /// The resolved config the run was trained with.
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for key in CONFIG_KEYS {
            let stored = self
                .store
                .required_kv(&format!("config.{key}"), &self.meta_path())?;
            cfg.set(key, stored)?;
        }
        Ok(cfg)
    }

    pub fn hash(&self) -> Result<&str> {
        self.store.required_kv("config_hash", &self.meta_path())
    }

    pub fn epochs_done(&self) -> Result<usize> {
        let raw = self.store.required_kv("epochs_done", &self.meta_path())?;
        raw.parse().map_err(|_| Error::Format {
            path: self.meta_path(),
            offset: 0,
            detail: format!("epochs_done {raw:?} is not a count"),
        })
    }

    fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.store.required_tensor(name, &self.meta_path())
    }
}

fn restore_session(s: &mut Session, cp: &Checkpoint) -> Result<()> {
    let ids: Vec<_> = s.store.ids().collect();
    for id in ids {
        let name = s.store.name(id).to_string();
        let value = cp.tensor(&format!("param.{name}"))?.clone();
        s.store.set(id, value)?;
    }
    let vae_ids: Vec<_> = s.vae.params().to_vec();
    for (id, state) in vae_ids.into_iter().zip(&mut s.adam_vae) {
        restore_adam(state, cp, s.store.name(id))?;
    }
    if let Some(disc) = &s.disc {
        let disc_ids: Vec<_> = disc.params().to_vec();
        for (id, state) in disc_ids.into_iter().zip(&mut s.adam_disc) {
            restore_adam(state, cp, s.store.name(id))?;
        }
    }
    Ok(())
}

fn restore_adam(state: &mut AdamState, cp: &Checkpoint, name: &str) -> Result<()> {
    state.m = cp.tensor(&format!("adam.{name}.m"))?.clone();
    state.v = cp.tensor(&format!("adam.{name}.v"))?.clone();
    state.step = cp.tensor(&format!("adam.{name}.step"))?.item() as u64;
    Ok(())
}

/// Rebuilds the trained model from a checkpoint for evaluation or export,
/// using the config stored inside it. The dataset supplies the feature
/// geometry and class count and must match the one the run trained on.
pub fn restore_for_eval(
    dir: &Path,
    train_set: &Dataset,
) -> Result<(RunConfig, ParamStore, VaeppNet, Option<Discriminator>)> {
    let cp = load_checkpoint(dir)?;
    let cfg = cp.config()?;
    let mut session = Session::build(&cfg, train_set)?;
    restore_session(&mut session, &cp)?;
    Ok((session.cfg, session.store, session.vae, session.disc))
}
