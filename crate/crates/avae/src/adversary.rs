//! The semi-supervised discriminator and its losses. Latent codes are scored
//! as one of K real classes or a (K+1)-th "generated" class: deterministic
//! codes `z_i` enter as real rows, sampled codes `z_s` as fake rows. Labelled
//! real rows feed a renormalized cross-entropy over the K real classes;
//! everything else feeds a real/fake objective on the last class.
//!
//! By default the discriminator's own loss sees only detached codes, and the
//! encoder receives adversarial signal exclusively through
//! [`generator_adversarial_loss`] on the fake branch. See the trainer for the
//! flag that re-enables gradient flow through the real branch.

use rand::Rng;

use crate::layers::{Conv, Dense};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{PadMode, Tape, Tensor, Value};
use crate::vaepp::PROB_CLAMP;
use crate::{Error, Result};

/// Default weight of the supervised term in the discriminator loss.
pub const DEFAULT_W1: f64 = 0.9;
/// Default weight of the real/fake term in the discriminator loss.
pub const DEFAULT_W2: f64 = 0.1;

/// Grid a width-D latent vector is reshaped to so a 2x2 conv can see it:
/// `r = floor(sqrt(D))` rows, `c = ceil(D/r)` columns, zero-padded to `r*c`.
pub fn latent_grid(d: usize) -> Result<(usize, usize)> {
    if d < 4 {
        return Err(Error::Config(format!(
            "latent width {d} is too small for the discriminator; need at least 4 \
             so the 2x2 conv kernel fits the latent grid"
        )));
    }
    let r = (d as f64).sqrt().floor() as usize;
    let c = d.div_ceil(r);
    Ok((r, c))
}

/// Conv-plus-MLP classifier over latent codes, with K+1 output logits.
pub struct Discriminator {
    pub latent_dim: usize,
    pub n_classes: usize,
    grid: (usize, usize),
    conv: Conv,
    fc1: Dense,
    fc2: Dense,
    ids: Vec<ParamId>,
}

impl Discriminator {
    /// Registers weights for a classifier over width-`latent_dim` codes with
    /// `n_classes` real classes. `hidden` is the sigmoid layer's width.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        latent_dim: usize,
        n_classes: usize,
        hidden: usize,
    ) -> Result<Discriminator> {
        let grid = latent_grid(latent_dim)?;
        if n_classes == 0 {
            return Err(Error::Config("discriminator needs at least 1 class".into()));
        }
        if hidden == 0 {
            return Err(Error::Config(
                "discriminator hidden width must be at least 1".into(),
            ));
        }
        let conv = Conv::new(store, rng, "disc.conv", (2, 2, 1, 10), (1, 1), PadMode::Same);
        let fc1 = Dense::new(store, rng, "disc.fc1", grid.0 * grid.1 * 10, hidden);
        let fc2 = Dense::new(store, rng, "disc.fc2", hidden, n_classes + 1);
        let mut ids = Vec::new();
        ids.extend(conv.params());
        ids.extend(fc1.params());
        ids.extend(fc2.params());
        Ok(Discriminator {
            latent_dim,
            n_classes,
            grid,
            conv,
            fc1,
            fc2,
            ids,
        })
    }

    /// All parameter ids owned by this net, in registration order.
    pub fn params(&self) -> &[ParamId] {
        &self.ids
    }

    /// The latent grid shape codes are reshaped to.
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    fn run(&self, tape: &Tape, store: &ParamStore, z: &Value, frozen: bool) -> Result<Value> {
        let shape = z.shape();
        if shape.len() != 2 || shape[1] != self.latent_dim {
            return Err(Error::shape(
                "discriminate",
                format!(
                    "expected [B, {}] latent input, got {shape:?}",
                    self.latent_dim
                ),
            ));
        }
        let b = shape[0];
        let (r, c) = self.grid;
        let h = z.pad_cols(r * c)?.reshape(vec![b, r, c, 1])?;
        let h = if frozen {
            self.conv.forward_frozen(tape, store, &h)?
        } else {
            self.conv.forward(tape, store, &h)?
        };
        let h = h.relu().reshape(vec![b, r * c * 10])?;
        let h = if frozen {
            self.fc1.forward_frozen(tape, store, &h)?
        } else {
            self.fc1.forward(tape, store, &h)?
        };
        let h = h.sigmoid();
        if frozen {
            self.fc2.forward_frozen(tape, store, &h)
        } else {
            self.fc2.forward(tape, store, &h)
        }
    }

    /// Logits `[B, K+1]` with the weights recorded as trainable parameters.
    pub fn discriminate(&self, tape: &Tape, store: &ParamStore, z: &Value) -> Result<Value> {
        self.run(tape, store, z, false)
    }

    /// Logits with the weights entered as constants, for generator updates
    /// where the discriminator must not receive gradient.
    pub fn discriminate_frozen(
        &self,
        tape: &Tape,
        store: &ParamStore,
        z: &Value,
    ) -> Result<Value> {
        self.run(tape, store, z, true)
    }
}

/// One batch of latent codes for the discriminator: real rows (`z_i`) and
/// fake rows (`z_s`) stacked, with per-row tags. `y` is `[N, K+1]`: one-hot
/// true class for labelled real rows, one-hot class K for fake rows, all-zero
/// for unlabelled real rows.
pub struct GanBatch {
    pub z: Tensor,
    pub y: Tensor,
    pub real: Vec<bool>,
    pub labelled: Vec<bool>,
}

impl GanBatch {
    /// Stacks one batch's real and fake codes. Both inputs are `[B, D]` rows
    /// for the same B samples; `y` is the `[B, K]` one-hot labels (zero rows
    /// for unlabelled samples) and `labelled` marks which rows carry one.
    pub fn assemble(
        z_real: &Tensor,
        z_fake: &Tensor,
        y: Option<&Tensor>,
        labelled: &[bool],
        n_classes: usize,
    ) -> Result<GanBatch> {
        if z_real.shape() != z_fake.shape() || z_real.ndim() != 2 {
            return Err(Error::shape(
                "gan_batch",
                format!(
                    "real codes {:?} and fake codes {:?} must be matching [B, D]",
                    z_real.shape(),
                    z_fake.shape()
                ),
            ));
        }
        let b = z_real.shape()[0];
        let d = z_real.shape()[1];
        if labelled.len() != b {
            return Err(Error::shape(
                "gan_batch",
                format!("{} labelled flags for {b} rows", labelled.len()),
            ));
        }
        if let Some(y) = y {
            if y.shape() != [b, n_classes] {
                return Err(Error::shape(
                    "gan_batch",
                    format!("labels {:?} must be [{b}, {n_classes}]", y.shape()),
                ));
            }
        }
        if y.is_none() && labelled.iter().any(|&l| l) {
            return Err(Error::contract(
                "labelled rows in a batch without a label tensor",
            ));
        }

        let mut z = Vec::with_capacity(2 * b * d);
        z.extend_from_slice(z_real.data());
        z.extend_from_slice(z_fake.data());

        let k1 = n_classes + 1;
        let mut yv = vec![0.0; 2 * b * k1];
        for i in 0..b {
            if labelled[i] {
                let row = y.expect("checked above").row(i);
                yv[i * k1..i * k1 + n_classes].copy_from_slice(row);
            }
            // Fake rows always carry the generated class.
            yv[(b + i) * k1 + n_classes] = 1.0;
        }

        let mut real = vec![true; b];
        real.extend(vec![false; b]);
        let mut flags = labelled.to_vec();
        flags.extend_from_slice(labelled);

        Ok(GanBatch {
            z: Tensor::new(vec![2 * b, d], z)?,
            y: Tensor::new(vec![2 * b, k1], yv)?,
            real,
            labelled: flags,
        })
    }

    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }
}

/// Renormalized cross-entropy over the K real classes, averaged over rows.
/// `y` rows must be one-hot on a real class; a row tagged with the generated
/// class is a contract violation.
pub fn loss_label(logits: &Value, y: &Value) -> Result<Value> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] < 2 || y.shape() != shape {
        return Err(Error::shape(
            "loss_label",
            format!("logits {:?} and labels {:?} must match [B, K+1]", shape, y.shape()),
        ));
    }
    let k = shape[1] - 1;
    let yt = y.tensor();
    for i in 0..shape[0] {
        let row = yt.row(i);
        if row[k] != 0.0 {
            return Err(Error::contract(format!(
                "label row {i} is tagged with the generated class"
            )));
        }
        if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!(
                "label row {i} is not one-hot"
            )));
        }
    }

    let q = logits.softmax_rows()?;
    // Mass on the real classes is 1 - q(K); dividing the true-class
    // probability by it renormalizes without a second softmax.
    let real_mass = q.select_col(k)?.neg().add_scalar(1.0).clamp(PROB_CLAMP, 1.0)?;
    let q_true = q.mul(y)?.row_sums()?.clamp(PROB_CLAMP, 1.0)?;
    Ok(real_mass.log()?.sub(&q_true.log()?)?.mean_all())
}

/// Real/fake objective on the generated class:
/// `-mean ln(1 - q(K|real)) - mean ln(q(K|fake))`, probabilities clamped.
/// An empty side contributes zero.
pub fn loss_unlabel(logits_real: &Value, logits_fake: &Value) -> Result<Value> {
    let p_real = generated_class_prob(logits_real)?;
    let p_fake = generated_class_prob(logits_fake)?;
    let real_term = p_real.neg().add_scalar(1.0).log()?.mean_all().neg();
    let fake_term = p_fake.log()?.mean_all().neg();
    real_term.add(&fake_term)
}

/// Clamped probability of the generated class per row: `[B, K+1] -> [B]`.
fn generated_class_prob(logits: &Value) -> Result<Value> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(Error::shape(
            "loss_unlabel",
            format!("expected [B, K+1] logits, got {shape:?}"),
        ));
    }
    logits
        .softmax_rows()?
        .select_col(shape[1] - 1)?
        .clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// The discriminator loss split into its parts. `label` is `None` when the
/// batch had no labelled real rows.
pub struct GanLosses {
    pub total: Value,
    pub label: Option<Value>,
    pub unlabel: Value,
}

/// Weighted discriminator objective over one assembled batch:
/// `w1 * loss_label + w2 * loss_unlabel`. Labelled samples feed both terms
/// unless `labelled_in_unsup` is false, in which case the real/fake term only
/// sees rows from unlabelled samples.
pub fn loss_gan(
    disc: &Discriminator,
    tape: &Tape,
    store: &ParamStore,
    batch: &GanBatch,
    w1: f64,
    w2: f64,
    labelled_in_unsup: bool,
) -> Result<GanLosses> {
    let z = tape.input(batch.z.clone());
    let logits = disc.discriminate(tape, store, &z)?;

    let mut label_idx = Vec::new();
    let mut real_idx = Vec::new();
    let mut fake_idx = Vec::new();
    for i in 0..batch.len() {
        let in_unsup = labelled_in_unsup || !batch.labelled[i];
        if batch.real[i] {
            if batch.labelled[i] {
                label_idx.push(i);
            }
            if in_unsup {
                real_idx.push(i);
            }
        } else if in_unsup {
            fake_idx.push(i);
        }
    }

    let y = tape.input(batch.y.clone());
    let label = if label_idx.is_empty() {
        None
    } else {
        Some(loss_label(
            &logits.take_rows(&label_idx)?,
            &y.take_rows(&label_idx)?,
        )?)
    };
    let unlabel = loss_unlabel(
        &logits.take_rows(&real_idx)?,
        &logits.take_rows(&fake_idx)?,
    )?;

    let total = match &label {
        Some(l) => l.scale(w1).add(&unlabel.scale(w2))?,
        None => unlabel.scale(w2),
    };
    Ok(GanLosses {
        total,
        label,
        unlabel,
    })
}

/// Non-saturating generator objective: `-mean ln(1 - q(K|fake))`, pushing
/// sampled codes away from the generated class. Run the discriminator frozen
/// when building `logits_fake` so only the encoder side receives gradient.
pub fn generator_adversarial_loss(logits_fake: &Value) -> Result<Value> {
    let p = generated_class_prob(logits_fake)?;
    Ok(p.neg().add_scalar(1.0).log()?.mean_all().neg())
}
