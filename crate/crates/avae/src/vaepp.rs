//! The autoencoder half of the model: an encoder that produces the
//! deterministic exclusive code `z_i`, a generator head pair producing
//! `mu(z_i)` and `sigma(z_i)`, the reparameterized draw `z_s = mu + sigma*eps`,
//! and a decoder reconstructing the input from `z_s`.
//!
//! Two latent layouts share this type. In split mode (the default) the heads
//! read the dedicated code `z_i`, which is what downstream classifiers embed
//! with. In standard mode (`split_latent = false`, used by the plain-VAE
//! ablations) there is no `z_i` layer: the heads read the encoder features
//! directly, and the embedding is `mu` or `z_s` instead.

use rand::Rng;

use crate::layers::{Conv, Dense};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{sample_standard_normal, PadMode, Tape, Tensor, Value};
use crate::{Error, Result};

/// Fixed input geometry for image mode.
pub const IMAGE_SIDE: usize = 28;
/// Latent width used by image mode unless overridden.
pub const IMAGE_LATENT_DIM: usize = 32;
/// Width of the flattened convolutional features: two stride-2 same-padded
/// pools take 28 to 7, and the second conv stack emits 64 channels.
pub const IMAGE_FEATURE_DIM: usize = 7 * 7 * 64;

/// Floor added to `softplus` so `sigma` stays strictly positive and the
/// KL term's `ln sigma^2` stays finite.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Probability clamp for Bernoulli reconstruction log-terms.
pub const PROB_CLAMP: f64 = 1e-7;

/// Input layout the net was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Flat feature vectors of the given width.
    Vector { features: usize },
    /// 28x28 single-channel images in `[B, 28, 28, 1]` layout.
    Image,
}

impl Arch {
    /// Total feature count M per sample.
    pub fn feature_len(&self) -> usize {
        match self {
            Arch::Vector { features } => *features,
            Arch::Image => IMAGE_SIDE * IMAGE_SIDE,
        }
    }

    /// Latent width used when the config does not override it:
    /// `ceil(M/4)` for vectors, 32 for images.
    pub fn default_latent_dim(&self) -> usize {
        match self {
            Arch::Vector { features } => features.div_ceil(4),
            Arch::Image => IMAGE_LATENT_DIM,
        }
    }

    /// Reconstruction likelihood matching the data support.
    pub fn recon_loss(&self) -> ReconLoss {
        match self {
            Arch::Vector { .. } => ReconLoss::SquaredError,
            Arch::Image => ReconLoss::Bernoulli,
        }
    }
}

/// One stochastic pass through the generator.
///
/// `z_i` is present only in split mode; the standard-VAE ablations have no
/// exclusive code. The defining identity `z_s = mu + sigma*eps` holds exactly
/// for the `eps` recorded here.
pub struct LatentSample {
    pub z_i: Option<Value>,
    pub mu: Value,
    pub sigma: Value,
    pub eps: Tensor,
    pub z_s: Value,
}

/// Full forward pass: latent sample plus reconstruction.
pub struct VaeForward {
    pub latent: LatentSample,
    pub recon: Value,
}

/// Encoder, generator heads, and decoder with weights in a shared store.
pub struct VaeppNet {
    pub arch: Arch,
    pub latent_dim: usize,
    pub split_latent: bool,
    enc_convs: Option<(Conv, Conv)>,
    enc_fc: Option<Dense>,
    mu_head: Dense,
    sigma_head: Dense,
    dec_fc: Dense,
    dec_convs: Option<(Conv, Conv)>,
    ids: Vec<ParamId>,
}

impl VaeppNet {
    /// Registers all weights in `store`, drawing initial values from `rng`
    /// in a fixed order so equal seeds give equal nets.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        arch: Arch,
        latent_dim: usize,
        split_latent: bool,
    ) -> Result<VaeppNet> {
        if latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if let Arch::Vector { features } = arch {
            if features == 0 {
                return Err(Error::Config("vector mode needs at least 1 feature".into()));
            }
        }

        let mut ids = Vec::new();
        let track = |p: Vec<ParamId>, ids: &mut Vec<ParamId>| {
            ids.extend(p);
        };

        let enc_convs = match arch {
            Arch::Vector { .. } => None,
            Arch::Image => {
                let c1 = Conv::new(store, rng, "vae.enc1", (3, 3, 1, 32), (1, 1), PadMode::Same);
                let c2 = Conv::new(store, rng, "vae.enc2", (5, 5, 32, 64), (1, 1), PadMode::Same);
                track(c1.params(), &mut ids);
                track(c2.params(), &mut ids);
                Some((c1, c2))
            }
        };

        // Width of what the mu/sigma heads read: the exclusive code in split
        // mode, the raw encoder features otherwise.
        let feature_dim = match arch {
            Arch::Vector { features } => features,
            Arch::Image => IMAGE_FEATURE_DIM,
        };
        let enc_fc = if split_latent {
            let fc = Dense::new(store, rng, "vae.enc_fc", feature_dim, latent_dim);
            track(fc.params(), &mut ids);
            Some(fc)
        } else {
            None
        };
        let head_in = if split_latent { latent_dim } else { feature_dim };

        let mu_head = Dense::new(store, rng, "vae.mu", head_in, latent_dim);
        track(mu_head.params(), &mut ids);
        let sigma_head = Dense::new(store, rng, "vae.sigma", head_in, latent_dim);
        track(sigma_head.params(), &mut ids);

        let (dec_out, dec_convs) = match arch {
            Arch::Vector { features } => (features, None),
            Arch::Image => {
                let d1 = Conv::new(store, rng, "vae.dec1", (5, 5, 64, 32), (1, 1), PadMode::Same);
                let d2 = Conv::new(store, rng, "vae.dec2", (3, 3, 32, 1), (1, 1), PadMode::Same);
                (IMAGE_FEATURE_DIM, Some((d1, d2)))
            }
        };
        let dec_fc = Dense::new(store, rng, "vae.dec_fc", latent_dim, dec_out);
        track(dec_fc.params(), &mut ids);
        if let Some((d1, d2)) = &dec_convs {
            track(d1.params(), &mut ids);
            track(d2.params(), &mut ids);
        }

        Ok(VaeppNet {
            arch,
            latent_dim,
            split_latent,
            enc_convs,
            enc_fc,
            mu_head,
            sigma_head,
            dec_fc,
            dec_convs,
            ids,
        })
    }

    /// All parameter ids owned by this net, in registration order.
    pub fn params(&self) -> &[ParamId] {
        &self.ids
    }

    fn check_input(&self, x: &Value) -> Result<()> {
        let shape = x.shape();
        match self.arch {
            Arch::Vector { features } => {
                if shape.len() != 2 || shape[1] != features {
                    return Err(Error::shape(
                        "encode",
                        format!("expected [B, {features}] input, got {shape:?}"),
                    ));
                }
            }
            Arch::Image => {
                if shape.len() != 4
                    || shape[1] != IMAGE_SIDE
                    || shape[2] != IMAGE_SIDE
                    || shape[3] != 1
                {
                    return Err(Error::shape(
                        "encode",
                        format!("expected [B, 28, 28, 1] input, got {shape:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Encoder features before any latent head: the input itself for vector
    /// data, flattened conv features for images.
    fn features(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        self.check_input(x)?;
        match self.arch {
            Arch::Vector { .. } => Ok(x.clone()),
            Arch::Image => {
                let (c1, c2) = self.enc_convs.as_ref().expect("image net has conv stack");
                let b = x.shape()[0];
                let h = c1.forward(tape, store, x)?.relu();
                let h = h.maxpool2d((2, 2), (2, 2), PadMode::Same)?;
                let h = c2.forward(tape, store, &h)?.relu();
                let h = h.maxpool2d((2, 2), (2, 2), PadMode::Same)?;
                h.reshape(vec![b, IMAGE_FEATURE_DIM])
            }
        }
    }

    /// What the mu/sigma heads consume: `z_i` in split mode, raw features in
    /// standard mode.
    pub(crate) fn head_input(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        if self.split_latent {
            self.encode(tape, store, x)
        } else {
            self.features(tape, store, x)
        }
    }

    /// The exclusive code `z_i`: a deterministic function of the input and
    /// the weights, consuming no randomness.
    pub fn encode(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        let enc = self.enc_fc.as_ref().ok_or_else(|| {
            Error::contract("standard-VAE ablations have no exclusive code to encode")
        })?;
        let feats = self.features(tape, store, x)?;
        let z = enc.forward(tape, store, &feats)?;
        Ok(match self.arch {
            // The vector encoder is a single ReLU layer; the image encoder's
            // nonlinearity lives in the conv stack and its code layer is
            // linear so codes keep both signs.
            Arch::Vector { .. } => z.relu(),
            Arch::Image => z,
        })
    }

    /// Runs the generator heads on `z` with the given noise draw.
    /// `z` must be whatever [`Self::encode`] (split mode) or the feature
    /// extractor (standard mode) produced.
    pub fn generate_with_eps(
        &self,
        tape: &Tape,
        store: &ParamStore,
        z: &Value,
        eps: Tensor,
    ) -> Result<LatentSample> {
        let b = z.shape()[0];
        if eps.shape() != [b, self.latent_dim] {
            return Err(Error::shape(
                "generate",
                format!(
                    "noise shape {:?} does not match [B, D] = [{b}, {}]",
                    eps.shape(),
                    self.latent_dim
                ),
            ));
        }
        let mu = self.mu_head.forward(tape, store, z)?;
        let sigma = self
            .sigma_head
            .forward(tape, store, z)?
            .softplus()
            .add_scalar(SIGMA_FLOOR);
        let eps_v = tape.input(eps.clone());
        let z_s = mu.add(&sigma.mul(&eps_v)?)?;
        Ok(LatentSample {
            z_i: self.split_latent.then(|| z.clone()),
            mu,
            sigma,
            eps,
            z_s,
        })
    }

    /// Same as [`Self::generate_with_eps`] with standard-normal noise drawn
    /// from `rng`.
    pub fn generate(
        &self,
        tape: &Tape,
        store: &ParamStore,
        z: &Value,
        rng: &mut impl Rng,
    ) -> Result<LatentSample> {
        let eps = sample_standard_normal(&[z.shape()[0], self.latent_dim], rng);
        self.generate_with_eps(tape, store, z, eps)
    }

    /// Reconstructs the input from a sampled code. Linear output for vector
    /// data, sigmoid pixels for images.
    pub fn decode(&self, tape: &Tape, store: &ParamStore, z_s: &Value) -> Result<Value> {
        let shape = z_s.shape();
        if shape.len() != 2 || shape[1] != self.latent_dim {
            return Err(Error::shape(
                "decode",
                format!(
                    "expected [B, {}] latent input, got {shape:?}",
                    self.latent_dim
                ),
            ));
        }
        let h = self.dec_fc.forward(tape, store, z_s)?;
        match self.arch {
            Arch::Vector { .. } => Ok(h),
            Arch::Image => {
                let (d1, d2) = self.dec_convs.as_ref().expect("image net has deconv stack");
                let b = shape[0];
                let h = h.relu().reshape(vec![b, 7, 7, 64])?;
                let h = h.upsample_nearest2d(2)?;
                let h = d1.forward(tape, store, &h)?.relu();
                let h = h.upsample_nearest2d(2)?;
                Ok(d2.forward(tape, store, &h)?.sigmoid())
            }
        }
    }

    /// Encode, sample, and decode with noise from `rng`.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        x: &Value,
        rng: &mut impl Rng,
    ) -> Result<VaeForward> {
        let eps = sample_standard_normal(&[x.shape()[0], self.latent_dim], rng);
        self.forward_with_eps(tape, store, x, eps)
    }

    /// Encode, sample, and decode with a caller-supplied noise tensor.
    pub fn forward_with_eps(
        &self,
        tape: &Tape,
        store: &ParamStore,
        x: &Value,
        eps: Tensor,
    ) -> Result<VaeForward> {
        let head_in = self.head_input(tape, store, x)?;
        let latent = self.generate_with_eps(tape, store, &head_in, eps)?;
        let recon = self.decode(tape, store, &latent.z_s)?;
        Ok(VaeForward { latent, recon })
    }

    /// Variational loss of a forward pass against its input.
    pub fn loss(&self, x: &Value, fwd: &VaeForward) -> Result<VaeLoss> {
        vae_loss(
            self.arch.recon_loss(),
            x,
            &fwd.recon,
            &fwd.latent.mu,
            &fwd.latent.sigma,
        )
    }
}

/// Reconstruction likelihood family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconLoss {
    /// Squared error summed over features (unit-variance Gaussian), for
    /// z-scored vector data.
    SquaredError,
    /// Bernoulli cross-entropy, for pixels in `[0, 1]`.
    Bernoulli,
}

/// Batch-mean loss with its two parts exposed for telemetry.
pub struct VaeLoss {
    pub total: Value,
    pub recon: Value,
    pub kl: Value,
}

/// `recon + KL`, both averaged over the batch. The reconstruction term sums
/// over features per sample; the KL term is the closed form
/// `0.5 * sum(mu^2 + sigma^2 - ln sigma^2 - 1)` against a standard normal.
pub fn vae_loss(
    kind: ReconLoss,
    x: &Value,
    recon: &Value,
    mu: &Value,
    sigma: &Value,
) -> Result<VaeLoss> {
    if x.shape() != recon.shape() {
        return Err(Error::shape(
            "vae_loss",
            format!(
                "input shape {:?} does not match reconstruction {:?}",
                x.shape(),
                recon.shape()
            ),
        ));
    }
    if mu.shape() != sigma.shape() {
        return Err(Error::shape(
            "vae_loss",
            format!(
                "mu shape {:?} does not match sigma {:?}",
                mu.shape(),
                sigma.shape()
            ),
        ));
    }
    if sigma.tensor().iter().any(|&s| s <= 0.0) {
        return Err(Error::domain("vae_loss", "sigma must be strictly positive"));
    }

    let b = x.shape().first().copied().unwrap_or(0);
    let feat: usize = x.shape().iter().skip(1).product();
    let inv_b = 1.0 / b.max(1) as f64;
    let xf = x.reshape(vec![b, feat])?;
    let rf = recon.reshape(vec![b, feat])?;

    let recon_term = match kind {
        ReconLoss::SquaredError => {
            let d = rf.sub(&xf)?;
            d.mul(&d)?.row_sums()?.sum_all().scale(inv_b)
        }
        ReconLoss::Bernoulli => {
            let p = rf.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)?;
            let hit = xf.mul(&p.log()?)?;
            let miss = xf.neg().add_scalar(1.0).mul(&p.neg().add_scalar(1.0).log()?)?;
            hit.add(&miss)?.neg().row_sums()?.sum_all().scale(inv_b)
        }
    };

    let s2 = sigma.mul(sigma)?;
    let inner = mu.mul(mu)?.add(&s2)?.sub(&s2.log()?)?.add_scalar(-1.0);
    let kl = inner.row_sums()?.sum_all().scale(0.5 * inv_b);

    let total = recon_term.add(&kl)?;
    Ok(VaeLoss {
        total,
        recon: recon_term,
        kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{StreamKind, StreamRng};

    fn vector_net(features: usize, split: bool) -> (ParamStore, VaeppNet) {
        let mut store = ParamStore::default();
        let mut rng = StreamRng::new(11).stream(StreamKind::Init, 0);
        let arch = Arch::Vector { features };
        let d = arch.default_latent_dim();
        let net = VaeppNet::new(&mut store, &mut rng, arch, d, split).unwrap();
        (store, net)
    }

    #[test]
    fn default_latent_dim_is_quarter_of_features() {
        assert_eq!(Arch::Vector { features: 40 }.default_latent_dim(), 10);
        assert_eq!(Arch::Vector { features: 10 }.default_latent_dim(), 3);
        assert_eq!(Arch::Image.default_latent_dim(), 32);
    }

    #[test]
    fn encode_is_deterministic_and_shaped() {
        let (store, net) = vector_net(8, true);
        let x = Tensor::new(vec![3, 8], (0..24).map(|v| v as f64 / 24.0).collect()).unwrap();

        let tape = Tape::new();
        let xv = tape.input(x.clone());
        let z1 = net.encode(&tape, &store, &xv).unwrap();
        let z2 = net.encode(&tape, &store, &xv).unwrap();
        assert_eq!(z1.shape(), vec![3, 2]);
        assert_eq!(z1.tensor().data(), z2.tensor().data());

        let empty = tape.input(Tensor::zeros(&[0, 8]));
        let z = net.encode(&tape, &store, &empty).unwrap();
        assert_eq!(z.shape(), vec![0, 2]);
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let (store, net) = vector_net(8, true);
        let tape = Tape::new();
        let xv = tape.input(Tensor::zeros(&[2, 5]));
        assert!(net.encode(&tape, &store, &xv).is_err());
    }

    #[test]
    fn standard_mode_has_no_exclusive_code() {
        let (store, net) = vector_net(8, false);
        let tape = Tape::new();
        let xv = tape.input(Tensor::zeros(&[2, 8]));
        assert!(matches!(
            net.encode(&tape, &store, &xv),
            Err(crate::Error::Contract(_))
        ));
        let fwd = net
            .forward_with_eps(&tape, &store, &xv, Tensor::zeros(&[2, 2]))
            .unwrap();
        assert!(fwd.latent.z_i.is_none());
    }

    #[test]
    fn zero_eps_makes_z_s_equal_mu() {
        let (store, net) = vector_net(6, true);
        let tape = Tape::new();
        let xv = tape.input(Tensor::new(vec![2, 6], vec![0.3; 12]).unwrap());
        let fwd = net
            .forward_with_eps(&tape, &store, &xv, Tensor::zeros(&[2, 2]))
            .unwrap();
        assert_eq!(fwd.latent.z_s.tensor().data(), fwd.latent.mu.tensor().data());
    }

    #[test]
    fn reparameterization_identity_is_exact() {
        let (store, net) = vector_net(6, true);
        let tape = Tape::new();
        let xv = tape.input(Tensor::new(vec![2, 6], vec![0.7; 12]).unwrap());
        let mut rng = StreamRng::new(3).stream(StreamKind::Epsilon, 0);
        let fwd = net.forward(&tape, &store, &xv, &mut rng).unwrap();

        let z_s = fwd.latent.z_s.tensor();
        let mu = fwd.latent.mu.tensor();
        let sigma = fwd.latent.sigma.tensor();
        let eps = &fwd.latent.eps;
        for i in 0..z_s.len() {
            let rebuilt = mu.data()[i] + sigma.data()[i] * eps.data()[i];
            assert_eq!(z_s.data()[i], rebuilt);
        }
        assert!(sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn fresh_noise_changes_z_s() {
        let (store, net) = vector_net(6, true);
        let tape = Tape::new();
        let xv = tape.input(Tensor::new(vec![1, 6], vec![0.5; 6]).unwrap());
        let mut rng = StreamRng::new(9).stream(StreamKind::Epsilon, 0);
        let first = net.forward(&tape, &store, &xv, &mut rng).unwrap();
        for _ in 0..9 {
            let again = net.forward(&tape, &store, &xv, &mut rng).unwrap();
            assert_ne!(
                first.latent.z_s.tensor().data(),
                again.latent.z_s.tensor().data()
            );
        }
    }

    #[test]
    fn zero_decoder_outputs_zero_for_vectors() {
        let (mut store, net) = vector_net(6, true);
        let (w, b) = (net.dec_fc.w, net.dec_fc.b);
        store.set(w, Tensor::zeros(&[2, 6])).unwrap();
        store.set(b, Tensor::zeros(&[6])).unwrap();

        let tape = Tape::new();
        let z = tape.input(Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap());
        let out = net.decode(&tape, &store, &z).unwrap();
        assert!(out.tensor().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kl_examples_match_closed_form() {
        let tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        let recon = tape.input(Tensor::new(vec![1, 1], vec![0.0]).unwrap());

        let mu0 = tape.input(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        let sig1 = tape.input(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let loss = vae_loss(ReconLoss::SquaredError, &x, &recon, &mu0, &sig1).unwrap();
        assert_eq!(loss.kl.item(), 0.0);
        assert_eq!(loss.recon.item(), 0.0);
        assert_eq!(loss.total.item(), 0.0);

        let mu1 = tape.input(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let loss = vae_loss(ReconLoss::SquaredError, &x, &recon, &mu1, &sig1).unwrap();
        assert!((loss.kl.item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recon_is_batch_mean_of_feature_sums() {
        let tape = Tape::new();
        let x = tape.input(Tensor::new(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap());
        let recon = tape.input(Tensor::new(vec![2, 2], vec![1.0, 1.0, 3.0, 0.0]).unwrap());
        let mu = tape.input(Tensor::zeros(&[2, 1]));
        let sigma = tape.input(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let loss = vae_loss(ReconLoss::SquaredError, &x, &recon, &mu, &sigma).unwrap();
        // Rows contribute 1+1 and 9+0; the batch mean is 11/2.
        assert!((loss.recon.item() - 5.5).abs() < 1e-15);
    }

    #[test]
    fn vae_loss_rejects_nonpositive_sigma() {
        let tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 1]));
        let mu = tape.input(Tensor::zeros(&[1, 1]));
        let sigma = tape.input(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        assert!(matches!(
            vae_loss(ReconLoss::SquaredError, &x, &x.clone(), &mu, &sigma),
            Err(crate::Error::Domain { .. })
        ));
    }

    #[test]
    fn bernoulli_loss_is_finite_on_saturated_pixels() {
        let tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap());
        let recon = tape.input(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
        let mu = tape.input(Tensor::zeros(&[1, 1]));
        let sigma = tape.input(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let loss = vae_loss(ReconLoss::Bernoulli, &x, &recon, &mu, &sigma).unwrap();
        assert!(loss.total.item().is_finite());
        // Both pixels sit at the clamp, so the loss is 2*(-ln 1e-7).
        let expect = -2.0 * PROB_CLAMP.ln();
        assert!((loss.recon.item() - expect).abs() < 1e-9);
    }

    #[test]
    fn image_round_trip_has_input_shape() {
        let mut store = ParamStore::default();
        let mut rng = StreamRng::new(5).stream(StreamKind::Init, 0);
        let net = VaeppNet::new(&mut store, &mut rng, Arch::Image, 32, true).unwrap();

        let tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[2, 28, 28, 1]));
        let fwd = net
            .forward_with_eps(&tape, &store, &x, Tensor::zeros(&[2, 32]))
            .unwrap();
        assert_eq!(fwd.latent.mu.shape(), vec![2, 32]);
        assert_eq!(fwd.recon.shape(), vec![2, 28, 28, 1]);
        assert!(fwd.recon.tensor().iter().all(|&p| p > 0.0 && p < 1.0));

        let loss = net.loss(&x, &fwd).unwrap();
        assert!(loss.total.item().is_finite());
    }

    #[test]
    fn image_mode_rejects_wrong_geometry() {
        let mut store = ParamStore::default();
        let mut rng = StreamRng::new(5).stream(StreamKind::Init, 0);
        let net = VaeppNet::new(&mut store, &mut rng, Arch::Image, 32, true).unwrap();
        let tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 27, 28, 1]));
        assert!(net.encode(&tape, &store, &x).is_err());
    }

    #[test]
    fn vector_code_is_nonnegative_from_relu() {
        let (store, net) = vector_net(12, true);
        let tape = Tape::new();
        let mut rng = StreamRng::new(2).stream(StreamKind::Synthetic, 0);
        let x = tape.input(sample_standard_normal(&[5, 12], &mut rng));
        let z = net.encode(&tape, &store, &x).unwrap();
        assert!(z.tensor().iter().all(|&v| v >= 0.0));
    }
}
