//! Small parameterised building blocks shared by the encoder, decoder, and
//! discriminator nets. Each layer registers its weights in a [`ParamStore`]
//! at construction time and binds them onto a tape at forward time, so the
//! same layer object can be replayed across batches and epochs.

use rand::Rng;

use crate::params::{glorot_uniform, ParamId, ParamStore};
use crate::tensor::{PadMode, Tape, Tensor, Value};
use crate::Result;

/// Fully-connected layer: `y = x W + b`, weights `[in, out]`, bias `[out]`.
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    /// Registers Glorot-initialised weights and a zero bias under
    /// `<name>.w` / `<name>.b`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Dense {
        let w = glorot_uniform(&[in_dim, out_dim], in_dim, out_dim, rng);
        Dense {
            w: store.register(format!("{name}.w"), w),
            b: store.register(format!("{name}.b"), Tensor::zeros(&[out_dim])),
        }
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        x.matmul(&tape.param(store, self.w))?
            .add(&tape.param(store, self.b))
    }

    /// Same affine map with the weights entered as constants, for passes
    /// that must not produce gradients for this layer.
    pub fn forward_frozen(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        x.matmul(&tape.input(store.get(self.w).clone()))?
            .add(&tape.input(store.get(self.b).clone()))
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

/// 2-D convolution layer over `[N, H, W, C]` with per-output-channel bias.
#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub k: ParamId,
    pub b: ParamId,
    stride: (usize, usize),
    pad: PadMode,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        shape: (usize, usize, usize, usize),
        stride: (usize, usize),
        pad: PadMode,
    ) -> Conv {
        let (kh, kw, c_in, c_out) = shape;
        let fan_in = kh * kw * c_in;
        let fan_out = kh * kw * c_out;
        let k = glorot_uniform(&[kh, kw, c_in, c_out], fan_in, fan_out, rng);
        Conv {
            k: store.register(format!("{name}.k"), k),
            b: store.register(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            pad,
        }
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        x.conv2d(&tape.param(store, self.k), self.stride, self.pad)?
            .add(&tape.param(store, self.b))
    }

    pub fn forward_frozen(&self, tape: &Tape, store: &ParamStore, x: &Value) -> Result<Value> {
        x.conv2d(&tape.input(store.get(self.k).clone()), self.stride, self.pad)?
            .add(&tape.input(store.get(self.b).clone()))
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.k, self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::StreamRng;

    #[test]
    fn dense_forward_matches_manual_affine() {
        let mut store = ParamStore::default();
        let mut rng = StreamRng::new(7).stream(crate::tensor::StreamKind::Init, 0);
        let layer = Dense::new(&mut store, &mut rng, "t", 3, 2);
        store
            .set(layer.w, Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        store.set(layer.b, Tensor::new(vec![2], vec![0.5, -0.5]).unwrap()).unwrap();

        let tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 3], vec![1.0, 1.0, 1.0]).unwrap());
        let y = layer.forward(&tape, &store, &x).unwrap();
        assert_eq!(y.tensor().data(), &[9.5, 11.5]);
    }

    #[test]
    fn frozen_forward_leaves_no_param_gradient() {
        let mut store = ParamStore::default();
        let mut rng = StreamRng::new(7).stream(crate::tensor::StreamKind::Init, 0);
        let layer = Dense::new(&mut store, &mut rng, "t", 2, 2);

        let tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let y = layer.forward_frozen(&tape, &store, &x).unwrap();
        let grads = y.sum_all().backward().unwrap();
        assert!(grads.param(layer.w).is_none());
        assert!(grads.param(layer.b).is_none());
    }
}
