//! Differentiable operations on tape [`Value`]s.
//!
//! Conventions:
//!
//! * Binary elementwise ops broadcast the right operand when its shape equals
//!   a trailing suffix of the left shape (`[B, N] + [N]`, `[B, H, W, C] + [C]`);
//!   the broadcast operand's gradient sums over the expanded leading dims.
//! * `relu` takes gradient 0 at exactly 0; `clamp` passes gradient on the
//!   closed active interval.
//! * Shape and domain violations are reported as errors before anything is
//!   recorded on the tape.

use super::linalg::{self, ConvGeom, PadMode};
use super::tape::{GradFn, Parent, Value};
use super::Tensor;
use crate::error::{Error, Result};

fn unary(
    v: &Value,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Value {
    let x = v.tensor();
    let y = x.map(&f);
    let xc = x.clone();
    let yc = y.clone();
    let grad: GradFn = Box::new(move |g| {
        let data: Vec<f64> = g
            .data()
            .iter()
            .zip(xc.data().iter().zip(yc.data().iter()))
            .map(|(gi, (&xi, &yi))| gi * df(xi, yi))
            .collect();
        Tensor::new(xc.shape().to_vec(), data).expect("unary grad shape")
    });
    v.tape()
        .push_node(y, vec![Parent { id: v.id(), grad }], false)
}

/// Checks the trailing-suffix broadcast rule and returns the block length of
/// the right operand (equal to its element count).
fn broadcast_len(op: &'static str, a: &Tensor, b: &Tensor) -> Result<usize> {
    let (sa, sb) = (a.shape(), b.shape());
    if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?} (right operand must match a trailing suffix)", sa, sb),
        ));
    }
    Ok(b.len())
}

fn binary(
    a: &Value,
    b: &Value,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
    dfa: impl Fn(f64, f64) -> f64 + 'static,
    dfb: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Value> {
    let at = a.tensor();
    let bt = b.tensor();
    let bl = broadcast_len(op, &at, &bt)?;
    let data: Vec<f64> = if at.is_empty() {
        Vec::new()
    } else {
        at.data()
            .chunks(bl)
            .flat_map(|chunk| {
                chunk
                    .iter()
                    .zip(bt.data().iter())
                    .map(|(&x, &y)| f(x, y))
                    .collect::<Vec<f64>>()
            })
            .collect()
    };
    let out = Tensor::new(at.shape().to_vec(), data)?;

    let (ac, bc) = (at.clone(), bt.clone());
    let ga: GradFn = Box::new(move |g| {
        let data: Vec<f64> = if ac.is_empty() {
            Vec::new()
        } else {
            g.data()
                .chunks(bl)
                .zip(ac.data().chunks(bl))
                .flat_map(|(gc, xc)| {
                    gc.iter()
                        .zip(xc.iter().zip(bc.data().iter()))
                        .map(|(gi, (&x, &y))| gi * dfa(x, y))
                        .collect::<Vec<f64>>()
                })
                .collect()
        };
        Tensor::new(ac.shape().to_vec(), data).expect("binary grad shape")
    });

    let (ac2, bc2) = (at.clone(), bt.clone());
    let gb: GradFn = Box::new(move |g| {
        let mut acc = vec![0.0; bc2.len()];
        if !ac2.is_empty() {
            for (gc, xc) in g.data().chunks(bl).zip(ac2.data().chunks(bl)) {
                for j in 0..bl {
                    acc[j] += gc[j] * dfb(xc[j], bc2.data()[j]);
                }
            }
        }
        Tensor::new(bc2.shape().to_vec(), acc).expect("binary grad shape")
    });

    Ok(a.tape().push_node(
        out,
        vec![
            Parent { id: a.id(), grad: ga },
            Parent { id: b.id(), grad: gb },
        ],
        false,
    ))
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Value {
    pub fn neg(&self) -> Value {
        unary(self, |x| -x, |_, _| -1.0)
    }

    pub fn exp(&self) -> Value {
        unary(self, f64::exp, |_, y| y)
    }

    /// Natural logarithm; every element must be strictly positive.
    pub fn log(&self) -> Result<Value> {
        let t = self.tensor();
        if let Some((i, &x)) = t.iter().enumerate().find(|(_, &x)| x <= 0.0) {
            return Err(Error::domain(
                "log",
                format!("non-positive element {} at flat index {}", x, i),
            ));
        }
        Ok(unary(self, f64::ln, |x, _| 1.0 / x))
    }

    pub fn relu(&self) -> Value {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Value {
        unary(self, stable_sigmoid, |_, y| y * (1.0 - y))
    }

    /// `ln(1 + e^x)`, computed without overflow for large `|x|`.
    pub fn softplus(&self) -> Value {
        unary(self, stable_softplus, |x, _| stable_sigmoid(x))
    }

    /// Clamps into `[lo, hi]`; gradient passes on the closed interval and is
    /// zero where the input was cut off.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Value> {
        if !(lo < hi) {
            return Err(Error::domain(
                "clamp",
                format!("empty interval [{}, {}]", lo, hi),
            ));
        }
        Ok(unary(
            self,
            move |x| x.clamp(lo, hi),
            move |x, _| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        ))
    }

    pub fn scale(&self, c: f64) -> Value {
        unary(self, move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Value {
        unary(self, move |x| x + c, |_, _| 1.0)
    }

    pub fn add(&self, other: &Value) -> Result<Value> {
        binary(self, other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Value) -> Result<Value> {
        binary(self, other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Value) -> Result<Value> {
        binary(self, other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Value) -> Result<Value> {
        binary(
            self,
            other,
            "div",
            |a, b| a / b,
            |_, b| 1.0 / b,
            |a, b| -a / (b * b),
        )
    }

    /// Matrix product of two 2-D tensors `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Value) -> Result<Value> {
        let at = self.tensor();
        let bt = other.tensor();
        if at.ndim() != 2 || bt.ndim() != 2 || at.shape()[1] != bt.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", at.shape(), bt.shape()),
            ));
        }
        let (m, k) = (at.shape()[0], at.shape()[1]);
        let n = bt.shape()[1];
        let mut out = vec![0.0; m * n];
        linalg::gemm(m, k, n, 1.0, at.data(), false, bt.data(), false, 0.0, &mut out);

        let bc = bt.clone();
        let ga: GradFn = Box::new(move |g| {
            // dA = G * B^T
            let mut da = vec![0.0; m * k];
            linalg::gemm(m, n, k, 1.0, g.data(), false, bc.data(), true, 0.0, &mut da);
            Tensor::new(vec![m, k], da).expect("matmul grad shape")
        });
        let ac = at.clone();
        let gb: GradFn = Box::new(move |g| {
            // dB = A^T * G
            let mut db = vec![0.0; k * n];
            linalg::gemm(k, m, n, 1.0, ac.data(), true, g.data(), false, 0.0, &mut db);
            Tensor::new(vec![k, n], db).expect("matmul grad shape")
        });

        Ok(self.tape().push_node(
            Tensor::new(vec![m, n], out)?,
            vec![
                Parent { id: self.id(), grad: ga },
                Parent { id: other.id(), grad: gb },
            ],
            false,
        ))
    }

    /// 2-D convolution of `[N, H, W, C_in]` with kernels
    /// `[KH, KW, C_in, C_out]`, lowered to one matrix product per call.
    pub fn conv2d(&self, kernels: &Value, stride: (usize, usize), pad: PadMode) -> Result<Value> {
        let xt = self.tensor();
        let kt = kernels.tensor();
        if kt.ndim() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("kernels must be [KH, KW, C_in, C_out], got {:?}", kt.shape()),
            ));
        }
        let (kh, kw, kc, c_out) = (kt.shape()[0], kt.shape()[1], kt.shape()[2], kt.shape()[3]);
        let geom = ConvGeom::resolve("conv2d", xt.shape(), kh, kw, stride, pad)?;
        if kc != geom.c_in {
            return Err(Error::shape(
                "conv2d",
                format!("input has {} channels, kernels expect {}", geom.c_in, kc),
            ));
        }
        let rows = geom.cols_rows();
        let width = geom.cols_width();
        // The patch matrix is large and short-lived: it lives in a reused
        // scratch buffer, and gradients recompute it instead of caching it.
        let mut out = vec![0.0; rows * c_out];
        linalg::with_cols_scratch(rows * width, |cols| {
            linalg::im2col_into(xt.data(), &geom, cols);
            linalg::gemm(rows, width, c_out, 1.0, cols, false, kt.data(), false, 0.0, &mut out);
        });

        let xc = xt.clone();
        let gk: GradFn = Box::new(move |g| {
            // dK = cols^T * G
            let mut dk = vec![0.0; width * c_out];
            linalg::with_cols_scratch(rows * width, |cols| {
                linalg::im2col_into(xc.data(), &geom, cols);
                linalg::gemm(width, rows, c_out, 1.0, cols, true, g.data(), false, 0.0, &mut dk);
            });
            Tensor::new(vec![kh, kw, kc, c_out], dk).expect("conv2d grad shape")
        });
        let kc2 = kt.clone();
        let xshape = xt.shape().to_vec();
        let gx: GradFn = Box::new(move |g| {
            // dCols = G * K^T, scattered back onto the input layout.
            let mut dx = vec![0.0; xshape.iter().product()];
            linalg::with_dcols_scratch(rows * width, |dcols| {
                linalg::gemm(rows, c_out, width, 1.0, g.data(), false, kc2.data(), true, 0.0, dcols);
                linalg::col2im_add(dcols, &geom, &mut dx);
            });
            Tensor::new(xshape.clone(), dx).expect("conv2d grad shape")
        });

        Ok(self.tape().push_node(
            Tensor::new(vec![geom.n, geom.oh, geom.ow, c_out], out)?,
            vec![
                Parent { id: self.id(), grad: gx },
                Parent { id: kernels.id(), grad: gk },
            ],
            false,
        ))
    }

    /// Per-channel max pooling over `[N, H, W, C]`.
    pub fn maxpool2d(
        &self,
        window: (usize, usize),
        stride: (usize, usize),
        pad: PadMode,
    ) -> Result<Value> {
        let xt = self.tensor();
        let geom = ConvGeom::resolve("maxpool2d", xt.shape(), window.0, window.1, stride, pad)?;
        let (out, argmax) = linalg::maxpool(xt.data(), &geom);
        let in_len = xt.len();
        let xshape = xt.shape().to_vec();
        let grad: GradFn = Box::new(move |g| {
            let mut dx = vec![0.0; in_len];
            for (o, &src) in argmax.iter().enumerate() {
                dx[src] += g.data()[o];
            }
            Tensor::new(xshape.clone(), dx).expect("maxpool2d grad shape")
        });
        Ok(self.tape().push_node(
            Tensor::new(vec![geom.n, geom.oh, geom.ow, geom.c_in], out)?,
            vec![Parent { id: self.id(), grad }],
            false,
        ))
    }

    /// Nearest-neighbour upsampling of `[N, H, W, C]` by an integer factor.
    pub fn upsample_nearest2d(&self, factor: usize) -> Result<Value> {
        let xt = self.tensor();
        if xt.ndim() != 4 {
            return Err(Error::shape(
                "upsample_nearest2d",
                format!("expected [N, H, W, C], got {:?}", xt.shape()),
            ));
        }
        if factor == 0 {
            return Err(Error::shape("upsample_nearest2d", "zero factor"));
        }
        let (n, h, w, c) = (xt.shape()[0], xt.shape()[1], xt.shape()[2], xt.shape()[3]);
        let (oh, ow) = (h * factor, w * factor);
        let mut out = vec![0.0; n * oh * ow * c];
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = ((ni * h + oy / factor) * w + ox / factor) * c;
                    let dst = ((ni * oh + oy) * ow + ox) * c;
                    out[dst..dst + c].copy_from_slice(&xt.data()[src..src + c]);
                }
            }
        }
        let xshape = xt.shape().to_vec();
        let grad: GradFn = Box::new(move |g| {
            let mut dx = vec![0.0; n * h * w * c];
            for ni in 0..n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let dst = ((ni * h + oy / factor) * w + ox / factor) * c;
                        let src = ((ni * oh + oy) * ow + ox) * c;
                        for ci in 0..c {
                            dx[dst + ci] += g.data()[src + ci];
                        }
                    }
                }
            }
            Tensor::new(xshape.clone(), dx).expect("upsample grad shape")
        });
        Ok(self.tape().push_node(
            Tensor::new(vec![n, oh, ow, c], out)?,
            vec![Parent { id: self.id(), grad }],
            false,
        ))
    }

    /// Row-wise softmax of a 2-D tensor, computed with per-row max shifts.
    pub fn softmax_rows(&self) -> Result<Value> {
        let xt = self.tensor();
        if xt.ndim() != 2 {
            return Err(Error::shape(
                "softmax_rows",
                format!("expected 2-D input, got {:?}", xt.shape()),
            ));
        }
        let (r, c) = (xt.shape()[0], xt.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = xt.row(i);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let dst = &mut out[i * c..(i + 1) * c];
            let mut s = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = (x - m).exp();
                s += *d;
            }
            for d in dst.iter_mut() {
                *d /= s;
            }
        }
        let y = Tensor::new(vec![r, c], out)?;
        let yc = y.clone();
        let grad: GradFn = Box::new(move |g| {
            // dx = y .* (g - <g, y>) per row.
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                let yr = yc.row(i);
                let gr = &g.data()[i * c..(i + 1) * c];
                let dot: f64 = yr.iter().zip(gr).map(|(&y, &g)| y * g).sum();
                for j in 0..c {
                    dx[i * c + j] = yr[j] * (gr[j] - dot);
                }
            }
            Tensor::new(vec![r, c], dx).expect("softmax grad shape")
        });
        Ok(self
            .tape()
            .push_node(y, vec![Parent { id: self.id(), grad }], false))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum_all(&self) -> Value {
        let xt = self.tensor();
        let total: f64 = xt.iter().sum();
        let xshape = xt.shape().to_vec();
        let grad: GradFn = Box::new(move |g| Tensor::full(&xshape, g.item()));
        self.tape().push_node(
            Tensor::scalar(total),
            vec![Parent { id: self.id(), grad }],
            false,
        )
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean_all(&self) -> Value {
        let n = self.tensor().len().max(1);
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Per-row sums of a 2-D tensor: `[R, C] -> [R]`.
    pub fn row_sums(&self) -> Result<Value> {
        let xt = self.tensor();
        if xt.ndim() != 2 {
            return Err(Error::shape(
                "row_sums",
                format!("expected 2-D input, got {:?}", xt.shape()),
            ));
        }
        let (r, c) = (xt.shape()[0], xt.shape()[1]);
        let out: Vec<f64> = (0..r).map(|i| xt.row(i).iter().sum()).collect();
        let grad: GradFn = Box::new(move |g| {
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                dx[i * c..(i + 1) * c].fill(g.data()[i]);
            }
            Tensor::new(vec![r, c], dx).expect("row_sums grad shape")
        });
        Ok(self.tape().push_node(
            Tensor::new(vec![r], out)?,
            vec![Parent { id: self.id(), grad }],
            false,
        ))
    }

    /// Extracts one column of a 2-D tensor: `[R, C] -> [R]`.
    pub fn select_col(&self, col: usize) -> Result<Value> {
        let xt = self.tensor();
        if xt.ndim() != 2 || col >= xt.shape()[1] {
            return Err(Error::shape(
                "select_col",
                format!("column {} of {:?}", col, xt.shape()),
            ));
        }
        let (r, c) = (xt.shape()[0], xt.shape()[1]);
        let out: Vec<f64> = (0..r).map(|i| xt.get2(i, col)).collect();
        let grad: GradFn = Box::new(move |g| {
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                dx[i * c + col] = g.data()[i];
            }
            Tensor::new(vec![r, c], dx).expect("select_col grad shape")
        });
        Ok(self.tape().push_node(
            Tensor::new(vec![r], out)?,
            vec![Parent { id: self.id(), grad }],
            false,
        ))
    }

    /// Gathers leading-dimension slices; repeated indices accumulate gradient.
    pub fn take_rows(&self, idx: &[usize]) -> Result<Value> {
        let xt = self.tensor();
        let out = xt.take_rows(idx)?;
        let idx = idx.to_vec();
        let xshape = xt.shape().to_vec();
        let row_len = xt.row_len();
        let total = xt.len();
        let grad: GradFn = Box::new(move |g| {
            let mut dx = vec![0.0; total];
            for (pos, &i) in idx.iter().enumerate() {
                let src = &g.data()[pos * row_len..(pos + 1) * row_len];
                let dst = &mut dx[i * row_len..(i + 1) * row_len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
            Tensor::new(xshape.clone(), dx).expect("take_rows grad shape")
        });
        Ok(self
            .tape()
            .push_node(out, vec![Parent { id: self.id(), grad }], false))
    }

    /// Right-pads a 2-D tensor with zero columns up to `width`.
    pub fn pad_cols(&self, width: usize) -> Result<Value> {
        let xt = self.tensor();
        if xt.ndim() != 2 {
            return Err(Error::shape(
                "pad_cols",
                format!("expected 2-D input, got {:?}", xt.shape()),
            ));
        }
        let (r, c) = (xt.shape()[0], xt.shape()[1]);
        if width < c {
            return Err(Error::shape(
                "pad_cols",
                format!("target width {} below current {}", width, c),
            ));
        }
        let mut out = vec![0.0; r * width];
        for i in 0..r {
            out[i * width..i * width + c].copy_from_slice(xt.row(i));
        }
        let grad: GradFn = Box::new(move |g| {
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                dx[i * c..(i + 1) * c].copy_from_slice(&g.data()[i * width..i * width + c]);
            }
            Tensor::new(vec![r, c], dx).expect("pad_cols grad shape")
        });
        Ok(self.tape().push_node(
            Tensor::new(vec![r, width], out)?,
            vec![Parent { id: self.id(), grad }],
            false,
        ))
    }

    /// Same elements under a new shape; the element count must not change.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Value> {
        let xt = self.tensor();
        let out = xt.reshaped(shape)?;
        let xshape = xt.shape().to_vec();
        let grad: GradFn = Box::new(move |g| {
            g.reshaped(xshape.clone()).expect("reshape grad shape")
        });
        Ok(self
            .tape()
            .push_node(out, vec![Parent { id: self.id(), grad }], false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn var(tape: &Tape, shape: Vec<usize>, data: Vec<f64>) -> Value {
        tape.var(Tensor::new(shape, data).unwrap())
    }

    #[test]
    fn matmul_hand_value() {
        // [[1,2]] x [[3],[4]] = [[11]]
        let tape = Tape::new();
        let a = var(&tape, vec![1, 2], vec![1.0, 2.0]);
        let b = var(&tape, vec![2, 1], vec![3.0, 4.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), vec![1, 1]);
        assert_eq!(c.item(), 11.0);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let tape = Tape::new();
        let a = var(&tape, vec![1, 3], vec![0.0; 3]);
        let b = var(&tape, vec![2, 1], vec![0.0; 2]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn matmul_gradients_match_hand_result() {
        // loss = sum(A*B), A=[[1,2],[3,4]], B=[[5,6],[7,8]]:
        // dA = G*B^T with G=ones = [[11,15],[11,15]], dB = A^T*G = [[4,4],[6,6]].
        let tape = Tape::new();
        let a = var(&tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = var(&tape, vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let grads = a.matmul(&b).unwrap().sum_all().backward().unwrap();
        assert_eq!(grads.wrt(&a).unwrap().data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(grads.wrt(&b).unwrap().data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn conv2d_valid_hand_value() {
        // [[1,2],[3,4]] with an all-ones 2x2 kernel, valid: single output 10.
        let tape = Tape::new();
        let x = var(&tape, vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let k = var(&tape, vec![2, 2, 1, 1], vec![1.0; 4]);
        let y = x.conv2d(&k, (1, 1), PadMode::Valid).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 1, 1]);
        assert_eq!(y.item(), 10.0);
    }

    #[test]
    fn conv2d_same_pads_bottom_right() {
        // Same 2x2 input and kernel under `Same`: pad cells sit below/right,
        // so windows read [[1,2],[3,4]], [[2,0],[4,0]], [[3,4],[0,0]], [[4,0],[0,0]].
        let tape = Tape::new();
        let x = var(&tape, vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let k = var(&tape, vec![2, 2, 1, 1], vec![1.0; 4]);
        let y = x.conv2d(&k, (1, 1), PadMode::Same).unwrap();
        assert_eq!(y.shape(), vec![1, 2, 2, 1]);
        assert_eq!(y.tensor().data(), &[10.0, 6.0, 7.0, 4.0]);
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let tape = Tape::new();
        let x = var(&tape, vec![1, 2, 2, 2], vec![0.0; 8]);
        let k = var(&tape, vec![2, 2, 1, 1], vec![0.0; 4]);
        assert!(x.conv2d(&k, (1, 1), PadMode::Valid).is_err());
    }

    #[test]
    fn maxpool_and_upsample_shapes() {
        let tape = Tape::new();
        let x = var(&tape, vec![1, 2, 2, 1], vec![1.0, 5.0, 3.0, 2.0]);
        let p = x.maxpool2d((2, 2), (2, 2), PadMode::Same).unwrap();
        assert_eq!(p.shape(), vec![1, 1, 1, 1]);
        assert_eq!(p.item(), 5.0);
        let u = p.upsample_nearest2d(2).unwrap();
        assert_eq!(u.shape(), vec![1, 2, 2, 1]);
        assert_eq!(u.tensor().data(), &[5.0; 4]);
    }

    #[test]
    fn maxpool_gradient_routes_to_argmax() {
        let tape = Tape::new();
        let x = var(&tape, vec![1, 2, 2, 1], vec![1.0, 5.0, 3.0, 2.0]);
        let grads = x
            .maxpool2d((2, 2), (2, 2), PadMode::Same)
            .unwrap()
            .sum_all()
            .backward()
            .unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_hand_value() {
        // exp of [ln 1, ln 2, ln 3] normalizes to [1/6, 2/6, 3/6].
        let tape = Tape::new();
        let x = var(
            &tape,
            vec![1, 3],
            vec![1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()],
        );
        let y = x.softmax_rows().unwrap().tensor();
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (a, e) in y.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_under_extremes() {
        let tape = Tape::new();
        let x = var(&tape, vec![2, 2], vec![1000.0, -1000.0, 3.0, 3.0]);
        let y = x.softmax_rows().unwrap().tensor();
        assert!((y.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(y.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn elementwise_hand_values() {
        let tape = Tape::new();
        let x = var(&tape, vec![3], vec![0.0, -1.0, 2.0]);
        assert_eq!(x.softplus().tensor().data()[0], 2.0f64.ln());
        assert_eq!(x.sigmoid().tensor().data()[0], 0.5);
        assert_eq!(x.relu().tensor().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(x.exp().tensor().data()[0], 1.0);
        assert!(x.log().is_err());
        let c = x.clamp(-0.5, 1.0).unwrap().tensor();
        assert_eq!(c.data(), &[0.0, -0.5, 1.0]);
    }

    #[test]
    fn softplus_is_finite_for_large_inputs() {
        let tape = Tape::new();
        let x = var(&tape, vec![2], vec![800.0, -800.0]);
        let y = x.softplus().tensor();
        assert!((y.data()[0] - 800.0).abs() < 1e-9);
        assert_eq!(y.data()[1], 0.0);
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn broadcast_add_bias_sums_gradient_over_rows() {
        let tape = Tape::new();
        let x = var(&tape, vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = var(&tape, vec![3], vec![10.0, 20.0, 30.0]);
        let y = x.add(&b).unwrap();
        assert_eq!(y.tensor().data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let grads = y.sum_all().backward().unwrap();
        assert_eq!(grads.wrt(&b).unwrap().data(), &[2.0, 2.0, 2.0]);
        assert_eq!(grads.wrt(&x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn broadcast_rejects_non_suffix() {
        let tape = Tape::new();
        let x = var(&tape, vec![2, 3], vec![0.0; 6]);
        let b = var(&tape, vec![2], vec![0.0; 2]);
        assert!(x.add(&b).is_err());
    }

    #[test]
    fn take_rows_accumulates_duplicate_gradient() {
        let tape = Tape::new();
        let x = var(&tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let grads = x
            .take_rows(&[0, 0, 1])
            .unwrap()
            .sum_all()
            .backward()
            .unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn select_and_pad_round_trip() {
        let tape = Tape::new();
        let x = var(&tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let col = x.select_col(1).unwrap();
        assert_eq!(col.tensor().data(), &[2.0, 4.0]);
        let padded = x.pad_cols(4).unwrap();
        assert_eq!(padded.shape(), vec![2, 4]);
        assert_eq!(padded.tensor().data(), &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
        let grads = padded.sum_all().backward().unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[1.0; 4]);
        assert!(x.select_col(2).is_err());
        assert!(x.pad_cols(1).is_err());
    }

    #[test]
    fn empty_batch_flows_through() {
        let tape = Tape::new();
        let x = var(&tape, vec![0, 3], vec![]);
        let w = var(&tape, vec![3, 2], vec![0.5; 6]);
        let y = x.matmul(&w).unwrap();
        assert_eq!(y.shape(), vec![0, 2]);
        let r = y.relu().add_scalar(1.0);
        assert_eq!(r.shape(), vec![0, 2]);
        assert_eq!(r.sum_all().item(), 0.0);
    }

    #[test]
    fn row_sums_and_mean() {
        let tape = Tape::new();
        let x = var(&tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let rs = x.row_sums().unwrap();
        assert_eq!(rs.tensor().data(), &[3.0, 7.0]);
        assert_eq!(x.mean_all().item(), 2.5);
        let grads = rs.sum_all().backward().unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn reshape_backward_restores_shape() {
        let tape = Tape::new();
        let x = var(&tape, vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let flat = x.reshape(vec![1, 4]).unwrap();
        assert_eq!(flat.shape(), vec![1, 4]);
        let grads = flat.sum_all().backward().unwrap();
        assert_eq!(grads.wrt(&x).unwrap().shape(), &[1, 2, 2, 1]);
    }
}
