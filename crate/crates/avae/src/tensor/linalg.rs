//! Dense kernels behind the differentiable ops.
//!
//! Convolutions are lowered to matrix multiplication: patches are gathered
//! into a column matrix (`im2col`), multiplied against the kernel matrix with
//! `matrixmultiply::dgemm`, and gradients are scattered back (`col2im_add`).
//! Layouts are row-major; images are `[N, H, W, C]`, kernels are
//! `[KH, KW, C_in, C_out]`, so a kernel tensor reinterprets directly as a
//! `[KH*KW*C_in, C_out]` matrix.

use std::cell::RefCell;

use crate::error::{Error, Result};

thread_local! {
    // Patch matrices for desk-scale image batches run to hundreds of
    // megabytes, which glibc serves via mmap and unmaps on drop; reusing one
    // grow-only buffer per role keeps the pages mapped across batches.
    static COLS_BUF: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
    static DCOLS_BUF: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

fn with_buf<R>(cell: &'static std::thread::LocalKey<RefCell<Vec<f64>>>, len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    cell.with(|b| {
        let mut buf = b.borrow_mut();
        if buf.len() < len {
            buf.resize(len, 0.0);
        }
        f(&mut buf[..len])
    })
}

/// Runs `f` on a reusable scratch slice for an `im2col` patch matrix. The
/// slice is uninitialized garbage from previous calls; `im2col_into` writes
/// every cell.
pub(crate) fn with_cols_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    with_buf(&COLS_BUF, len, f)
}

/// Scratch for patch-matrix gradients; callers must fully overwrite it.
pub(crate) fn with_dcols_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    with_buf(&DCOLS_BUF, len, f)
}

/// Spatial padding scheme for convolution and pooling.
///
/// `Same` pads with zeros so the output grid has `ceil(input / stride)`
/// cells, splitting any odd padding with the extra cell at the bottom/right.
/// `Valid` places windows only where they fit entirely inside the input.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PadMode {
    Same,
    Valid,
}

/// `c = alpha * op(a) * op(b) + beta * c` for row-major buffers.
///
/// `a` is logically `[m, k]`; if `trans_a` the buffer actually holds the
/// `[k, m]` transpose and is read through swapped strides (and likewise for
/// `b`). No copies are made.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c.iter_mut() {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Resolved geometry of one convolution or pooling application.
#[derive(Copy, Clone, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn resolve(
        op: &'static str,
        input: &[usize],
        kh: usize,
        kw: usize,
        stride: (usize, usize),
        pad: PadMode,
    ) -> Result<ConvGeom> {
        if input.len() != 4 {
            return Err(Error::shape(
                op,
                format!("expected [N, H, W, C] input, got {:?}", input),
            ));
        }
        let (n, h, w, c_in) = (input[0], input[1], input[2], input[3]);
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 || kh == 0 || kw == 0 {
            return Err(Error::shape(op, "zero stride or window"));
        }
        let (oh, ow, pad_top, pad_left) = match pad {
            PadMode::Same => {
                let oh = h.div_ceil(sh);
                let ow = w.div_ceil(sw);
                let pad_h = ((oh - 1) * sh + kh).saturating_sub(h);
                let pad_w = ((ow - 1) * sw + kw).saturating_sub(w);
                (oh, ow, pad_h / 2, pad_w / 2)
            }
            PadMode::Valid => {
                if kh > h || kw > w {
                    return Err(Error::shape(
                        op,
                        format!("window {}x{} larger than input {}x{}", kh, kw, h, w),
                    ));
                }
                ((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0)
            }
        };
        Ok(ConvGeom {
            n,
            h,
            w,
            c_in,
            kh,
            kw,
            sh,
            sw,
            oh,
            ow,
            pad_top,
            pad_left,
        })
    }

    pub fn cols_rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    pub fn cols_width(&self) -> usize {
        self.kh * self.kw * self.c_in
    }
}

/// Gathers convolution patches into a `[N*OH*OW, KH*KW*C]` matrix, reading
/// zeros outside the padded input.
#[cfg(test)]
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut cols = vec![0.0; g.cols_rows() * g.cols_width()];
    im2col_into(x, g, &mut cols);
    cols
}

/// `im2col` into a caller-provided buffer. Writes every cell, so the buffer
/// may hold garbage on entry (allowing scratch reuse).
pub(crate) fn im2col_into(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    debug_assert_eq!(cols.len(), g.cols_rows() * g.cols_width());
    let row_w = g.cols_width();
    let img = g.h * g.w * g.c_in;
    for n in 0..g.n {
        let x_img = &x[n * img..(n + 1) * img];
        for oy in 0..g.oh {
            let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
            for ox in 0..g.ow {
                let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
                let dst_row = (n * g.oh + oy) * g.ow + ox;
                let dst = &mut cols[dst_row * row_w..(dst_row + 1) * row_w];
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    let seg = ky * g.kw * g.c_in;
                    if iy < 0 || iy >= g.h as isize {
                        dst[seg..seg + g.kw * g.c_in].fill(0.0);
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ix0 + kx as isize;
                        let d = seg + kx * g.c_in;
                        if ix < 0 || ix >= g.w as isize {
                            dst[d..d + g.c_in].fill(0.0);
                            continue;
                        }
                        let src = (iy as usize * g.w + ix as usize) * g.c_in;
                        dst[d..d + g.c_in].copy_from_slice(&x_img[src..src + g.c_in]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto the input layout,
/// discarding contributions that fell on padding.
pub(crate) fn col2im_add(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let row_w = g.cols_width();
    let img = g.h * g.w * g.c_in;
    for n in 0..g.n {
        let dx_img = &mut dx[n * img..(n + 1) * img];
        for oy in 0..g.oh {
            let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
            for ox in 0..g.ow {
                let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
                let src_row = (n * g.oh + oy) * g.ow + ox;
                let src = &cols[src_row * row_w..(src_row + 1) * row_w];
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let d = (iy as usize * g.w + ix as usize) * g.c_in;
                        let s = (ky * g.kw + kx) * g.c_in;
                        for c in 0..g.c_in {
                            dx_img[d + c] += src[s + c];
                        }
                    }
                }
            }
        }
    }
}

/// Max pooling forward pass over `[N, H, W, C]`, per channel. Returns the
/// pooled values plus, per output element, the flat input index that won
/// (ties go to the first cell in scan order). Padding cells never win: the
/// maximum is over real cells only, and with `Same` padding every window
/// contains at least one real cell.
pub(crate) fn maxpool(x: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<usize>) {
    let c_n = g.c_in;
    let out_len = g.cols_rows() * c_n;
    let mut out = vec![0.0; out_len];
    let mut arg = vec![0usize; out_len];
    let img = g.h * g.w * c_n;
    for n in 0..g.n {
        let x_img = &x[n * img..(n + 1) * img];
        for oy in 0..g.oh {
            let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
            for ox in 0..g.ow {
                let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
                let o = ((n * g.oh + oy) * g.ow + ox) * c_n;
                let best = &mut out[o..o + c_n];
                let best_i = &mut arg[o..o + c_n];
                best.fill(f64::NEG_INFINITY);
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let i = (iy as usize * g.w + ix as usize) * c_n;
                        for c in 0..c_n {
                            if x_img[i + c] > best[c] {
                                best[c] = x_img[i + c];
                                best_i[c] = n * img + i + c;
                            }
                        }
                    }
                }
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_hand_product() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gemm_transpose_flags_read_swapped_strides() {
        // aT stored as [[1,3],[2,4]] means logical a = [[1,2],[3,4]].
        let a_t = [1.0, 3.0, 2.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, &a_t, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn same_padding_splits_odd_padding_bottom_right() {
        // 7 -> ceil(7/2) = 4 outputs with a 2-wide window: 1 pad cell, all of
        // it below/right (pad_top = 0).
        let g = ConvGeom::resolve("maxpool2d", &[1, 7, 7, 1], 2, 2, (2, 2), PadMode::Same)
            .unwrap();
        assert_eq!((g.oh, g.ow), (4, 4));
        assert_eq!((g.pad_top, g.pad_left), (0, 0));

        // 28 with 3x3 stride 1: 2 pad cells split 1 above, 1 below.
        let g = ConvGeom::resolve("conv2d", &[1, 28, 28, 1], 3, 3, (1, 1), PadMode::Same)
            .unwrap();
        assert_eq!((g.oh, g.ow), (28, 28));
        assert_eq!((g.pad_top, g.pad_left), (1, 1));
    }

    #[test]
    fn valid_mode_rejects_oversized_window() {
        let r = ConvGeom::resolve("conv2d", &[1, 2, 2, 1], 3, 3, (1, 1), PadMode::Valid);
        assert!(r.is_err());
    }

    #[test]
    fn im2col_col2im_round_trip_counts_window_coverage() {
        // col2im(ones-like cols) counts how many windows cover each input
        // cell. For 3x3 valid conv over 4x4, the center 2x2 is covered by
        // four windows each.
        let g = ConvGeom::resolve("conv2d", &[1, 4, 4, 1], 3, 3, (1, 1), PadMode::Valid)
            .unwrap();
        let x = vec![1.0; 16];
        let cols = im2col(&x, &g);
        assert_eq!(cols.len(), g.cols_rows() * g.cols_width());
        let mut dx = vec![0.0; 16];
        col2im_add(&cols, &g, &mut dx);
        assert_eq!(dx[5], 4.0);
        assert_eq!(dx[0], 1.0);
    }

    #[test]
    fn maxpool_records_first_argmax_on_ties() {
        let g = ConvGeom::resolve("maxpool2d", &[1, 2, 2, 1], 2, 2, (2, 2), PadMode::Same)
            .unwrap();
        let (out, arg) = maxpool(&[7.0, 7.0, 1.0, 2.0], &g);
        assert_eq!(out, vec![7.0]);
        assert_eq!(arg, vec![0]);
    }
}
