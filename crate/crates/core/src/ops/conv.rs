//! 2-D cross-correlation over NHWC tensors, lowered to im2col + GEMM.
//!
//! Kernels are stored [kh, kw, cin, cout] row-major, which flattens directly
//! into the [kh*kw*cin, cout] matrix the column buffer multiplies against.
//! Batch samples are processed as independent GEMM calls with a fixed
//! per-sample chunking, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// Zero-pad so that out = ceil(in / stride); odd padding goes on the
    /// high side.
    Same,
    /// No padding; out = (in - k) / stride + 1.
    Valid,
}

/// Resolved geometry of one convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.out_h, self.out_w, self.cout]
    }
}

fn same_axis(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let span = (out - 1) * stride + k;
    let pad_total = span.saturating_sub(len);
    (out, pad_total / 2)
}

pub fn conv_geometry(
    input: &[usize],
    kernel: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    if input.len() != 4 {
        return Err(Error::dimension(format!(
            "conv2d input must be [N,H,W,C], got {input:?}"
        )));
    }
    if kernel.len() != 4 {
        return Err(Error::dimension(format!(
            "conv2d kernel must be [kh,kw,cin,cout], got {kernel:?}"
        )));
    }
    if stride == 0 {
        return Err(Error::config("conv2d stride must be positive"));
    }
    let (n, h, w, cin) = (input[0], input[1], input[2], input[3]);
    let (kh, kw, kcin, cout) = (kernel[0], kernel[1], kernel[2], kernel[3]);
    if cin != kcin {
        return Err(Error::dimension(format!(
            "conv2d channel axis: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    let (out_h, out_w, pad_top, pad_left) = match padding {
        Padding::Same => {
            let (oh, pt) = same_axis(h, kh, stride);
            let (ow, pl) = same_axis(w, kw, stride);
            (oh, ow, pt, pl)
        }
        Padding::Valid => {
            if kh > h {
                return Err(Error::dimension(format!(
                    "conv2d height axis: kernel {kh} exceeds input {h} (valid padding)"
                )));
            }
            if kw > w {
                return Err(Error::dimension(format!(
                    "conv2d width axis: kernel {kw} exceeds input {w} (valid padding)"
                )));
            }
            ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
        }
    };
    Ok(ConvGeom {
        n,
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        stride,
        out_h,
        out_w,
        pad_top,
        pad_left,
    })
}

/// y[m,n] (+)= a[m,k] @ b[k,n], arbitrary strides, single-threaded core.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    // Safety: callers guarantee the stride patterns address only in-bounds
    // elements of the passed slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Fill the column buffer for one sample: rows = out_h*out_w, cols = kh*kw*cin.
fn im2col_sample(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let cols = g.kh * g.kw * g.cin;
    debug_assert_eq!(col.len(), g.out_h * g.out_w * cols);
    col.fill(0.0);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = (oy * g.out_w + ox) * cols;
            for ky in 0..g.kh {
                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for kx in 0..g.kw {
                    let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let src = (iy as usize * g.w + ix as usize) * g.cin;
                    let dst = row + (ky * g.kw + kx) * g.cin;
                    col[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                }
            }
        }
    }
}

/// Scatter a column-buffer gradient back onto the input gradient of one sample.
fn col2im_sample(dcol: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let cols = g.kh * g.kw * g.cin;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = (oy * g.out_w + ox) * cols;
            for ky in 0..g.kh {
                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for kx in 0..g.kw {
                    let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let dst = (iy as usize * g.w + ix as usize) * g.cin;
                    let src = row + (ky * g.kw + kx) * g.cin;
                    for c in 0..g.cin {
                        dx[dst + c] += dcol[src + c];
                    }
                }
            }
        }
    }
}

/// Work threshold (multiply-accumulates) below which forking to the thread
/// pool costs more than it saves.
const PAR_MIN_MACS: usize = 3_000_000;

/// Column buffer for the whole batch. Samples are filled in parallel only
/// when the buffer is large; content is position-determined either way, so
/// worker count never changes the result.
fn im2col_batch(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = g.kh * g.kw * g.cin;
    let ohw = g.out_h * g.out_w;
    let in_stride = g.h * g.w * g.cin;
    let mut col = vec![0.0f64; g.n * ohw * cols];
    if g.n > 1 && col.len() >= PAR_MIN_MACS {
        col.par_chunks_mut(ohw * cols)
            .enumerate()
            .for_each(|(s, c)| im2col_sample(&x[s * in_stride..(s + 1) * in_stride], g, c));
    } else {
        for (s, c) in col.chunks_mut(ohw * cols).enumerate() {
            im2col_sample(&x[s * in_stride..(s + 1) * in_stride], g, c);
        }
    }
    col
}

/// C[m,n] = A[m,k] @ B[k,n]; large products run as two fixed row blocks
/// evaluated concurrently. Row-block splitting leaves each output element's
/// inner accumulation order unchanged, so the result is bitwise independent
/// of the split (pinned by a test below).
fn gemm_rows_split(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    if m < 2 || m * k * n < PAR_MIN_MACS {
        gemm(m, k, n, a, rsa, csa, b, rsb, csb, 0.0, c, n as isize, 1);
        return;
    }
    let half = m / 2;
    let (c_lo, c_hi) = c.split_at_mut(half * n);
    let a_hi = &a[half * rsa as usize..];
    rayon::join(
        || gemm(half, k, n, a, rsa, csa, b, rsb, csb, 0.0, c_lo, n as isize, 1),
        || gemm(m - half, k, n, a_hi, rsa, csa, b, rsb, csb, 0.0, c_hi, n as isize, 1),
    );
}

/// Cross-correlation of `input` [N,H,W,Cin] with `kernel` [kh,kw,Cin,Cout]
/// plus an optional per-output-channel bias.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    conv2d_with_col(input, kernel, bias, stride, padding).map(|(out, _)| out)
}

/// [`conv2d`] that also hands back the column buffer so a later backward
/// pass can reuse it.
pub fn conv2d_with_col(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor, Vec<f64>)> {
    let g = conv_geometry(input.shape(), kernel.shape(), stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.cout] {
            return Err(Error::dimension(format!(
                "conv2d bias axis: expected [{}], got {:?}",
                g.cout,
                b.shape()
            )));
        }
    }
    let cols = g.kh * g.kw * g.cin;
    let ohw = g.out_h * g.out_w;
    let rows = g.n * ohw;
    let col = im2col_batch(input.data(), &g);
    let mut out = vec![0.0f64; rows * g.cout];
    gemm_rows_split(
        rows,
        cols,
        g.cout,
        &col,
        cols as isize,
        1,
        kernel.data(),
        g.cout as isize,
        1,
        &mut out,
    );
    if let Some(b) = bias {
        let b = b.data();
        for row in out.chunks_exact_mut(g.cout) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
    }
    Ok((Tensor::new(g.out_shape(), out)?, col))
}

/// Gradients of [`conv2d`] with respect to input, kernel, and bias.
/// `need_dx` skips the input gradient when nothing upstream wants it;
/// `saved_col` reuses the forward pass's column buffer when available.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    g: &ConvGeom,
    dout: &Tensor,
    need_dx: bool,
    saved_col: Option<&[f64]>,
) -> (Option<Tensor>, Tensor, Tensor) {
    let cols = g.kh * g.kw * g.cin;
    let ohw = g.out_h * g.out_w;
    let rows = g.n * ohw;
    let in_stride = g.h * g.w * g.cin;
    let k = kernel.data();
    let dy = dout.data();
    let rebuilt;
    let col: &[f64] = match saved_col {
        Some(c) => c,
        None => {
            rebuilt = im2col_batch(input.data(), &g);
            &rebuilt
        }
    };

    // dK = col^T @ dout: one call keeps the long accumulation order fixed.
    let mut dk = vec![0.0f64; cols * g.cout];
    gemm(
        cols,
        rows,
        g.cout,
        col,
        1,
        cols as isize,
        dy,
        g.cout as isize,
        1,
        0.0,
        &mut dk,
        g.cout as isize,
        1,
    );

    let mut db = vec![0.0f64; g.cout];
    for row in dy.chunks_exact(g.cout) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }

    let dx = need_dx.then(|| {
        // dcol = dout @ K^T, scattered back per sample.
        let mut dcol = vec![0.0f64; rows * cols];
        gemm_rows_split(
            rows,
            g.cout,
            cols,
            dy,
            g.cout as isize,
            1,
            k,
            1,
            g.cout as isize,
            &mut dcol,
        );
        let mut dx = vec![0.0f64; g.n * in_stride];
        if g.n > 1 && dcol.len() >= PAR_MIN_MACS {
            dx.par_chunks_mut(in_stride).enumerate().for_each(|(s, d)| {
                col2im_sample(&dcol[s * ohw * cols..(s + 1) * ohw * cols], &g, d)
            });
        } else {
            for (s, d) in dx.chunks_mut(in_stride).enumerate() {
                col2im_sample(&dcol[s * ohw * cols..(s + 1) * ohw * cols], &g, d);
            }
        }
        Tensor::new(input.shape().to_vec(), dx).expect("dx shape")
    });

    (
        dx,
        Tensor::new(kernel.shape().to_vec(), dk).expect("dk shape"),
        Tensor::new(vec![g.cout], db).expect("db shape"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nested-loop reference, independent of the im2col path.
    fn conv2d_loops(
        x: &Tensor,
        k: &Tensor,
        b: Option<&Tensor>,
        stride: usize,
        padding: Padding,
    ) -> Tensor {
        let g = conv_geometry(x.shape(), k.shape(), stride, padding).unwrap();
        let xd = x.data();
        let kd = k.data();
        let mut out = vec![0.0; g.n * g.out_h * g.out_w * g.cout];
        for n in 0..g.n {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for co in 0..g.cout {
                        let mut acc = b.map_or(0.0, |b| b.data()[co]);
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                                if iy < 0 || iy >= g.h as isize || ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                for ci in 0..g.cin {
                                    let xi = ((n * g.h + iy as usize) * g.w + ix as usize) * g.cin
                                        + ci;
                                    let kk = ((ky * g.kw + kx) * g.cin + ci) * g.cout + co;
                                    acc += xd[xi] * kd[kk];
                                }
                            }
                        }
                        out[((n * g.out_h + oy) * g.out_w + ox) * g.cout + co] = acc;
                    }
                }
            }
        }
        Tensor::new(g.out_shape(), out).unwrap()
    }

    #[test]
    fn one_by_one_kernel_scales() {
        let x = Tensor::filled(&[1, 3, 3, 1], 1.0);
        let k = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let y = conv2d(&x, &k, None, 1, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 1]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn valid_two_by_two_matches_hand_result() {
        let x = Tensor::new(vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = conv2d(&x, &k, None, 1, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn zero_kernel_annihilates() {
        let x = Tensor::from_fn(&[2, 4, 5, 3], |i| i as f64 * 0.1);
        let k = Tensor::zeros(&[3, 3, 3, 4]);
        let y = conv2d(&x, &k, None, 1, Padding::Same).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_padding_preserves_spatial_dims_at_stride_one() {
        for k in 1..=5 {
            let x = Tensor::filled(&[1, 5, 5, 2], 0.3);
            let kernel = Tensor::filled(&[k, k, 2, 3], 0.1);
            let y = conv2d(&x, &kernel, None, 1, Padding::Same).unwrap();
            assert_eq!(&y.shape()[1..3], &[5, 5], "kernel {k}");
        }
    }

    #[test]
    fn strided_same_uses_ceil_division() {
        let x = Tensor::filled(&[1, 5, 7, 1], 1.0);
        let k = Tensor::filled(&[3, 3, 1, 2], 0.2);
        let y = conv2d(&x, &k, None, 2, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[1, 3, 4, 2]);
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let x = Tensor::filled(&[1, 4, 4, 3], 1.0);
        let k = Tensor::filled(&[3, 3, 2, 4], 0.1);
        let err = conv2d(&x, &k, None, 1, Padding::Same).unwrap_err();
        assert!(err.to_string().contains("channel axis"), "{err}");
    }

    #[test]
    fn gemm_path_matches_loop_reference() {
        let mut rng = crate::rng::CounterRng::new(2024);
        for &(n, h, w, cin, kh, kw, cout, stride, pad) in &[
            (2usize, 6usize, 5usize, 3usize, 3usize, 3usize, 4usize, 1usize, Padding::Same),
            (1, 7, 7, 2, 3, 3, 3, 2, Padding::Same),
            (2, 5, 5, 1, 2, 2, 2, 1, Padding::Valid),
            (1, 8, 6, 4, 1, 1, 5, 2, Padding::Same),
            (3, 4, 4, 2, 4, 4, 1, 1, Padding::Valid),
        ] {
            let x = Tensor::from_fn(&[n, h, w, cin], |_| rng.symmetric(1.0));
            let k = Tensor::from_fn(&[kh, kw, cin, cout], |_| rng.symmetric(1.0));
            let b = Tensor::from_fn(&[cout], |_| rng.symmetric(1.0));
            let fast = conv2d(&x, &k, Some(&b), stride, pad).unwrap();
            let slow = conv2d_loops(&x, &k, Some(&b), stride, pad);
            assert!(
                fast.max_abs_diff(&slow) < 1e-12,
                "mismatch for case {n}x{h}x{w}x{cin} k{kh}x{kw} s{stride}"
            );
        }
    }
}
