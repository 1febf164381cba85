//! Pooling over sequence tensors [N, T, H, W, C].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn expect_rank5(x: &Tensor, what: &str) -> Result<[usize; 5]> {
    let s = x.shape();
    if s.len() != 5 {
        return Err(Error::dimension(format!(
            "{what} expects [N,T,H,W,C], got {s:?}"
        )));
    }
    Ok([s[0], s[1], s[2], s[3], s[4]])
}

/// Max pooling with window = stride (floor semantics: trailing remainder
/// along an axis is dropped). Returns the output and the flat argmax index
/// of every output element for the backward pass.
pub fn max_pool3d(x: &Tensor, window: (usize, usize, usize)) -> Result<(Tensor, Vec<u32>)> {
    let [n, t, h, w, c] = expect_rank5(x, "max_pool3d")?;
    let (pt, ph, pw) = window;
    if pt == 0 || ph == 0 || pw == 0 {
        return Err(Error::config("max_pool3d window must be positive"));
    }
    for (axis, (dim, win)) in [(t, pt), (h, ph), (w, pw)].iter().enumerate() {
        if win > dim {
            return Err(Error::dimension(format!(
                "max_pool3d axis {}: window {win} larger than input {dim}",
                axis + 1
            )));
        }
    }
    if x.numel() > u32::MAX as usize {
        return Err(Error::contract("max_pool3d input too large for index map"));
    }
    let (ot, oh, ow) = (t / pt, h / ph, w / pw);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * ot * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    let idx = |ni: usize, ti: usize, hi: usize, wi: usize, ci: usize| {
        (((ni * t + ti) * h + hi) * w + wi) * c + ci
    };
    for ni in 0..n {
        for ti in 0..ot {
            for hi in 0..oh {
                for wi in 0..ow {
                    for ci in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for dt in 0..pt {
                            for dh in 0..ph {
                                for dw in 0..pw {
                                    let i =
                                        idx(ni, ti * pt + dt, hi * ph + dh, wi * pw + dw, ci);
                                    if xd[i] > best {
                                        best = xd[i];
                                        best_idx = i;
                                    }
                                }
                            }
                        }
                        out.push(best);
                        arg.push(best_idx as u32);
                    }
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, ot, oh, ow, c], out)?, arg))
}

pub fn max_pool3d_backward(input_shape: &[usize], argmax: &[u32], dout: &Tensor) -> Tensor {
    let numel: usize = input_shape.iter().product();
    let mut dx = vec![0.0; numel];
    for (&i, &d) in argmax.iter().zip(dout.data()) {
        dx[i as usize] += d;
    }
    Tensor::new(input_shape.to_vec(), dx).expect("max_pool3d dx shape")
}

/// Mean over the T, H, W axes: [N,T,H,W,C] -> [N,C].
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let [n, t, h, w, c] = expect_rank5(x, "global_avg_pool")?;
    let m = (t * h * w) as f64;
    let xd = x.data();
    let mut out = vec![0.0; n * c];
    for ni in 0..n {
        let base = ni * t * h * w * c;
        for row in xd[base..base + t * h * w * c].chunks_exact(c) {
            for (acc, v) in out[ni * c..(ni + 1) * c].iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    for v in &mut out {
        *v /= m;
    }
    Tensor::new(vec![n, c], out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], dout: &Tensor) -> Tensor {
    let (n, t, h, w, c) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
        input_shape[4],
    );
    let m = (t * h * w) as f64;
    let dd = dout.data();
    let mut dx = Vec::with_capacity(n * t * h * w * c);
    for ni in 0..n {
        for _ in 0..t * h * w {
            for ci in 0..c {
                dx.push(dd[ni * c + ci] / m);
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("global_avg_pool dx shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_on_constant_keeps_value() {
        let x = Tensor::filled(&[1, 2, 4, 4, 3], 2.5);
        let (y, _) = max_pool3d(&x, (1, 2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn max_pool_two_by_two() {
        let x = Tensor::new(vec![1, 1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = max_pool3d(&x, (1, 2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn oversized_window_is_dimension_error() {
        let x = Tensor::filled(&[1, 1, 2, 2, 1], 0.0);
        assert!(matches!(
            max_pool3d(&x, (2, 2, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn floor_semantics_drop_remainder() {
        let x = Tensor::filled(&[1, 1, 5, 5, 1], 1.0);
        let (y, _) = max_pool3d(&x, (1, 2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2, 1]);
    }

    #[test]
    fn global_avg_is_the_mean() {
        let x = Tensor::new(vec![1, 1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1]);
        assert!((y.data()[0] - 2.5).abs() < 1e-15);
    }
}
