//! Fully connected affine map.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// x[N,F] @ w[F,U] + b[U].
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 2 || ws.len() != 2 {
        return Err(Error::dimension(format!(
            "dense expects x[N,F] and w[F,U], got {xs:?} and {ws:?}"
        )));
    }
    let (n, f, u) = (xs[0], xs[1], ws[1]);
    if ws[0] != f {
        return Err(Error::dimension(format!(
            "dense feature axis: x has {f}, w expects {}",
            ws[0]
        )));
    }
    if b.shape() != [u] {
        return Err(Error::dimension(format!(
            "dense bias axis: expected [{u}], got {:?}",
            b.shape()
        )));
    }
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = Vec::with_capacity(n * u);
    for row in xd.chunks_exact(f) {
        for j in 0..u {
            let mut acc = bd[j];
            for (i, &xi) in row.iter().enumerate() {
                acc += xi * wd[i * u + j];
            }
            out.push(acc);
        }
    }
    Tensor::new(vec![n, u], out)
}

/// Gradients of [`dense`]: (dx, dw, db).
pub fn dense_backward(x: &Tensor, w: &Tensor, dout: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let u = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let dd = dout.data();
    let mut dx = vec![0.0; n * f];
    let mut dw = vec![0.0; f * u];
    let mut db = vec![0.0; u];
    for s in 0..n {
        for j in 0..u {
            let d = dd[s * u + j];
            db[j] += d;
            for i in 0..f {
                dx[s * f + i] += d * wd[i * u + j];
                dw[i * u + j] += d * xd[s * f + i];
            }
        }
    }
    (
        Tensor::new(vec![n, f], dx).expect("dx shape"),
        Tensor::new(vec![f, u], dw).expect("dw shape"),
        Tensor::new(vec![u], db).expect("db shape"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let b = Tensor::zeros(&[3]);
        let y = dense(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weights_broadcast_bias() {
        let x = Tensor::filled(&[3, 2], 9.0);
        let w = Tensor::zeros(&[2, 2]);
        let b = Tensor::new(vec![2], vec![0.5, -1.0]).unwrap();
        let y = dense(&x, &w, &b).unwrap();
        for row in y.data().chunks_exact(2) {
            assert_eq!(row, &[0.5, -1.0]);
        }
    }

    #[test]
    fn hand_matvec() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![0.5]).unwrap();
        let y = dense(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[-0.5]);
    }

    #[test]
    fn feature_mismatch_is_dimension_error() {
        let x = Tensor::zeros(&[1, 3]);
        let w = Tensor::zeros(&[2, 4]);
        let b = Tensor::zeros(&[4]);
        assert!(matches!(dense(&x, &w, &b), Err(Error::Dimension(_))));
    }
}
