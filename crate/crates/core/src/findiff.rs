//! Central finite differences, the independent oracle for every gradient in
//! this crate.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element of `x`.
pub fn finite_diff_gradient(
    f: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    h: f64,
) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut grad = Vec::with_capacity(x.numel());
    let base: Vec<f64> = x.data().to_vec();
    for i in 0..x.numel() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = f(&Tensor::new(x.shape().to_vec(), plus)?);
        let fm = f(&Tensor::new(x.shape().to_vec(), minus)?);
        grad.push((fp - fm) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Same as [`finite_diff_gradient`] but only at the listed flat indices;
/// other slots are zero. Used for end-to-end checks where full sweeps are
/// too slow.
pub fn finite_diff_at(
    f: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    h: f64,
    indices: &[usize],
) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::config(format!("finite-difference step must be > 0, got {h}")));
    }
    let base: Vec<f64> = x.data().to_vec();
    let mut grad = vec![0.0; x.numel()];
    for &i in indices {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fp = f(&Tensor::new(x.shape().to_vec(), plus)?);
        let fm = f(&Tensor::new(x.shape().to_vec(), minus)?);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
pub fn max_relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
