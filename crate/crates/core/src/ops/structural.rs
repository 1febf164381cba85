//! Shape plumbing: concatenation, slicing and time-axis access.
//!
//! These carry no arithmetic; their backward passes are pure scatter/gather.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Concatenate along the last axis; all leading axes must agree.
pub fn concat_last_axis(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::contract("concat_last_axis on empty list"));
    }
    let lead = &parts[0].shape()[..parts[0].rank() - 1];
    for p in parts {
        if &p.shape()[..p.rank() - 1] != lead {
            return Err(Error::dimension(format!(
                "concat_last_axis: leading axes differ, {:?} vs {:?}",
                parts[0].shape(),
                p.shape()
            )));
        }
    }
    let rows: usize = lead.iter().product();
    let lasts: Vec<usize> = parts.iter().map(|p| *p.shape().last().unwrap()).collect();
    let total_last: usize = lasts.iter().sum();
    let mut out = Vec::with_capacity(rows * total_last);
    for r in 0..rows {
        for (p, &last) in parts.iter().zip(&lasts) {
            out.extend_from_slice(&p.data()[r * last..(r + 1) * last]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total_last);
    Tensor::new(shape, out)
}

/// Split a last-axis gradient back into the per-part gradients.
pub fn concat_last_axis_backward(part_lasts: &[usize], lead: &[usize], dout: &Tensor) -> Vec<Tensor> {
    let rows: usize = lead.iter().product();
    let total_last: usize = part_lasts.iter().sum();
    let dd = dout.data();
    let mut grads: Vec<Vec<f64>> = part_lasts.iter().map(|&l| Vec::with_capacity(rows * l)).collect();
    for r in 0..rows {
        let mut off = r * total_last;
        for (g, &last) in grads.iter_mut().zip(part_lasts) {
            g.extend_from_slice(&dd[off..off + last]);
            off += last;
        }
    }
    grads
        .into_iter()
        .zip(part_lasts)
        .map(|(g, &last)| {
            let mut shape = lead.to_vec();
            shape.push(last);
            Tensor::new(shape, g).expect("concat grad shape")
        })
        .collect()
}

/// Contiguous slice of the last axis.
pub fn slice_last_axis(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let last = *x.shape().last().expect("rank >= 1");
    if start + len > last || len == 0 {
        return Err(Error::dimension(format!(
            "slice_last_axis [{start}..{}) out of last axis {last}",
            start + len
        )));
    }
    let rows = x.numel() / last;
    let mut out = Vec::with_capacity(rows * len);
    for r in 0..rows {
        out.extend_from_slice(&x.data()[r * last + start..r * last + start + len]);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = len;
    Tensor::new(shape, out)
}

pub fn slice_last_axis_backward(
    input_shape: &[usize],
    start: usize,
    dout: &Tensor,
) -> Tensor {
    let last = *input_shape.last().unwrap();
    let len = *dout.shape().last().unwrap();
    let rows = dout.numel() / len;
    let mut dx = vec![0.0; input_shape.iter().product()];
    for r in 0..rows {
        dx[r * last + start..r * last + start + len]
            .copy_from_slice(&dout.data()[r * len..(r + 1) * len]);
    }
    Tensor::new(input_shape.to_vec(), dx).expect("slice grad shape")
}

/// x[N, T, rest...] -> x[:, t, ...] with shape [N, rest...].
pub fn index_time(x: &Tensor, t: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::dimension(format!(
            "index_time expects a time axis, got {s:?}"
        )));
    }
    let (n, steps) = (s[0], s[1]);
    if t >= steps {
        return Err(Error::contract(format!(
            "index_time: t={t} out of {steps} steps"
        )));
    }
    let rest: usize = s[2..].iter().product();
    let mut out = Vec::with_capacity(n * rest);
    for ni in 0..n {
        let base = (ni * steps + t) * rest;
        out.extend_from_slice(&x.data()[base..base + rest]);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&s[2..]);
    Tensor::new(shape, out)
}

pub fn index_time_backward(input_shape: &[usize], t: usize, dout: &Tensor) -> Tensor {
    let (n, steps) = (input_shape[0], input_shape[1]);
    let rest: usize = input_shape[2..].iter().product();
    let mut dx = vec![0.0; n * steps * rest];
    for ni in 0..n {
        let base = (ni * steps + t) * rest;
        dx[base..base + rest].copy_from_slice(&dout.data()[ni * rest..(ni + 1) * rest]);
    }
    Tensor::new(input_shape.to_vec(), dx).expect("index_time grad shape")
}

/// Stack T tensors of shape [N, rest...] into [N, T, rest...].
pub fn stack_time(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::contract("stack_time on empty list"));
    }
    let s0 = parts[0].shape();
    for p in parts {
        if p.shape() != s0 {
            return Err(Error::dimension(format!(
                "stack_time: step shapes differ, {:?} vs {:?}",
                s0,
                p.shape()
            )));
        }
    }
    let n = s0[0];
    let rest: usize = s0[1..].iter().product();
    let steps = parts.len();
    let mut out = Vec::with_capacity(n * steps * rest);
    for ni in 0..n {
        for p in parts {
            out.extend_from_slice(&p.data()[ni * rest..(ni + 1) * rest]);
        }
    }
    let mut shape = vec![n, steps];
    shape.extend_from_slice(&s0[1..]);
    Tensor::new(shape, out)
}

pub fn stack_time_backward(step_shape: &[usize], steps: usize, dout: &Tensor) -> Vec<Tensor> {
    let n = step_shape[0];
    let rest: usize = step_shape[1..].iter().product();
    let dd = dout.data();
    let mut grads: Vec<Vec<f64>> = (0..steps).map(|_| Vec::with_capacity(n * rest)).collect();
    for ni in 0..n {
        for (t, g) in grads.iter_mut().enumerate() {
            let base = (ni * steps + t) * rest;
            g.extend_from_slice(&dd[base..base + rest]);
        }
    }
    grads
        .into_iter()
        .map(|g| Tensor::new(step_shape.to_vec(), g).expect("stack grad shape"))
        .collect()
}

/// Σ of all elements, as a scalar tensor.
pub fn sum_all(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data().iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_slice_roundtrips() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64);
        let b = Tensor::from_fn(&[2, 2], |i| 100.0 + i as f64);
        let cat = concat_last_axis(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 5]);
        assert!(slice_last_axis(&cat, 0, 3).unwrap().bitwise_eq(&a));
        assert!(slice_last_axis(&cat, 3, 2).unwrap().bitwise_eq(&b));
    }

    #[test]
    fn index_and_stack_time_are_inverse() {
        let x = Tensor::from_fn(&[2, 3, 2, 2], |i| i as f64);
        let steps: Vec<Tensor> = (0..3).map(|t| index_time(&x, t).unwrap()).collect();
        let refs: Vec<&Tensor> = steps.iter().collect();
        let back = stack_time(&refs).unwrap();
        assert!(back.bitwise_eq(&x));
    }
}
