//! Element-wise forward kernels and their local derivatives.

use crate::error::{Error, Result};
use crate::tensor::{check_same_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Hadamard,
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Sigmoid => x.map(sigmoid_scalar),
        Activation::Tanh => x.map(f64::tanh),
        Activation::Relu => x.map(|v| v.max(0.0)),
    }
}

/// d(activation)/dx expressed through the saved forward output `y`.
pub fn activation_backward(kind: Activation, y: &Tensor, dout: &Tensor) -> Tensor {
    let yd = y.data();
    let dd = dout.data();
    let grad: Vec<f64> = match kind {
        Activation::Sigmoid => yd.iter().zip(dd).map(|(&y, &d)| d * y * (1.0 - y)).collect(),
        Activation::Tanh => yd.iter().zip(dd).map(|(&y, &d)| d * (1.0 - y * y)).collect(),
        Activation::Relu => yd.iter().zip(dd).map(|(&y, &d)| if y > 0.0 { d } else { 0.0 }).collect(),
    };
    Tensor::new(y.shape().to_vec(), grad).expect("activation grad shape")
}

pub fn elementwise(a: &Tensor, b: &Tensor, kind: Elementwise) -> Result<Tensor> {
    check_same_shape("elementwise", a.shape(), b.shape())?;
    let data: Vec<f64> = match kind {
        Elementwise::Add => a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
        Elementwise::Hadamard => a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
    };
    Tensor::new(a.shape().to_vec(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    elementwise(a, b, Elementwise::Add)
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    elementwise(a, b, Elementwise::Hadamard)
}

/// w ∘ x where `w` matches `x` minus the leading batch axis and broadcasts
/// over it. Used for peephole terms.
pub fn mul_broadcast_batch(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    if x.rank() < 2 || w.shape() != &x.shape()[1..] {
        return Err(Error::dimension(format!(
            "broadcast multiply: weight {:?} does not match {:?} minus batch axis",
            w.shape(),
            x.shape()
        )));
    }
    let per = w.numel();
    let data: Vec<f64> = x
        .data()
        .chunks_exact(per)
        .flat_map(|chunk| chunk.iter().zip(w.data()).map(|(x, w)| x * w))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Gradients of [`mul_broadcast_batch`]: (dw summed over batch, dx).
pub fn mul_broadcast_batch_backward(w: &Tensor, x: &Tensor, dout: &Tensor) -> (Tensor, Tensor) {
    let per = w.numel();
    let mut dw = vec![0.0; per];
    let mut dx = vec![0.0; x.numel()];
    for (chunk_i, (xc, dc)) in x
        .data()
        .chunks_exact(per)
        .zip(dout.data().chunks_exact(per))
        .enumerate()
    {
        let base = chunk_i * per;
        for i in 0..per {
            dw[i] += dc[i] * xc[i];
            dx[base + i] = dc[i] * w.data()[i];
        }
    }
    (
        Tensor::new(w.shape().to_vec(), dw).expect("dw shape"),
        Tensor::new(x.shape().to_vec(), dx).expect("dx shape"),
    )
}
