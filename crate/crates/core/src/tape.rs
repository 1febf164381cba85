//! Wengert tape: reverse-mode differentiation by operation recording.
//!
//! Forward calls go through the tape methods, which run the pure kernels
//! from [`crate::ops`] and append one node per produced tensor. `backward`
//! consumes the tape, walking the nodes in exact reverse execution order and
//! accumulating vector-Jacobian products. A tensor that never feeds the loss
//! keeps a `None` slot, which [`Gradients::get`] reports as zeros.
//!
//! One tape serves one training step and is never shared across threads;
//! kernels may parallelize internally, which does not affect the recording
//! order.

use crate::error::{Error, Result};
use crate::ops::batchnorm::{
    batch_norm_infer_backward, batch_norm_train_backward, BatchStats,
};
use crate::ops::conv::{conv2d_backward, ConvGeom};
use crate::ops::dense::dense_backward;
use crate::ops::dropout::dropout_backward;
use crate::ops::loss::bce_loss_backward;
use crate::ops::pointwise::{
    activation_backward, mul_broadcast_batch_backward, Activation, Elementwise,
};
use crate::ops::pool::{global_avg_pool_backward, max_pool3d_backward};
use crate::ops::structural::{
    concat_last_axis_backward, index_time_backward, slice_last_axis_backward,
    stack_time_backward,
};
use crate::ops::{self, Padding};
use crate::tensor::Tensor;

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Node {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        b: Option<Var>,
        geom: ConvGeom,
        col: Vec<f64>,
    },
    Activation {
        x: Var,
        kind: Activation,
    },
    Elementwise {
        a: Var,
        b: Var,
        kind: Elementwise,
    },
    MulBcast {
        w: Var,
        x: Var,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        epsilon: f64,
        stats: BatchStats,
    },
    BatchNormInfer {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Tensor,
        var: Tensor,
        epsilon: f64,
    },
    Dropout {
        x: Var,
        rate: f64,
        key: u64,
    },
    MaxPool3d {
        x: Var,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        x: Var,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    ConcatLast {
        parts: Vec<Var>,
    },
    SliceLast {
        x: Var,
        start: usize,
    },
    IndexTime {
        x: Var,
        t: usize,
    },
    StackTime {
        parts: Vec<Var>,
    },
    SumAll {
        x: Var,
    },
    Bce {
        p: Var,
        labels: Vec<u8>,
    },
    Reshape {
        x: Var,
    },
    LstmState {
        pre: Var,
        c_prev: Var,
        peep_i: Option<Var>,
        peep_f: Option<Var>,
        gate_i: Tensor,
        gate_f: Tensor,
        c_tilde: Tensor,
    },
    LstmOut {
        pre: Var,
        c: Var,
        peep_o: Option<Var>,
        gate_o: Tensor,
        tanh_c: Tensor,
    },
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<Tensor>,
    requires: Vec<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, node: Node, value: Tensor, requires: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.vals.push(value);
        self.requires.push(requires);
        Var(id)
    }

    #[inline]
    fn req(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Record a differentiable leaf (parameters, tensors under test).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Node::Leaf, value, true)
    }

    /// Record a non-differentiated leaf (batches, constants). Gradient
    /// computation is pruned below such tensors.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Node::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        k: Var,
        b: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let geom = ops::conv_geometry(
            self.vals[x.0].shape(),
            self.vals[k.0].shape(),
            stride,
            padding,
        )?;
        let (out, col) = ops::conv::conv2d_with_col(
            &self.vals[x.0],
            &self.vals[k.0],
            b.map(|b| &self.vals[b.0]),
            stride,
            padding,
        )?;
        let req = self.req(x) || self.req(k) || b.is_some_and(|b| self.req(b));
        Ok(self.push(Node::Conv2d { x, k, b, geom, col }, out, req))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = ops::activation(&self.vals[x.0], kind);
        let req = self.req(x);
        self.push(Node::Activation { x, kind }, out, req)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: Elementwise) -> Result<Var> {
        let out = ops::elementwise(&self.vals[a.0], &self.vals[b.0], kind)?;
        let req = self.req(a) || self.req(b);
        Ok(self.push(Node::Elementwise { a, b, kind }, out, req))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Add)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Hadamard)
    }

    /// Peephole-style product: `w` broadcasts over the batch axis of `x`.
    pub fn mul_broadcast_batch(&mut self, w: Var, x: Var) -> Result<Var> {
        let out = ops::mul_broadcast_batch(&self.vals[w.0], &self.vals[x.0])?;
        let req = self.req(w) || self.req(x);
        Ok(self.push(Node::MulBcast { w, x }, out, req))
    }

    /// Train-mode batch norm. Returns the output and the batch statistics
    /// so the caller can fold them into the moving averages.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        epsilon: f64,
    ) -> Result<(Var, BatchStats)> {
        let (out, stats) = ops::batch_norm_train(
            &self.vals[x.0],
            &self.vals[gamma.0],
            &self.vals[beta.0],
            epsilon,
        )?;
        let ret = stats.clone();
        let req = self.req(x) || self.req(gamma) || self.req(beta);
        let v = self.push(
            Node::BatchNormTrain {
                x,
                gamma,
                beta,
                epsilon,
                stats,
            },
            out,
            req,
        );
        Ok((v, ret))
    }

    /// Inference-mode batch norm with fixed moving statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        moving_mean: &Tensor,
        moving_var: &Tensor,
        epsilon: f64,
    ) -> Result<Var> {
        let out = ops::batch_norm_infer(
            &self.vals[x.0],
            &self.vals[gamma.0],
            &self.vals[beta.0],
            moving_mean,
            moving_var,
            epsilon,
        )?;
        let req = self.req(x) || self.req(gamma) || self.req(beta);
        Ok(self.push(
            Node::BatchNormInfer {
                x,
                gamma,
                beta,
                mean: moving_mean.clone(),
                var: moving_var.clone(),
                epsilon,
            },
            out,
            req,
        ))
    }

    pub fn dropout_train(&mut self, x: Var, rate: f64, key: u64) -> Result<Var> {
        let out = ops::dropout_train(&self.vals[x.0], rate, key)?;
        let req = self.req(x);
        Ok(self.push(Node::Dropout { x, rate, key }, out, req))
    }

    pub fn max_pool3d(&mut self, x: Var, window: (usize, usize, usize)) -> Result<Var> {
        let (out, argmax) = ops::max_pool3d(&self.vals[x.0], window)?;
        let req = self.req(x);
        Ok(self.push(Node::MaxPool3d { x, argmax }, out, req))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let out = ops::global_avg_pool(&self.vals[x.0])?;
        let req = self.req(x);
        Ok(self.push(Node::GlobalAvgPool { x }, out, req))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::dense(&self.vals[x.0], &self.vals[w.0], &self.vals[b.0])?;
        let req = self.req(x) || self.req(w) || self.req(b);
        Ok(self.push(Node::Dense { x, w, b }, out, req))
    }

    pub fn concat_last_axis(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| &self.vals[v.0]).collect();
        let out = ops::concat_last_axis(&tensors)?;
        let req = parts.iter().any(|v| self.req(*v));
        Ok(self.push(
            Node::ConcatLast {
                parts: parts.to_vec(),
            },
            out,
            req,
        ))
    }

    pub fn slice_last_axis(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = ops::slice_last_axis(&self.vals[x.0], start, len)?;
        let req = self.req(x);
        Ok(self.push(Node::SliceLast { x, start }, out, req))
    }

    pub fn index_time(&mut self, x: Var, t: usize) -> Result<Var> {
        let out = ops::index_time(&self.vals[x.0], t)?;
        let req = self.req(x);
        Ok(self.push(Node::IndexTime { x, t }, out, req))
    }

    pub fn stack_time(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| &self.vals[v.0]).collect();
        let out = ops::stack_time(&tensors)?;
        let req = parts.iter().any(|v| self.req(*v));
        Ok(self.push(
            Node::StackTime {
                parts: parts.to_vec(),
            },
            out,
            req,
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = ops::sum_all(&self.vals[x.0]);
        let req = self.req(x);
        self.push(Node::SumAll { x }, out, req)
    }

    pub fn bce_loss(&mut self, p: Var, labels: &[u8]) -> Result<Var> {
        let loss = ops::bce_loss(&self.vals[p.0], labels)?;
        let req = self.req(p);
        Ok(self.push(
            Node::Bce {
                p,
                labels: labels.to_vec(),
            },
            Tensor::scalar(loss),
            req,
        ))
    }

    /// Zero-copy reshape.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.vals[x.0].reshape(shape)?;
        let req = self.req(x);
        Ok(self.push(Node::Reshape { x }, out, req))
    }

    /// Fused state update of the recurrent cell: consumes the [i|f|c|o]
    /// pre-activation block and the previous cell state, returns the new
    /// cell state.
    pub fn lstm_state(
        &mut self,
        pre: Var,
        c_prev: Var,
        peep_i: Option<Var>,
        peep_f: Option<Var>,
    ) -> Result<Var> {
        let out = crate::ops::lstm_gates::lstm_state_forward(
            &self.vals[pre.0],
            &self.vals[c_prev.0],
            peep_i.map(|v| &self.vals[v.0]),
            peep_f.map(|v| &self.vals[v.0]),
        )?;
        let req = self.req(pre)
            || self.req(c_prev)
            || peep_i.is_some_and(|v| self.req(v))
            || peep_f.is_some_and(|v| self.req(v));
        Ok(self.push(
            Node::LstmState {
                pre,
                c_prev,
                peep_i,
                peep_f,
                gate_i: out.gate_i,
                gate_f: out.gate_f,
                c_tilde: out.c_tilde,
            },
            out.c,
            req,
        ))
    }

    /// Fused output of the recurrent cell: hidden state from the
    /// pre-activation block and the fresh cell state.
    pub fn lstm_out(&mut self, pre: Var, c: Var, peep_o: Option<Var>) -> Result<Var> {
        let out = crate::ops::lstm_gates::lstm_out_forward(
            &self.vals[pre.0],
            &self.vals[c.0],
            peep_o.map(|v| &self.vals[v.0]),
        )?;
        let req = self.req(pre) || self.req(c) || peep_o.is_some_and(|v| self.req(v));
        Ok(self.push(
            Node::LstmOut {
                pre,
                c,
                peep_o,
                gate_o: out.gate_o,
                tanh_c: out.tanh_c,
            },
            out.h,
            req,
        ))
    }

    /// Consume the tape, returning d(loss)/d(v) for every recorded tensor.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.vals[loss.0].numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.vals[loss.0].shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        let acc = |grads: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| {
            match &mut grads[v.0] {
                Some(existing) => {
                    *existing = ops::add(existing, &g).expect("gradient shape");
                }
                slot @ None => *slot = Some(g),
            }
        };

        for i in (0..n).rev() {
            if !self.requires[i] {
                continue;
            }
            let Some(d) = grads[i].clone() else { continue };
            match &self.nodes[i] {
                Node::Leaf => {}
                Node::Conv2d { x, k, b, geom, col } => {
                    let (dx, dk, db) = conv2d_backward(
                        &self.vals[x.0],
                        &self.vals[k.0],
                        geom,
                        &d,
                        self.requires[x.0],
                        Some(col),
                    );
                    if let Some(dx) = dx {
                        acc(&mut grads, *x, dx);
                    }
                    if self.requires[k.0] {
                        acc(&mut grads, *k, dk);
                    }
                    if let Some(b) = b {
                        acc(&mut grads, *b, db);
                    }
                }
                Node::Activation { x, kind } => {
                    let dx = activation_backward(*kind, &self.vals[i], &d);
                    acc(&mut grads, *x, dx);
                }
                Node::Elementwise { a, b, kind } => match kind {
                    Elementwise::Add => {
                        acc(&mut grads, *a, d.clone());
                        acc(&mut grads, *b, d);
                    }
                    Elementwise::Hadamard => {
                        let da = ops::hadamard(&d, &self.vals[b.0]).expect("shape");
                        let db = ops::hadamard(&d, &self.vals[a.0]).expect("shape");
                        acc(&mut grads, *a, da);
                        acc(&mut grads, *b, db);
                    }
                },
                Node::MulBcast { w, x } => {
                    let (dw, dx) =
                        mul_broadcast_batch_backward(&self.vals[w.0], &self.vals[x.0], &d);
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *x, dx);
                }
                Node::BatchNormTrain {
                    x,
                    gamma,
                    beta,
                    epsilon,
                    stats,
                } => {
                    let (dx, dgamma, dbeta) = batch_norm_train_backward(
                        &self.vals[x.0],
                        &self.vals[gamma.0],
                        stats,
                        *epsilon,
                        &d,
                    );
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Node::BatchNormInfer {
                    x,
                    gamma,
                    beta,
                    mean,
                    var,
                    epsilon,
                } => {
                    let (dx, dgamma, dbeta) = batch_norm_infer_backward(
                        &self.vals[x.0],
                        &self.vals[gamma.0],
                        mean,
                        var,
                        *epsilon,
                        &d,
                    );
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Node::Dropout { x, rate, key } => {
                    let dx = dropout_backward(*rate, *key, &d);
                    acc(&mut grads, *x, dx);
                }
                Node::MaxPool3d { x, argmax } => {
                    let dx = max_pool3d_backward(self.vals[x.0].shape(), argmax, &d);
                    acc(&mut grads, *x, dx);
                }
                Node::GlobalAvgPool { x } => {
                    let dx = global_avg_pool_backward(self.vals[x.0].shape(), &d);
                    acc(&mut grads, *x, dx);
                }
                Node::Dense { x, w, b } => {
                    let (dx, dw, db) = dense_backward(&self.vals[x.0], &self.vals[w.0], &d);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *b, db);
                }
                Node::ConcatLast { parts } => {
                    let lasts: Vec<usize> = parts
                        .iter()
                        .map(|p| *self.vals[p.0].shape().last().unwrap())
                        .collect();
                    let lead = &self.vals[parts[0].0].shape()
                        [..self.vals[parts[0].0].rank() - 1];
                    let gs = concat_last_axis_backward(&lasts, lead, &d);
                    for (p, g) in parts.iter().zip(gs) {
                        acc(&mut grads, *p, g);
                    }
                }
                Node::SliceLast { x, start } => {
                    let dx = slice_last_axis_backward(self.vals[x.0].shape(), *start, &d);
                    acc(&mut grads, *x, dx);
                }
                Node::IndexTime { x, t } => {
                    let dx = index_time_backward(self.vals[x.0].shape(), *t, &d);
                    acc(&mut grads, *x, dx);
                }
                Node::StackTime { parts } => {
                    let step_shape = self.vals[parts[0].0].shape().to_vec();
                    let gs = stack_time_backward(&step_shape, parts.len(), &d);
                    for (p, g) in parts.iter().zip(gs) {
                        acc(&mut grads, *p, g);
                    }
                }
                Node::SumAll { x } => {
                    let dv = d.item().expect("scalar");
                    acc(
                        &mut grads,
                        *x,
                        Tensor::filled(self.vals[x.0].shape(), dv),
                    );
                }
                Node::Bce { p, labels } => {
                    let dv = d.item().expect("scalar");
                    let dp = bce_loss_backward(&self.vals[p.0], labels, dv);
                    acc(&mut grads, *p, dp);
                }
                Node::Reshape { x } => {
                    let dx = d
                        .reshape(self.vals[x.0].shape().to_vec())
                        .expect("reshape grad");
                    acc(&mut grads, *x, dx);
                }
                Node::LstmState {
                    pre,
                    c_prev,
                    peep_i,
                    peep_f,
                    gate_i,
                    gate_f,
                    c_tilde,
                } => {
                    let (dpre, dc_prev, dpi, dpf) =
                        crate::ops::lstm_gates::lstm_state_backward(
                            gate_i,
                            gate_f,
                            c_tilde,
                            &self.vals[c_prev.0],
                            peep_i.map(|v| &self.vals[v.0]),
                            peep_f.map(|v| &self.vals[v.0]),
                            &d,
                        );
                    acc(&mut grads, *pre, dpre);
                    acc(&mut grads, *c_prev, dc_prev);
                    if let (Some(v), Some(g)) = (peep_i, dpi) {
                        acc(&mut grads, *v, g);
                    }
                    if let (Some(v), Some(g)) = (peep_f, dpf) {
                        acc(&mut grads, *v, g);
                    }
                }
                Node::LstmOut {
                    pre,
                    c,
                    peep_o,
                    gate_o,
                    tanh_c,
                } => {
                    let (dpre, dc, dpo) = crate::ops::lstm_gates::lstm_out_backward(
                        gate_o,
                        tanh_c,
                        &self.vals[c.0],
                        peep_o.map(|v| &self.vals[v.0]),
                        &d,
                    );
                    acc(&mut grads, *pre, dpre);
                    acc(&mut grads, *c, dc);
                    if let (Some(v), Some(g)) = (peep_o, dpo) {
                        acc(&mut grads, *v, g);
                    }
                }
            }
        }

        Ok(Gradients {
            vals: self.vals,
            grads,
        })
    }
}

/// Result of a backward pass: one gradient slot per recorded tensor.
pub struct Gradients {
    vals: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.vals[v.0].shape()),
        }
    }

    /// Whether any gradient reached `v` at all.
    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}
