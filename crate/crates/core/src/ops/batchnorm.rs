//! Batch normalization over the trailing channel axis.
//!
//! Statistics are taken per channel across every other axis, so the same
//! kernel serves [N,C], [N,H,W,C] and [N,T,H,W,C] tensors. Variance is the
//! biased (1/M) estimator, both for normalization and for the moving
//! averages.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel batch statistics produced by a train-mode forward.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn check_channel_param(name: &str, p: &Tensor, channels: usize) -> Result<()> {
    if p.shape() != [channels] {
        return Err(Error::dimension(format!(
            "batch_norm {name}: expected [{channels}] (channel axis), got {:?}",
            p.shape()
        )));
    }
    Ok(())
}

pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!(
            "batch_norm epsilon must be > 0, got {epsilon}"
        )));
    }
    Ok(())
}

fn channels_of(x: &Tensor) -> Result<usize> {
    if x.rank() < 2 {
        return Err(Error::dimension(format!(
            "batch_norm input must have a batch and a channel axis, got {:?}",
            x.shape()
        )));
    }
    Ok(*x.shape().last().expect("rank >= 2"))
}

/// Train-mode forward: normalize with batch statistics, return them so the
/// caller can fold them into the moving averages.
pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    epsilon: f64,
) -> Result<(Tensor, BatchStats)> {
    check_epsilon(epsilon)?;
    let c = channels_of(x)?;
    check_channel_param("gamma", gamma, c)?;
    check_channel_param("beta", beta, c)?;

    let rows = x.numel() / c;
    let m = rows as f64;
    let xd = x.data();

    let mut mean = vec![0.0; c];
    for row in xd.chunks_exact(c) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut var = vec![0.0; c];
    for row in xd.chunks_exact(c) {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - mu;
            *acc += d * d;
        }
    }
    for v in &mut var {
        *v /= m;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + epsilon).sqrt()).collect();
    let gd = gamma.data();
    let bd = beta.data();
    let mut out = Vec::with_capacity(x.numel());
    for row in xd.chunks_exact(c) {
        for i in 0..c {
            out.push((row[i] - mean[i]) * inv_std[i] * gd[i] + bd[i]);
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        BatchStats { mean, var },
    ))
}

/// Inference-mode forward using stored moving statistics.
pub fn batch_norm_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    moving_mean: &Tensor,
    moving_var: &Tensor,
    epsilon: f64,
) -> Result<Tensor> {
    check_epsilon(epsilon)?;
    let c = channels_of(x)?;
    check_channel_param("gamma", gamma, c)?;
    check_channel_param("beta", beta, c)?;
    check_channel_param("moving_mean", moving_mean, c)?;
    check_channel_param("moving_var", moving_var, c)?;

    let scale: Vec<f64> = gamma
        .data()
        .iter()
        .zip(moving_var.data())
        .map(|(&g, &v)| g / (v + epsilon).sqrt())
        .collect();
    let shift: Vec<f64> = beta
        .data()
        .iter()
        .zip(moving_mean.data())
        .zip(&scale)
        .map(|((&b, &m), &s)| b - m * s)
        .collect();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(c) {
        for i in 0..c {
            out.push(row[i] * scale[i] + shift[i]);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Backward through the train-mode normalization (statistics depend on x).
pub fn batch_norm_train_backward(
    x: &Tensor,
    gamma: &Tensor,
    stats: &BatchStats,
    epsilon: f64,
    dout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let c = gamma.numel();
    let rows = x.numel() / c;
    let m = rows as f64;
    let xd = x.data();
    let dd = dout.data();
    let inv_std: Vec<f64> = stats.var.iter().map(|&v| 1.0 / (v + epsilon).sqrt()).collect();

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (row, drow) in xd.chunks_exact(c).zip(dd.chunks_exact(c)) {
        for i in 0..c {
            let xhat = (row[i] - stats.mean[i]) * inv_std[i];
            dgamma[i] += drow[i] * xhat;
            dbeta[i] += drow[i];
        }
    }

    // dx = gamma * inv_std * (dout - dbeta/M - xhat * dgamma/M)
    let gd = gamma.data();
    let mut dx = Vec::with_capacity(x.numel());
    for (row, drow) in xd.chunks_exact(c).zip(dd.chunks_exact(c)) {
        for i in 0..c {
            let xhat = (row[i] - stats.mean[i]) * inv_std[i];
            dx.push(gd[i] * inv_std[i] * (drow[i] - dbeta[i] / m - xhat * dgamma[i] / m));
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("dx shape"),
        Tensor::new(vec![c], dgamma).expect("dgamma shape"),
        Tensor::new(vec![c], dbeta).expect("dbeta shape"),
    )
}

/// Backward through the inference-mode affine map (statistics are constants).
pub fn batch_norm_infer_backward(
    x: &Tensor,
    gamma: &Tensor,
    moving_mean: &Tensor,
    moving_var: &Tensor,
    epsilon: f64,
    dout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let c = gamma.numel();
    let inv_std: Vec<f64> = moving_var
        .data()
        .iter()
        .map(|&v| 1.0 / (v + epsilon).sqrt())
        .collect();
    let gd = gamma.data();
    let md = moving_mean.data();
    let xd = x.data();
    let dd = dout.data();

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut dx = Vec::with_capacity(x.numel());
    for (row, drow) in xd.chunks_exact(c).zip(dd.chunks_exact(c)) {
        for i in 0..c {
            let xhat = (row[i] - md[i]) * inv_std[i];
            dgamma[i] += drow[i] * xhat;
            dbeta[i] += drow[i];
            dx.push(drow[i] * gd[i] * inv_std[i]);
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("dx shape"),
        Tensor::new(vec![c], dgamma).expect("dgamma shape"),
        Tensor::new(vec![c], dbeta).expect("dbeta shape"),
    )
}

/// Exponential moving average update: new = momentum * old + (1 - momentum) * batch.
pub fn update_moving(old: &Tensor, batch: &[f64], momentum: f64) -> Tensor {
    let data: Vec<f64> = old
        .data()
        .iter()
        .zip(batch)
        .map(|(&o, &b)| momentum * o + (1.0 - momentum) * b)
        .collect();
    Tensor::new(old.shape().to_vec(), data).expect("moving shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = Tensor::filled(&[4, 3], 7.5);
        let gamma = Tensor::filled(&[3], 1.0);
        let beta = Tensor::zeros(&[3]);
        let (y, stats) = batch_norm_train(&x, &gamma, &beta, 1e-3).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() <= 1e-3));
        assert!(stats.var.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_batch_hits_plus_minus_one() {
        let x = Tensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap();
        let gamma = Tensor::filled(&[1], 1.0);
        let beta = Tensor::zeros(&[1]);
        let (y, stats) = batch_norm_train(&x, &gamma, &beta, 1e-8).unwrap();
        // mean 1, biased var 1 -> normalized {-1, +1}
        assert!((stats.mean[0] - 1.0).abs() < 1e-12);
        assert!((stats.var[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[0] + 1.0).abs() < 1e-6);
        assert!((y.data()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infer_uses_moving_stats() {
        let x = Tensor::new(vec![1, 1], vec![7.0]).unwrap();
        let gamma = Tensor::filled(&[1], 1.0);
        let beta = Tensor::zeros(&[1]);
        let mean = Tensor::filled(&[1], 5.0);
        let var = Tensor::filled(&[1], 4.0);
        let y = batch_norm_infer(&x, &gamma, &beta, &mean, &var, 1e-8).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_epsilon_is_config_error() {
        let x = Tensor::zeros(&[2, 2]);
        let g = Tensor::filled(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(
            batch_norm_train(&x, &g, &b, 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            batch_norm_train(&x, &g, &b, -1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn train_output_is_standardized_when_variance_dominates_epsilon() {
        let mut rng = crate::rng::CounterRng::new(31);
        let x = Tensor::from_fn(&[64, 4], |_| rng.range(-2.0, 2.0));
        let gamma = Tensor::filled(&[4], 1.0);
        let beta = Tensor::zeros(&[4]);
        let (y, _) = batch_norm_train(&x, &gamma, &beta, 1e-8).unwrap();
        let c = 4;
        for ch in 0..c {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(c).copied().collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6, "channel {ch} mean {m}");
            assert!((v - 1.0).abs() < 1e-4, "channel {ch} var {v}");
        }
    }
}
