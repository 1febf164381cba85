//! Binary cross-entropy over probability outputs.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped into [CLAMP, 1 - CLAMP] before the logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_labels(p: &Tensor, labels: &[u8]) -> Result<usize> {
    let n = p.shape()[0];
    let per: usize = p.shape()[1..].iter().product();
    if per != 1 {
        return Err(Error::contract(format!(
            "bce_loss expects one probability per sample, got shape {:?}",
            p.shape()
        )));
    }
    if labels.len() != n {
        return Err(Error::contract(format!(
            "bce_loss: {n} probabilities but {} labels",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::contract(format!("bce_loss: label {bad} not in {{0,1}}")));
    }
    Ok(n)
}

/// -mean(y ln p + (1-y) ln(1-p)) with clamped probabilities.
pub fn bce_loss(p: &Tensor, labels: &[u8]) -> Result<f64> {
    let n = check_labels(p, labels)?;
    let mut acc = 0.0;
    for (&pv, &y) in p.data().iter().zip(labels) {
        let pc = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        acc -= if y == 1 { pc.ln() } else { (1.0 - pc).ln() };
    }
    Ok(acc / n as f64)
}

/// d(loss)/dp. Clamped entries get zero gradient, matching the flat
/// clamped forward.
pub fn bce_loss_backward(p: &Tensor, labels: &[u8], dloss: f64) -> Tensor {
    let n = labels.len() as f64;
    let data: Vec<f64> = p
        .data()
        .iter()
        .zip(labels)
        .map(|(&pv, &y)| {
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&pv) {
                return 0.0;
            }
            let g = if y == 1 { -1.0 / pv } else { 1.0 / (1.0 - pv) };
            dloss * g / n
        })
        .collect();
    Tensor::new(p.shape().to_vec(), data).expect("bce grad shape")
}
