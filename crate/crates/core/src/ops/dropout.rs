//! Inverted dropout with a position-addressed mask.
//!
//! The mask for element `i` is `uniform_at(key, i) >= rate`, so forward and
//! backward regenerate identical masks from the key alone and nothing about
//! the mask depends on evaluation order.

use crate::error::{Error, Result};
use crate::rng::uniform_at;
use crate::tensor::Tensor;

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Train-mode dropout: zero with probability `rate`, scale survivors by
/// 1/(1-rate). `key` identifies the mask stream.
pub fn dropout_train(x: &Tensor, rate: f64, key: u64) -> Result<Tensor> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - rate);
    let data: Vec<f64> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if uniform_at(key, i as u64) >= rate {
                v * scale
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn dropout_backward(rate: f64, key: u64, dout: &Tensor) -> Tensor {
    if rate == 0.0 {
        return dout.clone();
    }
    let scale = 1.0 / (1.0 - rate);
    let data: Vec<f64> = dout
        .data()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if uniform_at(key, i as u64) >= rate {
                d * scale
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(dout.shape().to_vec(), data).expect("dropout grad shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_is_identity() {
        let x = Tensor::from_fn(&[40], |i| i as f64);
        let y = dropout_train(&x, 0.0, 1).unwrap();
        assert!(y.bitwise_eq(&x));
    }

    #[test]
    fn bad_rate_is_config_error() {
        let x = Tensor::zeros(&[4]);
        assert!(matches!(dropout_train(&x, 1.0, 1), Err(Error::Config(_))));
        assert!(matches!(dropout_train(&x, -0.1, 1), Err(Error::Config(_))));
    }

    #[test]
    fn survivor_fraction_and_mask_reproducibility() {
        let x = Tensor::filled(&[10_000], 1.0);
        let y1 = dropout_train(&x, 0.5, 77).unwrap();
        let y2 = dropout_train(&x, 0.5, 77).unwrap();
        assert!(y1.bitwise_eq(&y2));
        let survivors = y1.data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "survivor fraction {frac}");
        // Survivors are scaled by 1/(1-rate).
        assert!(y1.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn expectation_matches_input_over_seeds() {
        let x = Tensor::filled(&[16], 1.0);
        let n_seeds = 2000;
        let mut acc = vec![0.0; 16];
        for seed in 0..n_seeds {
            let y = dropout_train(&x, 0.3, seed).unwrap();
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        // Each element is Bernoulli(0.7) * (1/0.7): mean 1, var (1-p)/p.
        let se = ((0.3 / 0.7) / n_seeds as f64).sqrt();
        for a in &acc {
            let mean = a / n_seeds as f64;
            assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
        }
    }
}
