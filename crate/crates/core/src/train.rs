//! Optimizer and training loop.
//!
//! One training step: assemble a class-balanced batch, augment it with this
//! epoch's per-sample transforms, run a train-mode forward on a fresh tape,
//! backpropagate the binary cross-entropy, apply a bias-corrected Adam
//! update to the trainable tensors, and fold the collected batch statistics
//! into the norm layers' moving averages. The returned model is the
//! checkpoint of the epoch with the lowest validation loss.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blocks::Mode;
use crate::data::{augment, split_samples, AugmentationSpec, DatasetManifest, SequenceSample, Split};
use crate::error::{Error, Result};
use crate::model::{LayeredModel, ParamId};
use crate::rng::{derive, CounterRng, Domain};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    /// Zero moments shaped after the parameter walk.
    pub fn new(hyper: AdamHyper, params: &[(ParamId, Tensor)]) -> Self {
        AdamState {
            hyper,
            step: 0,
            moments: params
                .iter()
                .map(|(_, t)| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update: returns the new parameter values in walk order.
pub fn adam_step(
    state: &mut AdamState,
    params: &[Tensor],
    grads: &[Tensor],
) -> Result<Vec<Tensor>> {
    if params.len() != state.moments.len() || grads.len() != params.len() {
        return Err(Error::contract(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.moments.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    let mut out = Vec::with_capacity(params.len());
    for ((p, g), (m, v)) in params.iter().zip(grads).zip(state.moments.iter_mut()) {
        if p.shape() != g.shape() {
            return Err(Error::contract(format!(
                "adam_step: gradient shape {:?} does not match parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let mut new_m = Vec::with_capacity(p.numel());
        let mut new_v = Vec::with_capacity(p.numel());
        let mut new_p = Vec::with_capacity(p.numel());
        for i in 0..p.numel() {
            let gi = g.data()[i];
            let mi = h.beta1 * m.data()[i] + (1.0 - h.beta1) * gi;
            let vi = h.beta2 * v.data()[i] + (1.0 - h.beta2) * gi * gi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            new_m.push(mi);
            new_v.push(vi);
            new_p.push(p.data()[i] - h.lr * m_hat / (v_hat.sqrt() + h.epsilon));
        }
        *m = Tensor::new(p.shape().to_vec(), new_m)?;
        *v = Tensor::new(p.shape().to_vec(), new_v)?;
        out.push(Tensor::new(p.shape().to_vec(), new_p)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augmentation: AugmentationSpec,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            seed: 0,
            augmentation: AugmentationSpec::default(),
            adam: AdamHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History(pub Vec<EpochStats>);

impl History {
    /// First epoch index minimizing validation loss.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for e in &self.0 {
            if best.map_or(true, |(_, v)| e.val_loss < v) {
                best = Some((e.epoch, e.val_loss));
            }
        }
        best.map(|(e, _)| e)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,wall_ms\n");
        for e in &self.0 {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.wall_ms
            ));
        }
        s
    }
}

/// Class-balanced batch index assignment: every batch holds the two classes
/// in counts differing by at most one, and a full pass covers every sample
/// exactly once.
pub fn balanced_batches(
    labels: &[u8],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let real: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let fake: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if real.len() != fake.len() {
        return Err(Error::data(format!(
            "balanced_batches needs equal class counts, got {} real and {} fake",
            real.len(),
            fake.len()
        )));
    }
    if real.is_empty() {
        return Err(Error::data("balanced_batches on an empty split"));
    }
    let mut r = real;
    let mut f = fake;
    CounterRng::for_domain(seed, Domain::Shuffle, &[0]).shuffle(&mut r);
    CounterRng::for_domain(seed, Domain::Shuffle, &[1]).shuffle(&mut f);
    // Alternate classes, then chunk: consecutive windows stay balanced ±1.
    let interleaved: Vec<usize> = r
        .iter()
        .zip(&f)
        .flat_map(|(&a, &b)| [a, b])
        .collect();
    Ok(interleaved
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect())
}

/// Stack samples into a [B,T,H,W,3] batch plus labels.
pub fn collate(samples: &[&SequenceSample]) -> Result<(Tensor, Vec<u8>)> {
    if samples.is_empty() {
        return Err(Error::contract("collate on an empty batch"));
    }
    let shape = samples[0].frames.shape();
    let mut data = Vec::with_capacity(samples.len() * samples[0].frames.numel());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.frames.shape() != shape {
            return Err(Error::dimension(format!(
                "batch sample shapes differ: {:?} vs {:?}",
                shape,
                s.frames.shape()
            )));
        }
        data.extend_from_slice(s.frames.data());
        labels.push(s.label.as_u8());
    }
    let mut bshape = vec![samples.len()];
    bshape.extend_from_slice(shape);
    Ok((Tensor::new(bshape, data)?, labels))
}

/// Mean inference-mode loss over a sample set.
pub fn evaluate_loss(
    model: &LayeredModel,
    samples: &[SequenceSample],
    batch_size: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::data("evaluate_loss on an empty split"));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let (batch, labels) = collate(&refs)?;
        let probs = model.forward(&batch, Mode::Infer, 0)?;
        total += crate::ops::bce_loss(&probs, &labels)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Inference probabilities and labels over a sample set.
pub fn predict(
    model: &LayeredModel,
    samples: &[SequenceSample],
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut probs = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let (batch, l) = collate(&refs)?;
        let p = model.forward(&batch, Mode::Infer, 0)?;
        probs.extend_from_slice(p.data());
        labels.extend_from_slice(&l);
    }
    Ok((probs, labels))
}

pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub model: LayeredModel,
    pub history: History,
    pub best_epoch: usize,
}

/// One optimizer step on an already collated batch. Returns the loss.
pub fn train_step(
    model: &mut LayeredModel,
    adam: &mut AdamState,
    batch: &Tensor,
    labels: &[u8],
    step_seed: u64,
) -> Result<f64> {
    let mut fp = model.forward_pass(batch, Mode::Train, step_seed)?;
    let loss = fp.tape.bce_loss(fp.output, labels)?;
    let loss_val = fp.tape.value(loss).item()?;
    if !loss_val.is_finite() {
        return Err(Error::numeric(format!("training loss became {loss_val}")));
    }
    let grads = fp.tape.backward(loss)?;
    let ids: Vec<ParamId> = fp.param_vars.iter().map(|(id, _)| *id).collect();
    let walk = model.trainable_params();
    debug_assert!(
        ids.iter().zip(&walk).all(|(a, (b, _))| a == b),
        "forward-pass parameter walk diverged from the model walk"
    );
    let params: Vec<Tensor> = walk.into_iter().map(|(_, t)| t).collect();
    let gvals: Vec<Tensor> = fp.param_vars.iter().map(|(_, v)| grads.get(*v)).collect();
    let updated = adam_step(adam, &params, &gvals)?;
    for (id, value) in ids.into_iter().zip(updated) {
        model.set_param(id, value)?;
    }
    model.absorb_bn_stats(&fp.bn_stats);
    Ok(loss_val)
}

/// Train on the manifest's train split, validate per epoch, return the
/// best-validation-loss checkpoint. Fully deterministic in `cfg.seed`.
pub fn train(
    model: &LayeredModel,
    data: &DatasetManifest,
    cfg: &TrainConfig,
    base_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if cfg.epochs == 0 {
        return Err(Error::config("epochs must be >= 1"));
    }
    let hw = model.config.input_hw;
    let train_samples = split_samples(data, Split::Train, hw, cfg.seed, base_dir)?;
    let val_samples = split_samples(data, Split::Val, hw, cfg.seed, base_dir)?;
    let labels: Vec<u8> = train_samples.iter().map(|s| s.label.as_u8()).collect();

    let mut current = model.clone();
    let mut adam = AdamState::new(cfg.adam, &current.trainable_params());
    let mut history = History::default();
    let mut best: Option<(usize, f64, LayeredModel)> = None;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let batches = balanced_batches(
            &labels,
            cfg.batch_size,
            derive(cfg.seed, &[Domain::Shuffle.tag(), epoch as u64]),
        )?;
        let mut loss_sum = 0.0;
        for (step, batch_idx) in batches.iter().enumerate() {
            let augmented: Vec<SequenceSample> = batch_idx
                .iter()
                .map(|&i| {
                    augment(
                        &train_samples[i],
                        &cfg.augmentation,
                        derive(cfg.seed, &[Domain::Augment.tag(), epoch as u64, i as u64]),
                    )
                })
                .collect();
            let refs: Vec<&SequenceSample> = augmented.iter().collect();
            let (batch, blabels) = collate(&refs)?;
            let step_seed = derive(cfg.seed, &[epoch as u64, step as u64]);
            let loss = train_step(&mut current, &mut adam, &batch, &blabels, step_seed)?;
            loss_sum += loss * batch_idx.len() as f64;
        }
        let train_loss = loss_sum / train_samples.len() as f64;
        let val_loss = evaluate_loss(&current, &val_samples, cfg.batch_size)?;
        if best.as_ref().map_or(true, |(_, v, _)| val_loss < *v) {
            best = Some((epoch, val_loss, current.clone()));
        }
        history.0.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            wall_ms: t0.elapsed().as_millis() as u64,
        });
    }
    let (best_epoch, _, best_model) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_lr_scaled_sign() {
        let p = vec![(
            ParamId { layer: 0, slot: "w" },
            Tensor::new(vec![2], vec![1.0, -3.0]).unwrap(),
        )];
        let mut st = AdamState::new(
            AdamHyper {
                lr: 0.01,
                ..AdamHyper::default()
            },
            &p,
        );
        let params = vec![p[0].1.clone()];
        let grads = vec![Tensor::new(vec![2], vec![0.5, -2.0]).unwrap()];
        let out = adam_step(&mut st, &params, &grads).unwrap();
        // First step: |delta| = lr * |g| / (|g| + eps) ~= lr.
        for (i, (&orig, &g)) in params[0].data().iter().zip(grads[0].data()).enumerate() {
            let delta = out[0].data()[i] - orig;
            let expect = -0.01 * g / (g.abs() + 1e-7);
            assert!((delta - expect).abs() < 1e-12, "elem {i}");
        }
    }

    #[test]
    fn adam_zero_gradient_changes_nothing() {
        let p = vec![(
            ParamId { layer: 0, slot: "w" },
            Tensor::new(vec![3], vec![0.5, -0.5, 2.0]).unwrap(),
        )];
        let mut st = AdamState::new(AdamHyper::default(), &p);
        let params = vec![p[0].1.clone()];
        let grads = vec![Tensor::zeros(&[3])];
        let out = adam_step(&mut st, &params, &grads).unwrap();
        assert!(out[0].bitwise_eq(&params[0]));
    }

    #[test]
    fn adam_two_steps_match_scalar_oracle() {
        let h = AdamHyper {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let p = vec![(ParamId { layer: 0, slot: "w" }, Tensor::scalar(1.0))];
        let mut st = AdamState::new(h, &p);
        let mut param = 1.0f64;
        let mut m = 0.0;
        let mut v = 0.0;
        let gs = [0.3, -0.7];
        let mut cur = vec![Tensor::scalar(param)];
        for (t, &g) in gs.iter().enumerate() {
            cur = adam_step(&mut st, &cur, &[Tensor::scalar(g)]).unwrap();
            // Hand-rolled update.
            m = h.beta1 * m + (1.0 - h.beta1) * g;
            v = h.beta2 * v + (1.0 - h.beta2) * g * g;
            let mh = m / (1.0 - h.beta1.powi(t as i32 + 1));
            let vh = v / (1.0 - h.beta2.powi(t as i32 + 1));
            param -= h.lr * mh / (vh.sqrt() + h.epsilon);
            assert!(
                (cur[0].data()[0] - param).abs() < 1e-12,
                "step {t}: {} vs {param}",
                cur[0].data()[0]
            );
        }
    }

    #[test]
    fn adam_rejects_mismatched_gradients() {
        let p = vec![(ParamId { layer: 0, slot: "w" }, Tensor::zeros(&[2]))];
        let mut st = AdamState::new(AdamHyper::default(), &p);
        let params = vec![p[0].1.clone()];
        assert!(matches!(
            adam_step(&mut st, &params, &[]),
            Err(Error::Contract(_))
        ));
        let bad = vec![Tensor::zeros(&[3])];
        assert!(matches!(
            adam_step(&mut st, &params, &bad),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn balanced_batches_keep_parity_and_coverage() {
        let labels = [0u8, 0, 0, 0, 1, 1, 1, 1];
        let batches = balanced_batches(&labels, 4, 1).unwrap();
        assert_eq!(batches.len(), 2);
        for b in &batches {
            let fakes = b.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(fakes, 2, "2+2 per batch of 4");
        }

        let batches = balanced_batches(&labels, 3, 2).unwrap();
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>(), "full coverage, no repeats");
        for b in &batches {
            let fakes = b.iter().filter(|&&i| labels[i] == 1).count() as i64;
            let reals = b.len() as i64 - fakes;
            assert!((fakes - reals).abs() <= 1, "parity within one");
        }
    }

    #[test]
    fn unbalanced_split_is_data_error() {
        let labels = [0u8, 0, 1];
        assert!(matches!(
            balanced_batches(&labels, 2, 0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn history_best_epoch_is_argmin_val() {
        let h = History(
            [0.9, 0.4, 0.6]
                .iter()
                .enumerate()
                .map(|(i, &v)| EpochStats {
                    epoch: i,
                    train_loss: 1.0,
                    val_loss: v,
                    wall_ms: 0,
                })
                .collect(),
        );
        assert_eq!(h.best_epoch(), Some(1));
        let csv = h.to_csv();
        assert!(csv.starts_with("epoch,train_loss,val_loss,wall_ms\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
