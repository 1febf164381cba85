//! Transfer-learning procedure and the cross-dataset experiment driver.
//!
//! An experiment runs four stages: base training on the source datasets,
//! a zero-shot evaluation matrix over every dataset's test split, fine
//! tuning on a small balanced source+target video mixture with the early
//! layer table frozen, and a post-transfer matrix. Stage outputs accumulate
//! into a JSON bundle; a failing stage aborts with a stage-tagged error
//! while preserving what already ran.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, Label, Split, Splits, VideoRecord};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{build_clrnet, ClrnetConfig, LayeredModel};
use crate::train::{predict, train, History, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SingleToSingle,
    MultiToSingle,
    SingleToMulti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub strategy: Strategy,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    /// Fine-tuning videos taken from every involved dataset.
    pub tl_videos_per_dataset: usize,
    /// Frozen layer-table prefix; the model's default share when absent.
    pub freeze_k: Option<usize>,
    pub tl_epochs: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            strategy: Strategy::SingleToSingle,
            sources: Vec::new(),
            targets: Vec::new(),
            tl_videos_per_dataset: 10,
            freeze_k: None,
            tl_epochs: 150,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.targets.is_empty() {
            return Err(Error::config("plan needs at least one source and one target"));
        }
        if self.sources.iter().any(|s| self.targets.contains(s)) {
            return Err(Error::config("sources and targets must be disjoint"));
        }
        if self.tl_videos_per_dataset == 0 {
            return Err(Error::config("tl_videos_per_dataset must be >= 1"));
        }
        if self.tl_epochs == 0 {
            return Err(Error::config("tl_epochs must be >= 1"));
        }
        let ok = match self.strategy {
            Strategy::SingleToSingle => self.sources.len() == 1 && self.targets.len() == 1,
            Strategy::MultiToSingle => self.sources.len() >= 2 && self.targets.len() == 1,
            Strategy::SingleToMulti => self.sources.len() == 1 && self.targets.len() >= 2,
        };
        if !ok {
            return Err(Error::config(format!(
                "{:?} does not match {} sources and {} targets",
                self.strategy,
                self.sources.len(),
                self.targets.len()
            )));
        }
        Ok(())
    }
}

/// Concatenate several datasets into one manifest (shared settings needed).
pub fn merge_manifests(name: &str, parts: &[&DatasetManifest]) -> Result<DatasetManifest> {
    if parts.is_empty() {
        return Err(Error::contract("merge_manifests on empty list"));
    }
    let (seq_len, spv) = (parts[0].seq_len, parts[0].samples_per_video);
    let mut splits = Splits::default();
    for p in parts {
        if p.seq_len != seq_len || p.samples_per_video != spv {
            return Err(Error::data(format!(
                "dataset '{}' disagrees on seq_len/samples_per_video",
                p.name
            )));
        }
        splits.train.extend(p.splits.train.iter().cloned());
        splits.val.extend(p.splits.val.iter().cloned());
        splits.test.extend(p.splits.test.iter().cloned());
    }
    let m = DatasetManifest {
        name: name.to_string(),
        seq_len,
        samples_per_video: spv,
        splits,
    };
    m.validate_disjoint()?;
    Ok(m)
}

/// Balanced slice of a dataset's train split for fine-tuning: the first
/// n/2 real and n/2 fake videos in split order.
fn tl_slice(manifest: &DatasetManifest, n_videos: usize) -> Result<Vec<VideoRecord>> {
    let per_class = n_videos / 2;
    if per_class == 0 {
        return Err(Error::config("tl_videos_per_dataset must be >= 2"));
    }
    let mut out = Vec::with_capacity(per_class * 2);
    for label in [Label::Real, Label::Fake] {
        let picked: Vec<VideoRecord> = manifest
            .splits
            .train
            .iter()
            .filter(|r| r.label == label)
            .take(per_class)
            .cloned()
            .collect();
        if picked.len() < per_class {
            return Err(Error::data(format!(
                "dataset '{}' lacks {per_class} {} train videos for transfer",
                manifest.name,
                if label == Label::Real { "real" } else { "fake" },
            )));
        }
        out.extend(picked);
    }
    Ok(out)
}

/// The fine-tuning mixture: a small balanced slice of every involved
/// dataset's train split; validation is the union of their val splits.
pub fn tl_mixture(
    sources: &[&DatasetManifest],
    targets: &[&DatasetManifest],
    tl_videos_per_dataset: usize,
) -> Result<DatasetManifest> {
    let all: Vec<&DatasetManifest> = sources.iter().chain(targets).copied().collect();
    let (seq_len, spv) = (all[0].seq_len, all[0].samples_per_video);
    let mut splits = Splits::default();
    for m in &all {
        if m.seq_len != seq_len || m.samples_per_video != spv {
            return Err(Error::data(format!(
                "dataset '{}' disagrees on seq_len/samples_per_video",
                m.name
            )));
        }
        splits.train.extend(tl_slice(m, tl_videos_per_dataset)?);
        splits.val.extend(m.splits.val.iter().cloned());
    }
    // The mixture has no test split of its own; evaluation goes through the
    // per-dataset matrices.
    Ok(DatasetManifest {
        name: "tl_mixture".to_string(),
        seq_len,
        samples_per_video: spv,
        splits,
    })
}

/// Fine-tune a trained model: freeze the early layer table, train on the
/// source+target mixture, return the best-validation checkpoint. The input
/// model is left untouched.
pub fn transfer_learn(
    model: &LayeredModel,
    sources: &[&DatasetManifest],
    targets: &[&DatasetManifest],
    plan: &ExperimentPlan,
    base_cfg: &TrainConfig,
    base_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    let k = plan.freeze_k.unwrap_or_else(|| model.default_freeze_k());
    let frozen = model.freeze_layers(k)?;
    let mixture = tl_mixture(sources, targets, plan.tl_videos_per_dataset)?;
    let cfg = TrainConfig {
        epochs: plan.tl_epochs,
        ..base_cfg.clone()
    };
    train(&frozen, &mixture, &cfg, base_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    /// True when the model trained on this dataset.
    pub base: bool,
    pub samples: usize,
    pub metrics: MetricsReport,
}

/// Inference-mode metrics on every dataset's test split.
pub fn cross_dataset_matrix(
    model: &LayeredModel,
    datasets: &[&DatasetManifest],
    base_names: &[String],
    eval_seed: u64,
    batch_size: usize,
    base_dir: Option<&Path>,
) -> Result<Vec<DatasetMetrics>> {
    datasets
        .iter()
        .map(|m| {
            if m.seq_len != model.config.seq_len {
                return Err(Error::dimension(format!(
                    "dataset '{}' has seq_len {}, model expects {}",
                    m.name, m.seq_len, model.config.seq_len
                )));
            }
            let samples = crate::data::split_samples(
                m,
                Split::Test,
                model.config.input_hw,
                eval_seed,
                base_dir,
            )?;
            let (probs, labels) = predict(model, &samples, batch_size)?;
            Ok(DatasetMetrics {
                dataset: m.name.clone(),
                base: base_names.contains(&m.name),
                samples: samples.len(),
                metrics: compute_metrics(&probs, &labels, 0.5)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub metrics: Vec<DatasetMetrics>,
    /// Relative path of the stage's history CSV, when one was written.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub history_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBundle {
    pub plan: ExperimentPlan,
    pub seed: u64,
    pub model_config: ClrnetConfig,
    pub train_config: TrainConfig,
    pub stages: Vec<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Everything an experiment needs besides the plan.
pub struct ExperimentEnv<'a> {
    pub model_config: ClrnetConfig,
    pub train_config: TrainConfig,
    pub datasets: Vec<&'a DatasetManifest>,
    pub base_dir: Option<&'a Path>,
    pub out_dir: Option<&'a Path>,
    /// Model init seed; training streams come from `train_config.seed`.
    pub seed: u64,
}

pub struct ExperimentOutcome {
    pub bundle: ExperimentBundle,
    pub base_model: LayeredModel,
    pub tl_model: LayeredModel,
}

fn write_bundle(out_dir: Option<&Path>, bundle: &ExperimentBundle) -> Result<()> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(bundle)?)?;
    }
    Ok(())
}

fn write_history(out_dir: Option<&Path>, name: &str, h: &History) -> Result<Option<String>> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let file = format!("{name}.csv");
        std::fs::write(dir.join(&file), h.to_csv())?;
        Ok(Some(file))
    } else {
        Ok(None)
    }
}

/// Run all four stages. On a stage failure the partial bundle (with the
/// error recorded) is still written to `out_dir` before returning.
pub fn run_experiment(plan: &ExperimentPlan, env: &ExperimentEnv) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let mut bundle = ExperimentBundle {
        plan: plan.clone(),
        seed: env.seed,
        model_config: env.model_config.clone(),
        train_config: env.train_config.clone(),
        stages: Vec::new(),
        error: None,
    };

    let find = |name: &String| -> Result<&DatasetManifest> {
        env.datasets
            .iter()
            .find(|m| &m.name == name)
            .copied()
            .ok_or_else(|| Error::data(format!("dataset '{name}' not provided")))
    };

    let stage = |bundle: &mut ExperimentBundle,
                     name: &str,
                     f: &mut dyn FnMut(&mut ExperimentBundle) -> Result<()>|
     -> Result<()> {
        match f(bundle) {
            Ok(()) => {
                write_bundle(env.out_dir, bundle)?;
                Ok(())
            }
            Err(e) => {
                bundle.error = Some(format!("{name}: {e}"));
                write_bundle(env.out_dir, bundle)?;
                Err(e.in_stage(name))
            }
        }
    };

    let sources: Vec<&DatasetManifest> = plan
        .sources
        .iter()
        .map(find)
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<&DatasetManifest> = plan
        .targets
        .iter()
        .map(find)
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<&DatasetManifest> = sources.iter().chain(&targets).copied().collect();

    // Stage 1: base training on the union of the sources.
    let mut base_outcome: Option<TrainOutcome> = None;
    stage(&mut bundle, "base_train", &mut |bundle| {
        let merged = merge_manifests(&plan.sources.join("+"), &sources)?;
        let model = build_clrnet(&env.model_config, env.seed)?;
        let outcome = train(&model, &merged, &env.train_config, env.base_dir)?;
        let history_file = write_history(env.out_dir, "base_train_history", &outcome.history)?;
        bundle.stages.push(StageReport {
            name: "base_train".into(),
            metrics: Vec::new(),
            history_file,
            best_epoch: Some(outcome.best_epoch),
        });
        base_outcome = Some(outcome);
        Ok(())
    })?;
    let base_model = base_outcome.expect("stage ran").model;

    // Stage 2: zero-shot matrix.
    stage(&mut bundle, "zero_shot", &mut |bundle| {
        let metrics = cross_dataset_matrix(
            &base_model,
            &all,
            &plan.sources,
            env.train_config.seed,
            env.train_config.batch_size,
            env.base_dir,
        )?;
        bundle.stages.push(StageReport {
            name: "zero_shot".into(),
            metrics,
            history_file: None,
            best_epoch: None,
        });
        Ok(())
    })?;

    // Stage 3: transfer learning.
    let mut tl_outcome: Option<TrainOutcome> = None;
    stage(&mut bundle, "transfer_learn", &mut |bundle| {
        let outcome = transfer_learn(
            &base_model,
            &sources,
            &targets,
            plan,
            &env.train_config,
            env.base_dir,
        )?;
        let history_file = write_history(env.out_dir, "transfer_history", &outcome.history)?;
        bundle.stages.push(StageReport {
            name: "transfer_learn".into(),
            metrics: Vec::new(),
            history_file,
            best_epoch: Some(outcome.best_epoch),
        });
        tl_outcome = Some(outcome);
        Ok(())
    })?;
    let tl_model = tl_outcome.expect("stage ran").model;

    // Stage 4: post-transfer matrix.
    stage(&mut bundle, "post_tl", &mut |bundle| {
        let metrics = cross_dataset_matrix(
            &tl_model,
            &all,
            &plan.sources,
            env.train_config.seed,
            env.train_config.batch_size,
            env.base_dir,
        )?;
        bundle.stages.push(StageReport {
            name: "post_tl".into(),
            metrics,
            history_file: None,
            best_epoch: None,
        });
        Ok(())
    })?;

    Ok(ExperimentOutcome {
        bundle,
        base_model,
        tl_model,
    })
}
