//! Run configuration: one JSON document with sections for the model, the
//! data, training, and the transfer/experiment plans. Every field has a
//! default; unknown keys are rejected. Dotted `--set` overrides patch the
//! JSON before it is deserialized, so they go through the same validation.

use serde::{Deserialize, Serialize};

use clrnet_core::error::{Error, Result};
use clrnet_core::model::ClrnetConfig;
use clrnet_core::synth::ForgeryMethod;
use clrnet_core::train::TrainConfig;
use clrnet_core::transfer::ExperimentPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Forgery method of the fake class for `synth`.
    pub method: ForgeryMethod,
    /// Videos per generated dataset (half pristine, half forged).
    pub n_videos: usize,
    /// Temporal inconsistency strength of the forged class.
    pub amplitude: f64,
    pub samples_per_video: usize,
    /// Manifest paths consumed by train/eval/transfer/experiment.
    pub datasets: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            method: ForgeryMethod::FlickerA,
            n_videos: 40,
            amplitude: 0.3,
            samples_per_video: 16,
            datasets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ClrnetConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub transfer: ExperimentPlan,
    pub experiment: ExperimentPlan,
}

/// Parse a `--set key.path=value` override. The value is parsed as JSON
/// when possible, else taken as a string.
pub fn parse_override(s: &str) -> Result<(Vec<String>, serde_json::Value)> {
    let (path, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{s}' is not key.path=value")))?;
    if path.is_empty() {
        return Err(Error::config(format!("override '{s}' has an empty key")));
    }
    let value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    Ok((path.split('.').map(str::to_string).collect(), value))
}

fn apply_override(
    root: &mut serde_json::Value,
    path: &[String],
    value: serde_json::Value,
) -> Result<()> {
    let mut cur = root;
    for key in &path[..path.len() - 1] {
        cur = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("override path '{key}' is not an object")))?
            .entry(key.clone())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    cur.as_object_mut()
        .ok_or_else(|| Error::config("override path does not address an object".to_string()))?
        .insert(path.last().unwrap().clone(), value);
    Ok(())
}

/// Load the config document (or defaults), apply overrides, validate.
pub fn resolve_config(path: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let mut doc: serde_json::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::data(format!("cannot read config '{p}': {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("config '{p}': {e}")))?
        }
        None => serde_json::json!({}),
    };
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut doc, &path, value)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc)
        .map_err(|e| Error::config(format!("invalid configuration: {e}")))?;
    cfg.model.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = resolve_config(None, &[]).unwrap();
        assert_eq!(cfg.model.input_hw, 32);
        assert_eq!(cfg.train.epochs, 100);
    }

    #[test]
    fn overrides_patch_nested_fields() {
        let cfg = resolve_config(
            None,
            &["model.input_hw=8".into(), "train.epochs=3".into(), "data.method=\"jitter_b\"".into()],
        )
        .unwrap();
        assert_eq!(cfg.model.input_hw, 8);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.data.method, ForgeryMethod::JitterB);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = resolve_config(None, &["model.no_such_knob=1".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_model_config_is_rejected() {
        let err = resolve_config(None, &["model.input_hw=31".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
