//! Structure, determinism and persistence checks for the assembled network.

use clrnet_core::blocks::Mode;
use clrnet_core::error::{Error, FormatError};
use clrnet_core::model::{build_clrnet, ClrnetConfig, LayerKind};
use clrnet_core::rng::CounterRng;
use clrnet_core::tensor::Tensor;

fn mini_config() -> ClrnetConfig {
    ClrnetConfig {
        input_hw: 8,
        seq_len: 2,
        channels: [2, 2, 2, 2],
        ..ClrnetConfig::default()
    }
}

fn rand_batch(cfg: &ClrnetConfig, n: usize, seed: u64) -> Tensor {
    let mut rng = CounterRng::new(seed);
    Tensor::from_fn(&[n, cfg.seq_len, cfg.input_hw, cfg.input_hw, 3], |_| rng.uniform())
}

/// Independent layer-walk: rows of the architecture table, counted directly
/// from the stage pattern.
fn expected_layer_count(cfg: &ClrnetConfig) -> usize {
    let stem = 4;
    let head = 4;
    let mut blocks = 0;
    let mut first = true;
    for &(cl, id) in &cfg.stage_blocks {
        for _ in 0..cl {
            blocks += if first { 12 } else { 14 };
            first = false;
        }
        blocks += id * 12;
    }
    stem + blocks + head
}

#[test]
fn block_pattern_matches_the_table() {
    let m = build_clrnet(&ClrnetConfig::default(), 1).unwrap();
    let expect = [
        "CL", "ID", "ID", "CL", "ID", "ID", "ID", "CL", "ID", "ID", "ID", "ID", "ID", "CL",
        "ID", "ID",
    ];
    assert_eq!(m.block_pattern(), expect);
}

#[test]
fn layer_counts_match_the_walk_oracle_and_pinned_constants() {
    let cfg = ClrnetConfig::default();
    let m = build_clrnet(&cfg, 7).unwrap();
    assert_eq!(m.total_layers(), expected_layer_count(&cfg));
    // Pinned regression constants for the default architecture.
    assert_eq!(m.total_layers(), 206);
    assert_eq!(m.parameterized_layers(), 107);
    assert_eq!(m.default_freeze_k(), 129);
}

#[test]
fn layer_names_are_unique_and_build_is_deterministic() {
    let cfg = mini_config();
    let a = build_clrnet(&cfg, 42).unwrap();
    let b = build_clrnet(&cfg, 42).unwrap();
    let mut names: Vec<&str> = a.layers.iter().map(|l| l.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), a.layers.len(), "duplicate layer names");
    assert_eq!(a.save_weights(), b.save_weights(), "same seed, same weights");
    let c = build_clrnet(&cfg, 43).unwrap();
    assert_ne!(a.save_weights(), c.save_weights(), "different seed, different weights");
}

#[test]
fn odd_input_size_is_rejected_before_allocation() {
    let cfg = ClrnetConfig {
        input_hw: 33,
        ..ClrnetConfig::default()
    };
    assert!(matches!(build_clrnet(&cfg, 0), Err(Error::Config(_))));
}

#[test]
fn forward_shape_and_range() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 3).unwrap();
    let batch = rand_batch(&cfg, 2, 11);
    let out = m.forward(&batch, Mode::Infer, 0).unwrap();
    assert_eq!(out.shape(), &[2, 1]);
    assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn infer_forward_is_bit_deterministic() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 5).unwrap();
    let batch = rand_batch(&cfg, 2, 13);
    let a = m.forward(&batch, Mode::Infer, 0).unwrap();
    let b = m.forward(&batch, Mode::Infer, 99).unwrap(); // seed ignored in infer
    assert!(a.bitwise_eq(&b));
}

#[test]
fn output_stays_in_unit_interval_across_seeds() {
    let cfg = mini_config();
    for seed in 0..20 {
        let m = build_clrnet(&cfg, seed).unwrap();
        let batch = rand_batch(&cfg, 1, seed + 100);
        let out = m.forward(&batch, Mode::Infer, 0).unwrap();
        assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0), "seed {seed}");
    }
}

#[test]
fn wrong_sequence_length_is_dimension_error() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 3).unwrap();
    let bad = Tensor::zeros(&[1, 3, 8, 8, 3]);
    assert!(matches!(
        m.forward(&bad, Mode::Infer, 0),
        Err(Error::Dimension(_))
    ));
    let bad = Tensor::zeros(&[1, 2, 6, 6, 3]);
    assert!(matches!(
        m.forward(&bad, Mode::Infer, 0),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn freeze_marks_prefix_and_unfreeze_restores() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 3).unwrap();
    let k = m.default_freeze_k();
    let frozen = m.freeze_layers(k).unwrap();
    for (i, layer) in frozen.layers.iter().enumerate() {
        assert_eq!(layer.trainable, i >= k, "layer {i}");
    }
    let back = frozen.freeze_layers(0).unwrap();
    for layer in &back.layers {
        assert!(layer.trainable);
    }
    assert_eq!(back.save_weights(), m.save_weights());
    assert!(m.freeze_layers(m.total_layers() + 1).is_err());
}

#[test]
fn frozen_params_drop_out_of_the_optimizer_walk() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 3).unwrap();
    let all = m.trainable_params().len();
    let frozen = m.freeze_layers(m.total_layers()).unwrap();
    assert_eq!(frozen.trainable_params().len(), 0);
    let half = m.freeze_layers(m.total_layers() / 2).unwrap();
    let part = half.trainable_params().len();
    assert!(part > 0 && part < all);
}

#[test]
fn save_load_roundtrip_is_bitwise() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 9).unwrap();
    let bytes = m.save_weights();
    let loaded = build_clrnet(&cfg, 1234).unwrap().load_weights(&bytes).unwrap();
    assert_eq!(loaded.save_weights(), bytes);
    // Forward agreement, not just serialized bytes.
    let batch = rand_batch(&cfg, 1, 77);
    let a = m.forward(&batch, Mode::Infer, 0).unwrap();
    let b = loaded.forward(&batch, Mode::Infer, 0).unwrap();
    assert!(a.bitwise_eq(&b));
}

#[test]
fn weight_format_errors_are_distinct() {
    let cfg = mini_config();
    let m = build_clrnet(&cfg, 9).unwrap();
    let good = m.save_weights();

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        m.load_weights(&bad_magic),
        Err(Error::Format(FormatError::BadMagic { .. }))
    ));

    let mut bad_version = good.clone();
    bad_version[4] = 9;
    assert!(matches!(
        m.load_weights(&bad_version),
        Err(Error::Format(FormatError::Version { found: 9, .. }))
    ));

    let truncated = &good[..good.len() - 3];
    assert!(matches!(
        m.load_weights(truncated),
        Err(Error::Format(FormatError::Truncated { .. }))
    ));
}

#[test]
fn loading_into_a_wider_model_names_the_mismatched_layer() {
    let small = build_clrnet(&mini_config(), 9).unwrap();
    let wide_cfg = ClrnetConfig {
        channels: [4, 4, 4, 4],
        ..mini_config()
    };
    let wide = build_clrnet(&wide_cfg, 9).unwrap();
    let err = wide.load_weights(&small.save_weights()).unwrap_err();
    match err {
        Error::Format(FormatError::ShapeMismatch { name, .. }) => {
            assert!(name.starts_with("stem_cell/"), "first mismatch was {name}");
        }
        other => panic!("expected shape mismatch, got {other}"),
    }
}

#[test]
fn zero_weight_model_probability_is_exactly_half() {
    // Zero every parameter: the classifier sees zero features, sigmoid(0) = 1/2.
    let cfg = mini_config();
    let mut m = build_clrnet(&cfg, 3).unwrap();
    for layer in &mut m.layers {
        let slots: Vec<(&'static str, Vec<usize>)> = layer
            .kind
            .named_tensors()
            .iter()
            .map(|(s, t)| (*s, t.shape().to_vec()))
            .collect();
        for (slot, shape) in slots {
            if matches!(layer.kind, LayerKind::ConvLstm(_) | LayerKind::Dense { .. }) {
                layer.kind.set_tensor(slot, Tensor::zeros(&shape)).unwrap();
            }
        }
    }
    let batch = rand_batch(&cfg, 2, 5);
    let out = m.forward(&batch, Mode::Infer, 0).unwrap();
    for &p in out.data() {
        assert!((p - 0.5).abs() < 1e-12);
    }
}
