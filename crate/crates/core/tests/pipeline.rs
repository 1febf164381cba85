//! Data-pipeline contracts: split hygiene over many random manifests,
//! sequence-consistent augmentation, extraction coverage.

use proptest::prelude::*;

use clrnet_core::data::{
    augment, extract_samples, make_manifest, stack_frames, AugmentationSpec, Label,
    SequenceSample, VideoRecord, VideoSource,
};
use clrnet_core::rng::CounterRng;
use clrnet_core::tensor::Tensor;

fn records(real: usize, fake: usize, frames: usize) -> Vec<VideoRecord> {
    let mk = |i: usize, label: Label| VideoRecord {
        video_id: format!(
            "{}{i:04}",
            if label == Label::Real { "r" } else { "f" }
        ),
        source: VideoSource::Path(format!("v{i}.frms")),
        label,
        frames,
    };
    (0..real)
        .map(|i| mk(i, Label::Real))
        .chain((0..fake).map(|i| mk(i, Label::Fake)))
        .collect()
}

/// A thousand random manifests: no video id ever crosses splits, classes
/// stay balanced per split.
#[test]
fn thousand_random_manifests_have_disjoint_balanced_splits() {
    let mut rng = CounterRng::new(808);
    for trial in 0..1000u64 {
        let real = 8 + rng.below(40) as usize;
        let fake = 8 + rng.below(40) as usize;
        let vids = records(real, fake, 64);
        let (m, dropped) = make_manifest(
            "t",
            &vids,
            (0.75, 0.125, 0.125),
            5,
            16,
            rng.next_u64(),
        )
        .unwrap_or_else(|e| panic!("trial {trial} ({real}r/{fake}f): {e}"));
        m.validate_disjoint()
            .unwrap_or_else(|e| panic!("trial {trial}: {e}"));
        let usable = real.min(fake);
        assert_eq!(dropped.real + dropped.fake, real + fake - 2 * usable);
        for split in clrnet_core::data::Split::ALL {
            let recs = m.split(split);
            let r = recs.iter().filter(|v| v.label == Label::Real).count();
            assert_eq!(2 * r, recs.len(), "trial {trial}: unbalanced {split:?}");
        }
    }
}

fn arb_sample() -> impl Strategy<Value = (SequenceSample, u64)> {
    (2usize..5, 4usize..8, any::<u64>(), any::<u64>()).prop_map(|(t, hw, content, seed)| {
        let mut rng = CounterRng::new(content);
        let frames: Vec<Tensor> = (0..t)
            .map(|_| Tensor::from_fn(&[hw, hw, 3], |_| rng.uniform()))
            .collect();
        (
            SequenceSample {
                frames: stack_frames(&frames).unwrap(),
                label: if content % 2 == 0 { Label::Real } else { Label::Fake },
                video_id: format!("v{content}"),
                start_frame: (content % 7) as usize,
            },
            seed,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Augmentation keeps label, metadata, shape, and the [0,1] range.
    #[test]
    fn augment_preserves_label_shape_and_range((sample, seed) in arb_sample()) {
        let out = augment(&sample, &AugmentationSpec::default(), seed);
        prop_assert_eq!(out.label, sample.label);
        prop_assert_eq!(out.video_id, sample.video_id);
        prop_assert_eq!(out.start_frame, sample.start_frame);
        prop_assert_eq!(out.frames.shape(), sample.frames.shape());
        prop_assert!(out.frames.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Sequence consistency: the same transform hits every frame, so
    /// reversing the frame order commutes with augmentation.
    #[test]
    fn augment_commutes_with_frame_reversal((sample, seed) in arb_sample()) {
        let t = sample.frames.shape()[0];
        let per = sample.frames.numel() / t;
        let reversed_frames: Vec<f64> = (0..t)
            .rev()
            .flat_map(|i| sample.frames.data()[i * per..(i + 1) * per].to_vec())
            .collect();
        let reversed = SequenceSample {
            frames: Tensor::new(sample.frames.shape().to_vec(), reversed_frames).unwrap(),
            ..sample.clone()
        };

        let aug_then_rev: Vec<f64> = {
            let a = augment(&sample, &AugmentationSpec::default(), seed);
            (0..t)
                .rev()
                .flat_map(|i| a.frames.data()[i * per..(i + 1) * per].to_vec())
                .collect()
        };
        let rev_then_aug = augment(&reversed, &AugmentationSpec::default(), seed);
        prop_assert_eq!(rev_then_aug.frames.data(), &aug_then_rev[..]);
    }

    /// Identical frames stay identical after augmentation.
    #[test]
    fn augment_maps_equal_frames_equally(( _ignored, seed) in arb_sample(), hw in 4usize..8) {
        let mut rng = CounterRng::new(seed ^ 0xABCD);
        let frame = Tensor::from_fn(&[hw, hw, 3], |_| rng.uniform());
        let sample = SequenceSample {
            frames: stack_frames(&[frame.clone(), frame]).unwrap(),
            label: Label::Real,
            video_id: "dup".into(),
            start_frame: 0,
        };
        let out = augment(&sample, &AugmentationSpec::default(), seed);
        let per = out.frames.numel() / 2;
        prop_assert_eq!(&out.frames.data()[..per], &out.frames.data()[per..]);
    }

    /// Every extracted clip is a consecutive run inside the video.
    #[test]
    fn extraction_yields_consecutive_in_bounds_clips(
        frames in 5usize..40,
        n in 1usize..24,
        seed in any::<u64>(),
    ) {
        let video: Vec<Tensor> = (0..frames)
            .map(|i| Tensor::filled(&[4, 4, 3], i as f64 / frames as f64))
            .collect();
        let samples = extract_samples("v", Label::Fake, &video, n, 5, seed).unwrap();
        prop_assert_eq!(samples.len(), n);
        for s in samples {
            prop_assert!(s.start_frame + 5 <= frames);
            for t in 0..5 {
                let expect = (s.start_frame + t) as f64 / frames as f64;
                prop_assert!((s.frames.data()[t * 48] - expect).abs() < 1e-12);
            }
        }
    }
}

/// Start indices cover the feasible range roughly uniformly across seeds:
/// the empirical CDF stays within 0.05 of uniform (about a KS bound at
/// n = 16000 draws).
#[test]
fn extraction_starts_cover_the_video_uniformly() {
    let frames: Vec<Tensor> = (0..68).map(|_| Tensor::zeros(&[2, 2, 3])).collect();
    let possible = 64usize; // 68 - 5 + 1
    let mut counts = vec![0usize; possible];
    let mut total = 0usize;
    for seed in 0..1000u64 {
        for s in extract_samples("v", Label::Real, &frames, 16, 5, seed).unwrap() {
            counts[s.start_frame] += 1;
            total += 1;
        }
    }
    let mut cum = 0.0;
    let mut max_dev: f64 = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        cum += c as f64 / total as f64;
        let uniform = (i + 1) as f64 / possible as f64;
        max_dev = max_dev.max((cum - uniform).abs());
    }
    assert!(max_dev < 0.05, "empirical CDF deviates by {max_dev:.4}");
}
