use clrnet_core::data::{split_samples, AugmentationSpec, Split};
use clrnet_core::metrics::compute_metrics;
use clrnet_core::model::{build_clrnet, ClrnetConfig};
use clrnet_core::synth::{synth_dataset, ForgeryMethod};
use clrnet_core::train::{predict, train, AdamHyper, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args[1].parse().unwrap();
    let epochs: usize = args[2].parse().unwrap();
    let aug = match args[3].as_str() {
        "mild" => AugmentationSpec {
            rotation: 0.0,
            zoom: 0.0,
            ..AugmentationSpec::default()
        },
        "full" => AugmentationSpec::default(),
        _ => AugmentationSpec::identity(),
    };
    let seeds: Vec<u64> = args[4].split(',').map(|s| s.parse().unwrap()).collect();
    for seed in seeds {
        let t0 = Instant::now();
        let data = synth_dataset(ForgeryMethod::FlickerA, 40, 0.3, 5, 16, 100 + seed).unwrap();
        let cfg = ClrnetConfig {
            channels: [2, 2, 4, 4],
            ..ClrnetConfig::default()
        };
        let model = build_clrnet(&cfg, seed).unwrap();
        let tc = TrainConfig {
            epochs,
            batch_size: 8,
            seed,
            augmentation: aug.clone(),
            adam: AdamHyper {
                lr,
                ..AdamHyper::default()
            },
        };
        let out = train(&model, &data, &tc, None).unwrap();
        let test = split_samples(&data, Split::Test, 32, seed, None).unwrap();
        let (p, l) = predict(&out.model, &test, 8).unwrap();
        let m = compute_metrics(&p, &l, 0.5).unwrap();
        let h = &out.history.0;
        println!(
            "seed={seed}: F1={:.3} best_ep={} train {:.3}->{:.3} val_best {:.3} [{:.0?}]",
            m.f1,
            out.best_epoch,
            h[0].train_loss,
            h[h.len() - 1].train_loss,
            h.iter().map(|e| e.val_loss).fold(f64::MAX, f64::min),
            t0.elapsed()
        );
    }
}
