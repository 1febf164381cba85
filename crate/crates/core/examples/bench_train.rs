use clrnet_core::data::{split_samples, Split};
use clrnet_core::metrics::compute_metrics;
use clrnet_core::model::{build_clrnet, ClrnetConfig};
use clrnet_core::synth::{synth_dataset, ForgeryMethod};
use clrnet_core::train::{predict, train, AdamHyper, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(15);
    let w: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0);
    let channels = match w {
        0 => [2, 2, 4, 4],
        1 => [2, 4, 4, 4],
        _ => [4, 4, 8, 8],
    };
    for seed in [1u64, 2] {
        let t0 = Instant::now();
        let data = synth_dataset(ForgeryMethod::FlickerA, 40, 0.3, 5, 16, 100 + seed).unwrap();
        let cfg = ClrnetConfig { channels, ..ClrnetConfig::default() };
        let model = build_clrnet(&cfg, seed).unwrap();
        let tc = TrainConfig {
            epochs,
            batch_size: 8,
            seed,
            adam: AdamHyper { lr, ..AdamHyper::default() },
            ..TrainConfig::default()
        };
        let out = train(&model, &data, &tc, None).unwrap();
        let test = split_samples(&data, Split::Test, 32, seed, None).unwrap();
        let (probs, labels) = predict(&out.model, &test, 8).unwrap();
        let m = compute_metrics(&probs, &labels, 0.5).unwrap();
        let h = &out.history.0;
        println!(
            "seed {seed}: F1={:.3} P={:.3} R={:.3} best_ep={} train_loss {:.3}->{:.3} val {:.3}->{:.3} [{:.0?}]",
            m.f1, m.precision, m.recall, out.best_epoch,
            h[0].train_loss, h[h.len()-1].train_loss,
            h[0].val_loss, h.iter().map(|e| e.val_loss).fold(f64::MAX, f64::min),
            t0.elapsed()
        );
    }
}
