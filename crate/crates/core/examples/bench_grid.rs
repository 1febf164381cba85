use clrnet_core::data::{split_samples, AugmentationSpec, Split};
use clrnet_core::metrics::compute_metrics;
use clrnet_core::model::{build_clrnet, ClrnetConfig, LayerKind};
use clrnet_core::synth::{synth_dataset, ForgeryMethod};
use clrnet_core::tensor::Tensor;
use clrnet_core::train::{predict, train, AdamHyper, TrainConfig};
use std::time::Instant;

fn mild_aug() -> AugmentationSpec {
    AugmentationSpec { rotation: 0.0, zoom: 0.0, ..AugmentationSpec::default() }
}

fn run(tag: &str, lr: f64, epochs: usize, aug: AugmentationSpec, fbias: f64, seed: u64) {
    let t0 = Instant::now();
    let data = synth_dataset(ForgeryMethod::FlickerA, 40, 0.3, 5, 16, 100 + seed).unwrap();
    let cfg = ClrnetConfig { channels: [2, 2, 4, 4], ..ClrnetConfig::default() };
    let mut model = build_clrnet(&cfg, seed).unwrap();
    if fbias != 0.0 {
        for i in 0..model.layers.len() {
            if let LayerKind::ConvLstm(p) = &model.layers[i].kind {
                let shape = p.b_f.shape().to_vec();
                model.layers[i].kind.set_tensor("b_f", Tensor::filled(&shape, fbias)).unwrap();
            }
        }
    }
    let tc = TrainConfig { epochs, batch_size: 8, seed, augmentation: aug,
        adam: AdamHyper { lr, ..AdamHyper::default() } };
    let out = train(&model, &data, &tc, None).unwrap();
    let test = split_samples(&data, Split::Test, 32, seed, None).unwrap();
    let (p, l) = predict(&out.model, &test, 8).unwrap();
    let m = compute_metrics(&p, &l, 0.5).unwrap();
    let h = &out.history.0;
    println!("{tag} seed={seed}: F1={:.3} best_ep={} train {:.3}->{:.3} val_best {:.3} [{:.0?}]",
        m.f1, out.best_epoch, h[0].train_loss, h[h.len()-1].train_loss,
        h.iter().map(|e| e.val_loss).fold(f64::MAX, f64::min), t0.elapsed());
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_default();
    match mode.as_str() {
        "a" => run("A lr1e-2 default-aug e16", 1e-2, 16, AugmentationSpec::default(), 0.0, 1),
        "b" => run("B lr3e-3 mild-aug e16", 3e-3, 16, mild_aug(), 0.0, 1),
        "c" => run("C lr1e-2 mild-aug e16", 1e-2, 16, mild_aug(), 0.0, 1),
        "d" => run("D lr1e-2 default-aug fbias1 e16", 1e-2, 16, AugmentationSpec::default(), 1.0, 1),
        _ => eprintln!("pick a|b|c|d"),
    }
}
