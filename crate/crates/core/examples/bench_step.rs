use clrnet_core::blocks::Mode;
use clrnet_core::model::{build_clrnet, ClrnetConfig};
use clrnet_core::rng::CounterRng;
use clrnet_core::tensor::Tensor;
use std::time::Instant;

fn step(m: &clrnet_core::model::LayeredModel, batch: &Tensor, labels: &[u8]) -> (f64, std::time::Duration, std::time::Duration) {
    let t0 = Instant::now();
    let mut fp = m.forward_pass(batch, Mode::Train, 7).unwrap();
    let fwd = t0.elapsed();
    let loss = fp.tape.bce_loss(fp.output, labels).unwrap();
    let lv = fp.tape.value(loss).item().unwrap();
    let t0 = Instant::now();
    let grads = fp.tape.backward(loss).unwrap();
    let bwd = t0.elapsed();
    std::hint::black_box(&grads);
    (lv, fwd, bwd)
}

fn main() {
    for (name, channels) in [
        ("w2244", [2usize, 2, 4, 4]),
        ("w2444", [2, 4, 4, 4]),
        ("w4488", [4, 4, 8, 8]),
    ] {
        let cfg = ClrnetConfig { channels, ..ClrnetConfig::default() };
        let m = build_clrnet(&cfg, 1).unwrap();
        let mut rng = CounterRng::new(2);
        let batch = Tensor::from_fn(&[8, 5, 32, 32, 3], |_| rng.uniform());
        let labels = vec![1u8, 0, 1, 0, 1, 0, 1, 0];
        step(&m, &batch, &labels); // warmup
        let mut best_f = std::time::Duration::MAX;
        let mut best_b = std::time::Duration::MAX;
        for _ in 0..4 {
            let (_, f, b) = step(&m, &batch, &labels);
            best_f = best_f.min(f);
            best_b = best_b.min(b);
        }
        let t0 = Instant::now();
        for _ in 0..3 { std::hint::black_box(m.forward(&batch, Mode::Infer, 0).unwrap()); }
        let infer = t0.elapsed() / 3;
        println!("{name}: train_fwd={best_f:.1?} bwd={best_b:.1?} step≈{:.1?} infer={infer:.1?}", best_f + best_b);
    }
}
