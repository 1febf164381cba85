use clrnet_core::ops::{self, Padding};
use clrnet_core::rng::CounterRng;
use clrnet_core::tensor::Tensor;
use std::time::Instant;

fn main() {
    let mut rng = CounterRng::new(1);
    // Stage-1-like h-conv: [8,16,16,2] * [3,3,2,8]
    let x = Tensor::from_fn(&[8, 16, 16, 2], |_| rng.symmetric(1.0));
    let k = Tensor::from_fn(&[3, 3, 2, 8], |_| rng.symmetric(0.5));
    let n = 500;
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(ops::conv2d(&x, &k, None, 1, Padding::Same).unwrap()); }
    println!("h-conv s1 fwd: {:.1?}/call", t0.elapsed() / n);

    let g = ops::conv_geometry(x.shape(), k.shape(), 1, Padding::Same).unwrap();
    let dout = Tensor::from_fn(&[8, 16, 16, 8], |_| rng.symmetric(1.0));
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(ops::conv::conv2d_backward(&x, &k, &g, &dout, true, None)); }
    println!("h-conv s1 bwd: {:.1?}/call", t0.elapsed() / n);

    // Batched x-conv: [40,16,16,2] * [3,3,2,8]
    let xb = Tensor::from_fn(&[40, 16, 16, 2], |_| rng.symmetric(1.0));
    let t0 = Instant::now();
    for _ in 0..100 { std::hint::black_box(ops::conv2d(&xb, &k, None, 1, Padding::Same).unwrap()); }
    println!("x-conv s1 fwd (batched T): {:.1?}/call", t0.elapsed() / 100);

    // Fused gates at stage-1 size
    let pre = Tensor::from_fn(&[8, 16, 16, 8], |_| rng.symmetric(1.0));
    let c = Tensor::from_fn(&[8, 16, 16, 2], |_| rng.symmetric(1.0));
    let pi = Tensor::from_fn(&[16, 16, 2], |_| rng.symmetric(0.3));
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(ops::lstm_gates::lstm_state_forward(&pre, &c, Some(&pi), Some(&pi)).unwrap()); }
    println!("lstm_state s1 fwd: {:.1?}/call", t0.elapsed() / n);

    // BN on sequence tensor [8,5,16,16,2]
    let xs = Tensor::from_fn(&[8, 5, 16, 16, 2], |_| rng.symmetric(1.0));
    let gamma = Tensor::filled(&[2], 1.0);
    let beta = Tensor::zeros(&[2]);
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(ops::batch_norm_train(&xs, &gamma, &beta, 1e-3).unwrap()); }
    println!("bn s1 fwd: {:.1?}/call", t0.elapsed() / n);

    // Tensor alloc overhead proxy: clone+map of [8,5,16,16,2]
    let t0 = Instant::now();
    for _ in 0..n { std::hint::black_box(xs.map(|v| v.max(0.0))); }
    println!("relu s1 (map+alloc): {:.1?}/call", t0.elapsed() / n);
}
