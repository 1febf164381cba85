use clrnet_core::ops::{self, Padding};
use clrnet_core::rng::CounterRng;
use clrnet_core::tensor::Tensor;
use std::time::Instant;

fn main() {
    let mut rng = CounterRng::new(1);
    // Exactly the per-step pieces of an s1 cell: fused kernels 2->8.
    let h = Tensor::from_fn(&[8, 16, 16, 2], |_| rng.symmetric(1.0));
    let kh = Tensor::from_fn(&[3, 3, 2, 8], |_| rng.symmetric(0.5));
    let iters = 1000;

    let t0 = Instant::now();
    for _ in 0..iters { std::hint::black_box(ops::conv2d(&h, &kh, None, 1, Padding::Same).unwrap()); }
    println!("h-conv:      {:.1?}", t0.elapsed() / iters);

    let pre = Tensor::from_fn(&[8, 16, 16, 8], |_| rng.symmetric(1.0));
    let c = Tensor::from_fn(&[8, 16, 16, 2], |_| rng.symmetric(1.0));
    let pi = Tensor::from_fn(&[16, 16, 2], |_| rng.symmetric(0.3));
    let t0 = Instant::now();
    for _ in 0..iters { std::hint::black_box(ops::lstm_gates::lstm_state_forward(&pre, &c, Some(&pi), Some(&pi)).unwrap()); }
    println!("lstm_state:  {:.1?}", t0.elapsed() / iters);
    let t0 = Instant::now();
    for _ in 0..iters { std::hint::black_box(ops::lstm_gates::lstm_out_forward(&pre, &c, Some(&pi)).unwrap()); }
    println!("lstm_out:    {:.1?}", t0.elapsed() / iters);

    let a = Tensor::from_fn(&[8, 16, 16, 8], |_| rng.symmetric(1.0));
    let t0 = Instant::now();
    for _ in 0..iters { std::hint::black_box(ops::add(&a, &pre).unwrap()); }
    println!("add:         {:.1?}", t0.elapsed() / iters);

    let x5 = Tensor::from_fn(&[8, 5, 16, 16, 2], |_| rng.symmetric(1.0));
    let t0 = Instant::now();
    for _ in 0..iters { std::hint::black_box(ops::index_time(&x5, 2).unwrap()); }
    println!("index_time:  {:.1?}", t0.elapsed() / iters);

    // x-conv over the flattened sequence.
    let xf = Tensor::from_fn(&[40, 16, 16, 2], |_| rng.symmetric(1.0));
    let t0 = Instant::now();
    for _ in 0..200 { std::hint::black_box(ops::conv2d(&xf, &kh, None, 1, Padding::Same).unwrap()); }
    println!("x-conv(40):  {:.1?}", t0.elapsed() / 200);
}
