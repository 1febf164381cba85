use clrnet_core::convlstm::{ConvLstmCell, ConvLstmParams};
use clrnet_core::ops::Padding;
use clrnet_core::rng::CounterRng;
use clrnet_core::tape::Tape;
use clrnet_core::tensor::Tensor;
use std::time::Instant;

fn main() {
    let mut rng = CounterRng::new(1);
    for (name, n, hw, cin, cout) in [("s1", 8usize, 16usize, 2usize, 2usize), ("s3", 8, 4, 4, 4)] {
        let p = ConvLstmParams::init(&mut rng, 3, cin, cout, 1, Padding::Same, Some((hw, hw)));
        let x = Tensor::from_fn(&[n, 5, hw, hw, cin], |_| rng.symmetric(1.0));
        let iters = 50;
        let t0 = Instant::now();
        for _ in 0..iters {
            let mut tape = Tape::new();
            let cell = ConvLstmCell::new(&mut tape, &p).unwrap();
            let xv = tape.input(x.clone());
            std::hint::black_box(cell.sequence(&mut tape, xv, None).unwrap());
        }
        let fwd = t0.elapsed() / iters;
        let t0 = Instant::now();
        for _ in 0..iters {
            let mut tape = Tape::new();
            let cell = ConvLstmCell::new(&mut tape, &p).unwrap();
            let xv = tape.input(x.clone());
            let out = cell.sequence(&mut tape, xv, None).unwrap();
            let loss = tape.sum_all(out);
            std::hint::black_box(tape.backward(loss).unwrap());
        }
        let both = t0.elapsed() / iters;
        println!("{name} cell sequence [N={n},T=5,{hw}x{hw},{cin}->{cout}]: fwd={fwd:.2?} fwd+bwd={both:.2?}");
    }
}
