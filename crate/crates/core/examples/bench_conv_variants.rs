use clrnet_core::rng::CounterRng;
use clrnet_core::tensor::Tensor;
use std::time::Instant;

// Standalone reimplementation for experiments.
fn im2col(x: &[f64], n: usize, h: usize, w: usize, cin: usize, kh: usize, kw: usize,
          pad: usize, stride: usize, oh: usize, ow: usize, col: &mut [f64]) {
    let cols = kh * kw * cin;
    col.fill(0.0);
    for s in 0..n {
        let xs = &x[s * h * w * cin..];
        let cs = &mut col[s * oh * ow * cols..];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (oy * ow + ox) * cols;
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize { continue; }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize { continue; }
                        let src = (iy as usize * w + ix as usize) * cin;
                        let dst = row + (ky * kw + kx) * cin;
                        for c in 0..cin {
                            cs[dst + c] = xs[src + c];
                        }
                    }
                }
            }
        }
    }
}

fn main() {
    let mut rng = CounterRng::new(1);
    let (n, h, w, cin, cout, k) = (40usize, 16usize, 16usize, 2usize, 8usize, 3usize);
    let x = Tensor::from_fn(&[n, h, w, cin], |_| rng.symmetric(1.0));
    let kt = Tensor::from_fn(&[k, k, cin, cout], |_| rng.symmetric(0.5));
    let cols = k * k * cin;
    let (oh, ow) = (h, w);
    let iters = 300;

    // Variant A: one im2col over the whole batch + one gemm.
    let mut col = vec![0.0; n * oh * ow * cols];
    let mut out = vec![0.0; n * oh * ow * cout];
    let t0 = Instant::now();
    for _ in 0..iters {
        im2col(x.data(), n, h, w, cin, k, k, 1, 1, oh, ow, &mut col);
        unsafe {
            matrixmultiply::dgemm(n * oh * ow, cols, cout, 1.0,
                col.as_ptr(), cols as isize, 1,
                kt.data().as_ptr(), cout as isize, 1,
                0.0, out.as_mut_ptr(), cout as isize, 1);
        }
        std::hint::black_box(&out);
    }
    println!("whole-batch im2col+1gemm (prealloc): {:.1?}/call", t0.elapsed() / iters);

    // Variant B: same but allocating each call (like production).
    let t0 = Instant::now();
    for _ in 0..iters {
        let mut col = vec![0.0; n * oh * ow * cols];
        let mut out = vec![0.0; n * oh * ow * cout];
        im2col(x.data(), n, h, w, cin, k, k, 1, 1, oh, ow, &mut col);
        unsafe {
            matrixmultiply::dgemm(n * oh * ow, cols, cout, 1.0,
                col.as_ptr(), cols as isize, 1,
                kt.data().as_ptr(), cout as isize, 1,
                0.0, out.as_mut_ptr(), cout as isize, 1);
        }
        std::hint::black_box(&out);
    }
    println!("whole-batch im2col+1gemm (alloc): {:.1?}/call", t0.elapsed() / iters);

    // Variant C: direct conv, no im2col: loop ky,kx with co-contiguous FMA.
    let mut out2 = vec![0.0; n * oh * ow * cout];
    let t0 = Instant::now();
    for _ in 0..iters {
        out2.fill(0.0);
        let xd = x.data();
        let kd = kt.data();
        for s in 0..n {
            let xs = &xd[s * h * w * cin..(s + 1) * h * w * cin];
            let os = &mut out2[s * oh * ow * cout..(s + 1) * oh * ow * cout];
            for oy in 0..oh {
                for ky in 0..k {
                    let iy = (oy + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize { continue; }
                    let iy = iy as usize;
                    for ox in 0..ow {
                        let orow = (oy * ow + ox) * cout;
                        for kx in 0..k {
                            let ix = (ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize { continue; }
                            let xrow = (iy * w + ix as usize) * cin;
                            let krow = (ky * k + kx) * cin;
                            for ci in 0..cin {
                                let xv = xs[xrow + ci];
                                let kr = &kd[(krow + ci) * cout..(krow + ci) * cout + cout];
                                let or = &mut os[orow..orow + cout];
                                for co in 0..cout {
                                    or[co] += xv * kr[co];
                                }
                            }
                        }
                    }
                }
            }
        }
        std::hint::black_box(&out2);
    }
    println!("direct conv serial: {:.1?}/call", t0.elapsed() / iters);
}
