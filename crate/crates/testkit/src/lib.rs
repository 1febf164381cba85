//! Test-only support code: an independent scalar-loop oracle for the
//! recurrent cell, plus small statistics helpers shared by integration
//! suites. Nothing here touches the library's conv/GEMM/fused-gate paths;
//! the oracle recomputes everything with plain nested loops.

use clrnet_core::convlstm::{ConvLstmParams, PeepholeParams};
use clrnet_core::tensor::Tensor;

/// Minimal NHWC accessor for oracle arithmetic.
pub struct Grid {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Grid {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }
    pub fn from_tensor(t: &Tensor) -> Self {
        let s = t.shape();
        Grid {
            n: s[0],
            h: s[1],
            w: s[2],
            c: s[3],
            data: t.data().to_vec(),
        }
    }
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((n * self.h + y) * self.w + x) * self.c + c]
    }
    pub fn at_mut(&mut self, n: usize, y: usize, x: usize, c: usize) -> &mut f64 {
        &mut self.data[((n * self.h + y) * self.w + x) * self.c + c]
    }
}

/// Output length and low-side padding of one convolution axis.
pub fn out_len(len: usize, k: usize, stride: usize, same: bool) -> (usize, usize) {
    if same {
        let out = len.div_ceil(stride);
        let pad = ((out - 1) * stride + k).saturating_sub(len) / 2;
        (out, pad)
    } else {
        ((len - k) / stride + 1, 0)
    }
}

/// Plain cross-correlation with explicit bounds checks.
pub fn oracle_conv(
    x: &Grid,
    k: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    same: bool,
) -> Grid {
    let ks = k.shape();
    let (kh, kw, cin, cout) = (ks[0], ks[1], ks[2], ks[3]);
    assert_eq!(cin, x.c, "oracle_conv channel mismatch");
    let (oh, pad_y) = out_len(x.h, kh, stride, same);
    let (ow, pad_x) = out_len(x.w, kw, stride, same);
    let mut out = Grid::zeros(x.n, oh, ow, cout);
    for n in 0..x.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = bias.map_or(0.0, |b| b.data()[co]);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad_y as isize;
                            let ix = (ox * stride + kx) as isize - pad_x as isize;
                            if iy < 0 || iy >= x.h as isize || ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x.at(n, iy as usize, ix as usize, ci)
                                    * k.data()[((ky * kw + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    *out.at_mut(n, oy, ox, co) = acc;
                }
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One oracle step's outputs.
pub struct OracleStep {
    pub h: Grid,
    pub c: Grid,
    pub gate_i: Grid,
    pub gate_f: Grid,
    pub gate_o: Grid,
}

/// One recurrence step, written directly from the update equations.
pub fn oracle_step(x: &Grid, h_prev: &Grid, c_prev: &Grid, p: &ConvLstmParams) -> OracleStep {
    let s = p.stride;
    let xi = oracle_conv(x, &p.w_xi, Some(&p.b_i), s, true);
    let xf = oracle_conv(x, &p.w_xf, Some(&p.b_f), s, true);
    let xc = oracle_conv(x, &p.w_xc, Some(&p.b_c), s, true);
    let xo = oracle_conv(x, &p.w_xo, Some(&p.b_o), s, true);
    let hi = oracle_conv(h_prev, &p.w_hi, None, 1, true);
    let hf = oracle_conv(h_prev, &p.w_hf, None, 1, true);
    let hc = oracle_conv(h_prev, &p.w_hc, None, 1, true);
    let ho = oracle_conv(h_prev, &p.w_ho, None, 1, true);

    let peep = |t: Option<&Tensor>, n: usize, y: usize, x_: usize, c: usize, cell: &Grid| -> f64 {
        match t {
            Some(w) => {
                let (ww, wc) = (w.shape()[1], w.shape()[2]);
                w.data()[(y * ww + x_) * wc + c] * cell.at(n, y, x_, c)
            }
            None => 0.0,
        }
    };
    let (w_ci, w_cf, w_co) = match &p.peephole {
        Some(PeepholeParams { w_ci, w_cf, w_co }) => (Some(w_ci), Some(w_cf), Some(w_co)),
        None => (None, None, None),
    };

    let (oh, ow, cout) = (xi.h, xi.w, xi.c);
    let mut gate_i = Grid::zeros(x.n, oh, ow, cout);
    let mut gate_f = Grid::zeros(x.n, oh, ow, cout);
    let mut gate_o = Grid::zeros(x.n, oh, ow, cout);
    let mut c_t = Grid::zeros(x.n, oh, ow, cout);
    let mut h_t = Grid::zeros(x.n, oh, ow, cout);
    for n in 0..x.n {
        for y in 0..oh {
            for x_ in 0..ow {
                for c in 0..cout {
                    let i = sigmoid(
                        xi.at(n, y, x_, c) + hi.at(n, y, x_, c) + peep(w_ci, n, y, x_, c, c_prev),
                    );
                    let f = sigmoid(
                        xf.at(n, y, x_, c) + hf.at(n, y, x_, c) + peep(w_cf, n, y, x_, c, c_prev),
                    );
                    let cc = f * c_prev.at(n, y, x_, c)
                        + i * (xc.at(n, y, x_, c) + hc.at(n, y, x_, c)).tanh();
                    *c_t.at_mut(n, y, x_, c) = cc;
                    let o = sigmoid(
                        xo.at(n, y, x_, c) + ho.at(n, y, x_, c) + peep(w_co, n, y, x_, c, &c_t),
                    );
                    *h_t.at_mut(n, y, x_, c) = o * cc.tanh();
                    *gate_i.at_mut(n, y, x_, c) = i;
                    *gate_f.at_mut(n, y, x_, c) = f;
                    *gate_o.at_mut(n, y, x_, c) = o;
                }
            }
        }
    }
    OracleStep {
        h: h_t,
        c: c_t,
        gate_i,
        gate_f,
        gate_o,
    }
}

pub fn max_abs_diff(a: &Grid, b: &[f64]) -> f64 {
    a.data
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Median of a small sample (averages the middle pair on even counts).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
