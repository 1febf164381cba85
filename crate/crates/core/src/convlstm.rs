//! Convolutional LSTM cell and sequence scanner.
//!
//! Input-to-state and state-to-state transitions are convolutions over NHWC
//! feature maps; gates read the cell state through optional per-location
//! peephole weights. One step computes, in order,
//!
//! ```text
//! i = σ(W_xi * x + W_hi * h + [W_ci ∘ c] + b_i)
//! f = σ(W_xf * x + W_hf * h + [W_cf ∘ c] + b_f)
//! c' = f ∘ c + i ∘ tanh(W_xc * x + W_hc * h + b_c)
//! o = σ(W_xo * x + W_ho * h + [W_co ∘ c'] + b_o)
//! h' = o ∘ tanh(c')
//! ```
//!
//! with the bracketed terms present when peepholes are enabled. For speed
//! the four gate convolutions are evaluated as one convolution with the
//! kernels concatenated along the output-channel axis, in gate order
//! [i | f | c | o]; the parameters themselves stay separate tensors.

use crate::error::{Error, Result};
use crate::ops::{conv_geometry, Padding};
use crate::rng::CounterRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Gate order used for all fused tensors.
pub const GATES: [&str; 4] = ["i", "f", "c", "o"];

/// Per-location gate weights reading the cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct PeepholeParams {
    pub w_ci: Tensor,
    pub w_cf: Tensor,
    pub w_co: Tensor,
}

/// Value-form parameters of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmParams {
    pub w_xi: Tensor,
    pub w_xf: Tensor,
    pub w_xc: Tensor,
    pub w_xo: Tensor,
    pub w_hi: Tensor,
    pub w_hf: Tensor,
    pub w_hc: Tensor,
    pub w_ho: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
    /// Present iff peepholes are enabled.
    pub peephole: Option<PeepholeParams>,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvLstmParams {
    /// Seeded init: kernels uniform in ±sqrt(3 / fan_in) with fan_in =
    /// kh*kw*cin, biases and peepholes zero. Draw order is the canonical
    /// tensor order, so a given stream always produces the same cell.
    pub fn init(
        rng: &mut CounterRng,
        kernel: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        padding: Padding,
        peephole_hw: Option<(usize, usize)>,
    ) -> Self {
        let mut kinit = |kh: usize, kw: usize, ci: usize, co: usize| {
            let bound = (3.0 / (kh * kw * ci) as f64).sqrt();
            Tensor::from_fn(&[kh, kw, ci, co], |_| rng.symmetric(bound))
        };
        let w_xi = kinit(kernel, kernel, cin, cout);
        let w_xf = kinit(kernel, kernel, cin, cout);
        let w_xc = kinit(kernel, kernel, cin, cout);
        let w_xo = kinit(kernel, kernel, cin, cout);
        let w_hi = kinit(kernel, kernel, cout, cout);
        let w_hf = kinit(kernel, kernel, cout, cout);
        let w_hc = kinit(kernel, kernel, cout, cout);
        let w_ho = kinit(kernel, kernel, cout, cout);
        ConvLstmParams {
            w_xi,
            w_xf,
            w_xc,
            w_xo,
            w_hi,
            w_hf,
            w_hc,
            w_ho,
            b_i: Tensor::zeros(&[cout]),
            b_f: Tensor::zeros(&[cout]),
            b_c: Tensor::zeros(&[cout]),
            b_o: Tensor::zeros(&[cout]),
            peephole: peephole_hw.map(|(h, w)| PeepholeParams {
                w_ci: Tensor::zeros(&[h, w, cout]),
                w_cf: Tensor::zeros(&[h, w, cout]),
                w_co: Tensor::zeros(&[h, w, cout]),
            }),
            stride,
            padding,
        }
    }

    /// All-zero parameters, useful for analytic tests.
    pub fn zeros(
        kernel: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        padding: Padding,
        peephole_hw: Option<(usize, usize)>,
    ) -> Self {
        let k = |ci: usize| Tensor::zeros(&[kernel, kernel, ci, cout]);
        ConvLstmParams {
            w_xi: k(cin),
            w_xf: k(cin),
            w_xc: k(cin),
            w_xo: k(cin),
            w_hi: k(cout),
            w_hf: k(cout),
            w_hc: k(cout),
            w_ho: k(cout),
            b_i: Tensor::zeros(&[cout]),
            b_f: Tensor::zeros(&[cout]),
            b_c: Tensor::zeros(&[cout]),
            b_o: Tensor::zeros(&[cout]),
            peephole: peephole_hw.map(|(h, w)| PeepholeParams {
                w_ci: Tensor::zeros(&[h, w, cout]),
                w_cf: Tensor::zeros(&[h, w, cout]),
                w_co: Tensor::zeros(&[h, w, cout]),
            }),
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w_xi.shape()[3]
    }

    pub fn in_channels(&self) -> usize {
        self.w_xi.shape()[2]
    }

    /// Shape agreement across the four input kernels, the four hidden
    /// kernels, biases, and peepholes.
    pub fn validate(&self) -> Result<()> {
        let xs = self.w_xi.shape();
        for (name, k) in [("w_xf", &self.w_xf), ("w_xc", &self.w_xc), ("w_xo", &self.w_xo)] {
            if k.shape() != xs {
                return Err(Error::dimension(format!(
                    "cell input kernels disagree: w_xi {xs:?} vs {name} {:?}",
                    k.shape()
                )));
            }
        }
        let cout = xs[3];
        let hs = self.w_hi.shape();
        if hs[2] != cout || hs[3] != cout {
            return Err(Error::dimension(format!(
                "hidden kernel channels must be [{cout},{cout}], got {:?}",
                &hs[2..]
            )));
        }
        for (name, k) in [("w_hf", &self.w_hf), ("w_hc", &self.w_hc), ("w_ho", &self.w_ho)] {
            if k.shape() != hs {
                return Err(Error::dimension(format!(
                    "cell hidden kernels disagree: w_hi {hs:?} vs {name} {:?}",
                    k.shape()
                )));
            }
        }
        for (name, b) in [
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_c", &self.b_c),
            ("b_o", &self.b_o),
        ] {
            if b.shape() != [cout] {
                return Err(Error::dimension(format!(
                    "bias {name}: expected [{cout}], got {:?}",
                    b.shape()
                )));
            }
        }
        if let Some(p) = &self.peephole {
            let ps = p.w_ci.shape();
            if ps.len() != 3 || ps[2] != cout {
                return Err(Error::dimension(format!(
                    "peephole tensors must be [H',W',{cout}], got {ps:?}"
                )));
            }
            for (name, t) in [("w_cf", &p.w_cf), ("w_co", &p.w_co)] {
                if t.shape() != ps {
                    return Err(Error::dimension(format!(
                        "peephole tensors disagree: w_ci {ps:?} vs {name} {:?}",
                        t.shape()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical (name, tensor) walk used by persistence and the optimizer.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![
            ("w_xi", &self.w_xi),
            ("w_xf", &self.w_xf),
            ("w_xc", &self.w_xc),
            ("w_xo", &self.w_xo),
            ("w_hi", &self.w_hi),
            ("w_hf", &self.w_hf),
            ("w_hc", &self.w_hc),
            ("w_ho", &self.w_ho),
        ];
        if let Some(p) = &self.peephole {
            v.push(("w_ci", &p.w_ci));
            v.push(("w_cf", &p.w_cf));
            v.push(("w_co", &p.w_co));
        }
        v.push(("b_i", &self.b_i));
        v.push(("b_f", &self.b_f));
        v.push(("b_c", &self.b_c));
        v.push(("b_o", &self.b_o));
        v
    }

    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = match name {
            "w_xi" => &mut self.w_xi,
            "w_xf" => &mut self.w_xf,
            "w_xc" => &mut self.w_xc,
            "w_xo" => &mut self.w_xo,
            "w_hi" => &mut self.w_hi,
            "w_hf" => &mut self.w_hf,
            "w_hc" => &mut self.w_hc,
            "w_ho" => &mut self.w_ho,
            "b_i" => &mut self.b_i,
            "b_f" => &mut self.b_f,
            "b_c" => &mut self.b_c,
            "b_o" => &mut self.b_o,
            "w_ci" | "w_cf" | "w_co" => {
                let p = self.peephole.as_mut().ok_or_else(|| {
                    Error::contract(format!("cell has no peepholes, cannot set {name}"))
                })?;
                match name {
                    "w_ci" => &mut p.w_ci,
                    "w_cf" => &mut p.w_cf,
                    _ => &mut p.w_co,
                }
            }
            other => return Err(Error::contract(format!("unknown cell tensor '{other}'"))),
        };
        if slot.shape() != value.shape() {
            return Err(Error::dimension(format!(
                "cell tensor {name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }
}

/// Hidden and cell state handles on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ConvLstmState {
    pub h: Var,
    pub c: Var,
}

/// Tape handles for one registered cell's parameters, in canonical order.
#[derive(Debug, Clone)]
pub struct ConvLstmVars {
    pub tensors: Vec<(&'static str, Var)>,
}

/// A cell registered on a tape, with fused gate kernels prepared once.
pub struct ConvLstmCell {
    vars: ConvLstmVars,
    fused_kx: Var,
    fused_kh: Var,
    fused_b: Var,
    peep: Option<(Var, Var, Var)>,
    stride: usize,
    padding: Padding,
    cout: usize,
    kx_shape: Vec<usize>,
}

impl ConvLstmCell {
    pub fn new(tape: &mut Tape, params: &ConvLstmParams) -> Result<Self> {
        ConvLstmCell::new_with(tape, params, true)
    }

    /// Register the cell; `differentiable: false` records the weights as
    /// plain inputs so backward passes prune below them.
    pub fn new_with(tape: &mut Tape, params: &ConvLstmParams, differentiable: bool) -> Result<Self> {
        params.validate()?;
        let named = params.named_tensors();
        let vars: Vec<(&'static str, Var)> = named
            .iter()
            .map(|(name, t)| {
                let v = if differentiable {
                    tape.leaf((*t).clone())
                } else {
                    tape.input((*t).clone())
                };
                (*name, v)
            })
            .collect();
        let get = |name: &str| vars.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
        let kx = [
            get("w_xi").unwrap(),
            get("w_xf").unwrap(),
            get("w_xc").unwrap(),
            get("w_xo").unwrap(),
        ];
        let kh = [
            get("w_hi").unwrap(),
            get("w_hf").unwrap(),
            get("w_hc").unwrap(),
            get("w_ho").unwrap(),
        ];
        let bs = [
            get("b_i").unwrap(),
            get("b_f").unwrap(),
            get("b_c").unwrap(),
            get("b_o").unwrap(),
        ];
        let fused_kx = tape.concat_last_axis(&kx)?;
        let fused_kh = tape.concat_last_axis(&kh)?;
        let fused_b = tape.concat_last_axis(&bs)?;
        let peep = match &params.peephole {
            Some(_) => Some((
                get("w_ci").unwrap(),
                get("w_cf").unwrap(),
                get("w_co").unwrap(),
            )),
            None => None,
        };
        Ok(ConvLstmCell {
            vars: ConvLstmVars { tensors: vars },
            fused_kx,
            fused_kh,
            fused_b,
            peep,
            stride: params.stride,
            padding: params.padding,
            cout: params.out_channels(),
            kx_shape: params.w_xi.shape().to_vec(),
        })
    }

    pub fn vars(&self) -> &ConvLstmVars {
        &self.vars
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }

    /// Spatial shape of the state for a given input spatial shape.
    pub fn state_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let g = conv_geometry(
            &[1, in_h, in_w, self.kx_shape[2]],
            &self.kx_shape,
            self.stride,
            self.padding,
        )?;
        Ok((g.out_h, g.out_w))
    }

    /// All-zero initial state for a batch of the given input spatial size.
    pub fn zero_state(
        &self,
        tape: &mut Tape,
        batch: usize,
        in_h: usize,
        in_w: usize,
    ) -> Result<ConvLstmState> {
        let (oh, ow) = self.state_hw(in_h, in_w)?;
        let z = Tensor::zeros(&[batch, oh, ow, self.cout]);
        Ok(ConvLstmState {
            h: tape.input(z.clone()),
            c: tape.input(z),
        })
    }

    /// One recurrence step. Returns the hidden output and the next state.
    pub fn step(
        &self,
        tape: &mut Tape,
        x_t: Var,
        state: &ConvLstmState,
    ) -> Result<(Var, ConvLstmState)> {
        let xs = tape.value(x_t).shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::dimension(format!(
                "convlstm step input must be [N,H,W,Cin], got {xs:?}"
            )));
        }
        let (oh, ow) = self.state_hw(xs[1], xs[2])?;
        let expected = [xs[0], oh, ow, self.cout];
        if tape.value(state.h).shape() != expected {
            return Err(Error::dimension(format!(
                "convlstm state shape {:?} does not match expected {expected:?}",
                tape.value(state.h).shape()
            )));
        }

        let xpre = tape.conv2d(x_t, self.fused_kx, Some(self.fused_b), self.stride, self.padding)?;
        let hpre = tape.conv2d(state.h, self.fused_kh, None, 1, Padding::Same)?;
        let pre = tape.add(xpre, hpre)?;
        self.finish_step(tape, pre, state)
    }

    /// Gate math shared by [`Self::step`] and [`Self::sequence`], starting
    /// from the summed pre-activations.
    fn finish_step(
        &self,
        tape: &mut Tape,
        pre: Var,
        state: &ConvLstmState,
    ) -> Result<(Var, ConvLstmState)> {
        let c_t = tape.lstm_state(pre, state.c, self.peep.map(|p| p.0), self.peep.map(|p| p.1))?;
        let h_t = tape.lstm_out(pre, c_t, self.peep.map(|p| p.2))?;
        Ok((h_t, ConvLstmState { h: h_t, c: c_t }))
    }

    /// Scan over the time axis of `x` [N,T,H,W,Cin], returning all hidden
    /// states stacked as [N,T,H',W',Cout].
    pub fn sequence(
        &self,
        tape: &mut Tape,
        x: Var,
        init: Option<ConvLstmState>,
    ) -> Result<Var> {
        let xs = tape.value(x).shape().to_vec();
        if xs.len() != 5 {
            return Err(Error::dimension(format!(
                "convlstm sequence input must be [N,T,H,W,Cin], got {xs:?}"
            )));
        }
        let steps = xs[1];
        if steps == 0 {
            return Err(Error::contract("convlstm sequence needs T >= 1"));
        }
        let mut state = match init {
            Some(s) => s,
            None => self.zero_state(tape, xs[0], xs[2], xs[3])?,
        };

        // The input-side convolutions carry no recurrence: run all T steps
        // as one batched convolution, then scan.
        let (n, h, w, cin) = (xs[0], xs[2], xs[3], xs[4]);
        let flat = tape.reshape(x, vec![n * steps, h, w, cin])?;
        let xpre_flat = tape.conv2d(
            flat,
            self.fused_kx,
            Some(self.fused_b),
            self.stride,
            self.padding,
        )?;
        let os = tape.value(xpre_flat).shape().to_vec();
        let xpre = tape.reshape(xpre_flat, vec![n, steps, os[1], os[2], os[3]])?;

        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xpre_t = tape.index_time(xpre, t)?;
            let hpre = tape.conv2d(state.h, self.fused_kh, None, 1, Padding::Same)?;
            let pre = tape.add(xpre_t, hpre)?;
            let (h_t, next) = self.finish_step(tape, pre, &state)?;
            hs.push(h_t);
            state = next;
        }
        tape.stack_time(&hs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_cell(tape: &mut Tape, cin: usize, cout: usize, peep: bool) -> ConvLstmCell {
        let p = ConvLstmParams::zeros(
            3,
            cin,
            cout,
            1,
            Padding::Same,
            if peep { Some((4, 4)) } else { None },
        );
        ConvLstmCell::new(tape, &p).unwrap()
    }

    #[test]
    fn zero_weights_halve_the_cell_state() {
        let mut tape = Tape::new();
        let cell = zero_cell(&mut tape, 2, 3, true);
        let x = tape.leaf(Tensor::from_fn(&[1, 4, 4, 2], |i| (i as f64).sin()));
        let c0 = Tensor::from_fn(&[1, 4, 4, 3], |i| 0.1 * i as f64 - 2.0);
        let h0 = Tensor::zeros(&[1, 4, 4, 3]);
        let state = ConvLstmState {
            h: tape.leaf(h0),
            c: tape.leaf(c0.clone()),
        };
        let (h, next) = cell.step(&mut tape, x, &state).unwrap();
        let c_t = tape.value(next.c);
        let h_t = tape.value(h);
        for (i, (&c_out, &c_in)) in c_t.data().iter().zip(c0.data()).enumerate() {
            assert!((c_out - 0.5 * c_in).abs() < 1e-12, "cell elem {i}");
        }
        for (&h_out, &c_in) in h_t.data().iter().zip(c0.data()) {
            assert!((h_out - 0.5 * (0.5 * c_in).tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_zero_state_stays_zero_with_arbitrary_kernels() {
        let mut tape = Tape::new();
        let mut rng = CounterRng::new(5);
        let p = ConvLstmParams::init(&mut rng, 3, 2, 3, 1, Padding::Same, Some((4, 4)));
        // Biases stay zero in init; make sure of it for the analytic claim.
        assert!(p.b_i.data().iter().all(|&v| v == 0.0));
        p.validate().unwrap();
        let cell = ConvLstmCell::new(&mut tape, &p).unwrap();
        let x = tape.leaf(Tensor::zeros(&[2, 4, 4, 2]));
        let state = cell.zero_state(&mut tape, 2, 4, 4).unwrap();
        let (h, next) = cell.step(&mut tape, x, &state).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(next.c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gates_stay_in_open_unit_interval_and_state_shape_is_constant() {
        let mut tape = Tape::new();
        let mut rng = CounterRng::new(17);
        let p = ConvLstmParams::init(&mut rng, 3, 3, 4, 1, Padding::Same, Some((6, 6)));
        let cell = ConvLstmCell::new(&mut tape, &p).unwrap();
        let x = tape.leaf(Tensor::from_fn(&[1, 3, 6, 6, 3], |i| ((i * 7) % 13) as f64 / 6.5 - 1.0));
        let out = cell.sequence(&mut tape, x, None).unwrap();
        let o = tape.value(out);
        assert_eq!(o.shape(), &[1, 3, 6, 6, 4]);
        assert!(o.data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn sequence_of_one_equals_single_step() {
        let mut tape = Tape::new();
        let mut rng = CounterRng::new(23);
        let p = ConvLstmParams::init(&mut rng, 3, 2, 2, 1, Padding::Same, None);
        let cell = ConvLstmCell::new(&mut tape, &p).unwrap();
        let x5 = Tensor::from_fn(&[2, 1, 4, 4, 2], |i| (i as f64 * 0.37).cos());
        let x = tape.leaf(x5.clone());
        let seq = cell.sequence(&mut tape, x, None).unwrap();

        let x_t = tape.leaf(crate::ops::index_time(&x5, 0).unwrap());
        let state = cell.zero_state(&mut tape, 2, 4, 4).unwrap();
        let (h, _) = cell.step(&mut tape, x_t, &state).unwrap();
        let seq_val = crate::ops::index_time(tape.value(seq), 0).unwrap();
        assert!(seq_val.bitwise_eq(tape.value(h)));
    }

    #[test]
    fn zero_params_decay_recurrence() {
        let mut tape = Tape::new();
        let cell = zero_cell(&mut tape, 1, 1, false);
        let c0 = 0.8;
        let x = tape.leaf(Tensor::zeros(&[1, 3, 2, 2, 1]));
        let init = ConvLstmState {
            h: tape.leaf(Tensor::zeros(&[1, 2, 2, 1])),
            c: tape.leaf(Tensor::filled(&[1, 2, 2, 1], c0)),
        };
        let out = cell.sequence(&mut tape, x, Some(init)).unwrap();
        let o = tape.value(out);
        for t in 0..3usize {
            let expect = 0.5 * (c0 * 0.5f64.powi(t as i32 + 1)).tanh();
            let got = o.data()[t * 4];
            assert!((got - expect).abs() < 1e-12, "t={t}: {got} vs {expect}");
        }
    }

    #[test]
    fn empty_time_axis_is_rejected_by_shape_rules() {
        // T = 0 cannot even be represented (positive dims), so the contract
        // error surfaces at tensor construction.
        assert!(Tensor::new(vec![1, 0, 2, 2, 1], vec![]).is_err());
    }

    #[test]
    fn state_shape_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let cell = zero_cell(&mut tape, 2, 3, false);
        let x = tape.leaf(Tensor::zeros(&[1, 4, 4, 2]));
        let bad = ConvLstmState {
            h: tape.leaf(Tensor::zeros(&[1, 3, 3, 3])),
            c: tape.leaf(Tensor::zeros(&[1, 3, 3, 3])),
        };
        assert!(matches!(
            cell.step(&mut tape, x, &bad),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn peephole_off_matches_peephole_on_with_zero_weights() {
        let mut rng = CounterRng::new(99);
        let with = ConvLstmParams::init(&mut rng, 3, 2, 2, 1, Padding::Same, Some((4, 4)));
        let mut without = with.clone();
        without.peephole = None;
        let x_val = Tensor::from_fn(&[1, 2, 4, 4, 2], |i| ((i * 3) % 7) as f64 / 3.5 - 1.0);

        let mut t1 = Tape::new();
        let c1 = ConvLstmCell::new(&mut t1, &with).unwrap();
        let x1 = t1.leaf(x_val.clone());
        let o1 = c1.sequence(&mut t1, x1, None).unwrap();

        let mut t2 = Tape::new();
        let c2 = ConvLstmCell::new(&mut t2, &without).unwrap();
        let x2 = t2.leaf(x_val);
        let o2 = c2.sequence(&mut t2, x2, None).unwrap();

        assert!(t1.value(o1).bitwise_eq(t2.value(o2)));
    }
}
