//! Dual-stream residual blocks over sequence tensors.
//!
//! Blocks pass two tensors between them: `a1`, the raw output of the
//! addition, and `a2`, its normalized and rectified form. The main path of
//! every block reads `a2`; the identity block's shortcut reads `a1`, the
//! convolutional block's shortcut reads `a2` through its own cell and norm.
//!
//! Main path grammar (both kinds):
//!   cell -> dropout -> norm -> relu -> cell -> dropout -> norm -> relu -> cell
//! then `a1' = main + shortcut` and `a2' = relu(norm(a1'))`.

use crate::convlstm::{ConvLstmCell, ConvLstmParams};
use crate::error::{Error, Result};
use crate::ops::batchnorm::BatchStats;
use crate::ops::Padding;
use crate::rng::{derive, CounterRng, Domain};
use crate::tape::{Tape, Var};
use crate::tensor::{check_same_shape, Tensor};

/// Forward mode: training uses batch statistics and active dropout,
/// inference is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Batch-norm parameter set (value form).
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub moving_mean: Tensor,
    pub moving_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BnParams {
    pub fn init(channels: usize, epsilon: f64, momentum: f64) -> Self {
        BnParams {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            moving_mean: Tensor::zeros(&[channels]),
            moving_var: Tensor::filled(&[channels], 1.0),
            epsilon,
            momentum,
        }
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("moving_mean", &self.moving_mean),
            ("moving_var", &self.moving_var),
        ]
    }

    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = match name {
            "gamma" => &mut self.gamma,
            "beta" => &mut self.beta,
            "moving_mean" => &mut self.moving_mean,
            "moving_var" => &mut self.moving_var,
            other => return Err(Error::contract(format!("unknown bn tensor '{other}'"))),
        };
        if slot.shape() != value.shape() {
            return Err(Error::dimension(format!(
                "bn tensor {name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Fold fresh batch statistics into the moving averages.
    pub fn absorb(&mut self, stats: &BatchStats) {
        self.moving_mean =
            crate::ops::update_moving(&self.moving_mean, &stats.mean, self.momentum);
        self.moving_var = crate::ops::update_moving(&self.moving_var, &stats.var, self.momentum);
    }
}

/// A batch-norm layer registered on a tape. Moving statistics ride along as
/// plain tensors; `frozen` forces inference-mode normalization and stops
/// statistic updates regardless of the pass mode.
#[derive(Debug, Clone)]
pub struct BnBind {
    pub gamma: Var,
    pub beta: Var,
    pub moving_mean: Tensor,
    pub moving_var: Tensor,
    pub epsilon: f64,
    pub frozen: bool,
    /// Caller-chosen identifier reported with collected batch statistics.
    pub id: usize,
}

impl BnBind {
    pub fn new(tape: &mut Tape, params: &BnParams, id: usize, frozen: bool) -> Self {
        let mut reg = |t: &crate::tensor::Tensor| {
            if frozen {
                tape.input(t.clone())
            } else {
                tape.leaf(t.clone())
            }
        };
        BnBind {
            gamma: reg(&params.gamma),
            beta: reg(&params.beta),
            moving_mean: params.moving_mean.clone(),
            moving_var: params.moving_var.clone(),
            epsilon: params.epsilon,
            frozen,
            id,
        }
    }
}

/// Run one batch-norm layer, collecting train-mode statistics in `sink`.
pub fn run_bn(
    tape: &mut Tape,
    x: Var,
    bn: &BnBind,
    mode: Mode,
    sink: &mut Vec<(usize, BatchStats)>,
) -> Result<Var> {
    if mode == Mode::Train && !bn.frozen {
        let (y, stats) = tape.batch_norm_train(x, bn.gamma, bn.beta, bn.epsilon)?;
        sink.push((bn.id, stats));
        Ok(y)
    } else {
        tape.batch_norm_infer(x, bn.gamma, bn.beta, &bn.moving_mean, &bn.moving_var, bn.epsilon)
    }
}

/// a2 = relu(norm(a1)): the stream handoff between consecutive blocks.
pub fn transition(
    tape: &mut Tape,
    a1: Var,
    bn: &BnBind,
    mode: Mode,
    sink: &mut Vec<(usize, BatchStats)>,
) -> Result<Var> {
    let n = run_bn(tape, a1, bn, mode, sink)?;
    Ok(tape.relu(n))
}

/// The two streams flowing between blocks.
#[derive(Debug, Clone, Copy)]
pub struct BlockIo {
    pub a1: Var,
    pub a2: Var,
}

/// Registered main-path pieces shared by both block kinds.
pub struct BlockBody<'a> {
    pub cell1: &'a ConvLstmCell,
    pub cell2: &'a ConvLstmCell,
    pub cell3: &'a ConvLstmCell,
    pub bn1: &'a BnBind,
    pub bn2: &'a BnBind,
    /// Convolutional shortcut (cell + norm); `None` wires the identity
    /// shortcut from `a1`.
    pub shortcut: Option<(&'a ConvLstmCell, &'a BnBind)>,
    pub dropout: f64,
    pub drop_keys: (u64, u64),
}

fn run_dropout(tape: &mut Tape, x: Var, rate: f64, key: u64, mode: Mode) -> Result<Var> {
    crate::ops::dropout::check_rate(rate)?;
    match mode {
        Mode::Train if rate > 0.0 => tape.dropout_train(x, rate, key),
        _ => Ok(x),
    }
}

/// Everything from the first cell through the addition. Returns a1'.
pub fn run_block_body(
    tape: &mut Tape,
    a1_in: Var,
    a2_in: Var,
    body: &BlockBody,
    mode: Mode,
    sink: &mut Vec<(usize, BatchStats)>,
) -> Result<Var> {
    let m = body.cell1.sequence(tape, a2_in, None)?;
    let m = run_dropout(tape, m, body.dropout, body.drop_keys.0, mode)?;
    let m = run_bn(tape, m, body.bn1, mode, sink)?;
    let m = tape.relu(m);
    let m = body.cell2.sequence(tape, m, None)?;
    let m = run_dropout(tape, m, body.dropout, body.drop_keys.1, mode)?;
    let m = run_bn(tape, m, body.bn2, mode, sink)?;
    let m = tape.relu(m);
    let main = body.cell3.sequence(tape, m, None)?;

    let (short, kind) = match body.shortcut {
        Some((cell, bn)) => {
            let s = cell.sequence(tape, a2_in, None)?;
            (run_bn(tape, s, bn, mode, sink)?, "cl_block")
        }
        None => (a1_in, "id_block"),
    };
    check_same_shape(
        &format!("{kind} add: main branch vs shortcut branch"),
        tape.value(main).shape(),
        tape.value(short).shape(),
    )?;
    tape.add(main, short)
}

/// Value-form parameters of a convolutional (projecting) block.
#[derive(Debug, Clone, PartialEq)]
pub struct ClBlockParams {
    pub cell1: ConvLstmParams,
    pub cell2: ConvLstmParams,
    pub cell3: ConvLstmParams,
    pub shortcut_cell: ConvLstmParams,
    pub bn1: BnParams,
    pub bn2: BnParams,
    pub bn_shortcut: BnParams,
    pub bn_out: BnParams,
    pub dropout: f64,
}

/// Value-form parameters of an identity block.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBlockParams {
    pub cell1: ConvLstmParams,
    pub cell2: ConvLstmParams,
    pub cell3: ConvLstmParams,
    pub bn1: BnParams,
    pub bn2: BnParams,
    pub bn_out: BnParams,
    pub dropout: f64,
}

/// Shared knobs for block construction.
#[derive(Debug, Clone, Copy)]
pub struct BlockSpec {
    pub cin: usize,
    pub cout: usize,
    /// Downsampling stride of the first main cell and the shortcut cell.
    pub stride: usize,
    pub kernel: usize,
    /// Input spatial size, for peephole allocation.
    pub in_hw: (usize, usize),
    pub peephole: bool,
    pub dropout: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl BlockSpec {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            self.in_hw.0.div_ceil(self.stride),
            self.in_hw.1.div_ceil(self.stride),
        )
    }
}

impl ClBlockParams {
    pub fn init(rng: &mut CounterRng, s: &BlockSpec) -> Self {
        let peep = |hw: (usize, usize)| s.peephole.then_some(hw);
        let out_hw = s.out_hw();
        ClBlockParams {
            cell1: ConvLstmParams::init(rng, s.kernel, s.cin, s.cout, s.stride, Padding::Same, peep(out_hw)),
            cell2: ConvLstmParams::init(rng, s.kernel, s.cout, s.cout, 1, Padding::Same, peep(out_hw)),
            cell3: ConvLstmParams::init(rng, s.kernel, s.cout, s.cout, 1, Padding::Same, peep(out_hw)),
            shortcut_cell: ConvLstmParams::init(rng, 1, s.cin, s.cout, s.stride, Padding::Same, peep(out_hw)),
            bn1: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            bn2: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            bn_shortcut: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            bn_out: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            dropout: s.dropout,
        }
    }
}

impl IdBlockParams {
    pub fn init(rng: &mut CounterRng, s: &BlockSpec) -> Self {
        debug_assert_eq!(s.stride, 1, "identity blocks never downsample");
        let peep = |hw: (usize, usize)| s.peephole.then_some(hw);
        IdBlockParams {
            cell1: ConvLstmParams::init(rng, s.kernel, s.cin, s.cout, 1, Padding::Same, peep(s.in_hw)),
            cell2: ConvLstmParams::init(rng, s.kernel, s.cout, s.cout, 1, Padding::Same, peep(s.in_hw)),
            cell3: ConvLstmParams::init(rng, s.kernel, s.cout, s.cout, 1, Padding::Same, peep(s.in_hw)),
            bn1: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            bn2: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            bn_out: BnParams::init(s.cout, s.bn_epsilon, s.bn_momentum),
            dropout: s.dropout,
        }
    }
}

/// A convolutional block registered on a tape.
pub struct ClBlock {
    pub cell1: ConvLstmCell,
    pub cell2: ConvLstmCell,
    pub cell3: ConvLstmCell,
    pub shortcut_cell: ConvLstmCell,
    pub bn1: BnBind,
    pub bn2: BnBind,
    pub bn_shortcut: BnBind,
    pub bn_out: BnBind,
    pub dropout: f64,
}

impl ClBlock {
    pub fn new(tape: &mut Tape, p: &ClBlockParams) -> Result<Self> {
        Ok(ClBlock {
            cell1: ConvLstmCell::new(tape, &p.cell1)?,
            cell2: ConvLstmCell::new(tape, &p.cell2)?,
            cell3: ConvLstmCell::new(tape, &p.cell3)?,
            shortcut_cell: ConvLstmCell::new(tape, &p.shortcut_cell)?,
            bn1: BnBind::new(tape, &p.bn1, 0, false),
            bn2: BnBind::new(tape, &p.bn2, 1, false),
            bn_shortcut: BnBind::new(tape, &p.bn_shortcut, 2, false),
            bn_out: BnBind::new(tape, &p.bn_out, 3, false),
            dropout: p.dropout,
        })
    }

    /// Full block op: main and shortcut paths, addition, then the output
    /// transition producing a2'.
    pub fn run(
        &self,
        tape: &mut Tape,
        io: BlockIo,
        mode: Mode,
        seed: u64,
        sink: &mut Vec<(usize, BatchStats)>,
    ) -> Result<BlockIo> {
        let body = BlockBody {
            cell1: &self.cell1,
            cell2: &self.cell2,
            cell3: &self.cell3,
            bn1: &self.bn1,
            bn2: &self.bn2,
            shortcut: Some((&self.shortcut_cell, &self.bn_shortcut)),
            dropout: self.dropout,
            drop_keys: (
                derive(seed, &[Domain::Dropout.tag(), 0]),
                derive(seed, &[Domain::Dropout.tag(), 1]),
            ),
        };
        let a1 = run_block_body(tape, io.a1, io.a2, &body, mode, sink)?;
        let a2 = transition(tape, a1, &self.bn_out, mode, sink)?;
        Ok(BlockIo { a1, a2 })
    }
}

/// An identity block registered on a tape.
pub struct IdBlock {
    pub cell1: ConvLstmCell,
    pub cell2: ConvLstmCell,
    pub cell3: ConvLstmCell,
    pub bn1: BnBind,
    pub bn2: BnBind,
    pub bn_out: BnBind,
    pub dropout: f64,
}

impl IdBlock {
    pub fn new(tape: &mut Tape, p: &IdBlockParams) -> Result<Self> {
        Ok(IdBlock {
            cell1: ConvLstmCell::new(tape, &p.cell1)?,
            cell2: ConvLstmCell::new(tape, &p.cell2)?,
            cell3: ConvLstmCell::new(tape, &p.cell3)?,
            bn1: BnBind::new(tape, &p.bn1, 0, false),
            bn2: BnBind::new(tape, &p.bn2, 1, false),
            bn_out: BnBind::new(tape, &p.bn_out, 2, false),
            dropout: p.dropout,
        })
    }

    pub fn run(
        &self,
        tape: &mut Tape,
        io: BlockIo,
        mode: Mode,
        seed: u64,
        sink: &mut Vec<(usize, BatchStats)>,
    ) -> Result<BlockIo> {
        let body = BlockBody {
            cell1: &self.cell1,
            cell2: &self.cell2,
            cell3: &self.cell3,
            bn1: &self.bn1,
            bn2: &self.bn2,
            shortcut: None,
            dropout: self.dropout,
            drop_keys: (
                derive(seed, &[Domain::Dropout.tag(), 0]),
                derive(seed, &[Domain::Dropout.tag(), 1]),
            ),
        };
        let a1 = run_block_body(tape, io.a1, io.a2, &body, mode, sink)?;
        let a2 = transition(tape, a1, &self.bn_out, mode, sink)?;
        Ok(BlockIo { a1, a2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(cin: usize, cout: usize, stride: usize, hw: usize) -> BlockSpec {
        BlockSpec {
            cin,
            cout,
            stride,
            kernel: 3,
            in_hw: (hw, hw),
            peephole: true,
            dropout: 0.25,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
        }
    }

    fn zero_cl(s: &BlockSpec) -> ClBlockParams {
        let mut rng = CounterRng::new(0);
        let mut p = ClBlockParams::init(&mut rng, s);
        for cell in [&mut p.cell1, &mut p.cell2, &mut p.cell3, &mut p.shortcut_cell] {
            let z = ConvLstmParams::zeros(
                cell.w_xi.shape()[0],
                cell.in_channels(),
                cell.out_channels(),
                cell.stride,
                cell.padding,
                cell.peephole.as_ref().map(|p| {
                    let s = p.w_ci.shape();
                    (s[0], s[1])
                }),
            );
            *cell = z;
        }
        p
    }

    fn zero_id(s: &BlockSpec) -> IdBlockParams {
        let mut rng = CounterRng::new(0);
        let mut p = IdBlockParams::init(&mut rng, s);
        for cell in [&mut p.cell1, &mut p.cell2, &mut p.cell3] {
            *cell = ConvLstmParams::zeros(
                cell.w_xi.shape()[0],
                cell.in_channels(),
                cell.out_channels(),
                cell.stride,
                cell.padding,
                cell.peephole.as_ref().map(|p| {
                    let s = p.w_ci.shape();
                    (s[0], s[1])
                }),
            );
        }
        p
    }

    #[test]
    fn zero_weight_cl_block_annihilates_in_infer_mode() {
        let s = spec(2, 2, 1, 4);
        let p = zero_cl(&s);
        let mut tape = Tape::new();
        let block = ClBlock::new(&mut tape, &p).unwrap();
        let x = Tensor::from_fn(&[1, 2, 4, 4, 2], |i| (i as f64 * 0.31).sin());
        let v = tape.leaf(x);
        let io = BlockIo { a1: v, a2: v };
        let mut sink = Vec::new();
        let out = block.run(&mut tape, io, Mode::Infer, 0, &mut sink).unwrap();
        assert!(tape.value(out.a1).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(out.a2).data().iter().all(|&v| v == 0.0));
        assert!(sink.is_empty());
    }

    #[test]
    fn zero_weight_id_block_is_identity_on_a1() {
        let s = spec(2, 2, 1, 4);
        let p = zero_id(&s);
        let mut tape = Tape::new();
        let block = IdBlock::new(&mut tape, &p).unwrap();
        let a1_val = Tensor::from_fn(&[1, 2, 4, 4, 2], |i| 0.17 * i as f64 - 1.0);
        let a2_val = Tensor::from_fn(&[1, 2, 4, 4, 2], |i| (i as f64 * 0.71).cos());
        let a1 = tape.leaf(a1_val.clone());
        let a2 = tape.leaf(a2_val);
        let mut sink = Vec::new();
        let out = block
            .run(&mut tape, BlockIo { a1, a2 }, Mode::Train, 3, &mut sink)
            .unwrap();
        assert!(tape.value(out.a1).bitwise_eq(&a1_val), "a1 must pass through untouched");
    }

    #[test]
    fn stride_two_cl_block_halves_spatial_dims() {
        let s = spec(8, 16, 2, 16);
        let mut rng = CounterRng::new(7);
        let p = ClBlockParams::init(&mut rng, &s);
        let mut tape = Tape::new();
        let block = ClBlock::new(&mut tape, &p).unwrap();
        let x = Tensor::from_fn(&[2, 5, 16, 16, 8], |i| ((i % 11) as f64 - 5.0) * 0.1);
        let v = tape.leaf(x);
        let mut sink = Vec::new();
        let out = block
            .run(&mut tape, BlockIo { a1: v, a2: v }, Mode::Infer, 0, &mut sink)
            .unwrap();
        assert_eq!(tape.value(out.a1).shape(), &[2, 5, 8, 8, 16]);
        assert_eq!(tape.value(out.a2).shape(), &[2, 5, 8, 8, 16]);
    }

    #[test]
    fn id_block_preserves_shape() {
        let s = spec(16, 16, 1, 8);
        let mut rng = CounterRng::new(9);
        let p = IdBlockParams::init(&mut rng, &s);
        let mut tape = Tape::new();
        let block = IdBlock::new(&mut tape, &p).unwrap();
        let x = Tensor::from_fn(&[2, 5, 8, 8, 16], |i| ((i % 7) as f64 - 3.0) * 0.2);
        let v = tape.leaf(x);
        let mut sink = Vec::new();
        let out = block
            .run(&mut tape, BlockIo { a1: v, a2: v }, Mode::Infer, 0, &mut sink)
            .unwrap();
        assert_eq!(tape.value(out.a1).shape(), &[2, 5, 8, 8, 16]);
    }

    #[test]
    fn id_block_channel_mismatch_names_both_branches() {
        // Main path projects 2 -> 3 channels; identity shortcut stays at 2.
        let s = BlockSpec {
            cin: 2,
            cout: 3,
            stride: 1,
            kernel: 3,
            in_hw: (4, 4),
            peephole: false,
            dropout: 0.0,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
        };
        let mut rng = CounterRng::new(4);
        let p = IdBlockParams::init(&mut rng, &s);
        let mut tape = Tape::new();
        let block = IdBlock::new(&mut tape, &p).unwrap();
        let x = Tensor::filled(&[1, 2, 4, 4, 2], 0.5);
        let v = tape.leaf(x);
        let mut sink = Vec::new();
        let err = block
            .run(&mut tape, BlockIo { a1: v, a2: v }, Mode::Infer, 0, &mut sink)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("id_block add"), "{msg}");
        assert!(msg.contains("axis"), "{msg}");
    }

    #[test]
    fn stacking_zero_id_blocks_after_cl_preserves_a1() {
        let s = spec(2, 2, 1, 4);
        let mut rng = CounterRng::new(21);
        let cl = ClBlockParams::init(&mut rng, &s);
        let id = zero_id(&s);

        let x = Tensor::from_fn(&[1, 2, 4, 4, 2], |i| (i as f64 * 0.13).sin());

        let mut tape = Tape::new();
        let cl_b = ClBlock::new(&mut tape, &cl).unwrap();
        let v = tape.leaf(x.clone());
        let mut sink = Vec::new();
        let alone = cl_b
            .run(&mut tape, BlockIo { a1: v, a2: v }, Mode::Infer, 0, &mut sink)
            .unwrap();
        let alone_a1 = tape.value(alone.a1).clone();

        let mut tape = Tape::new();
        let cl_b = ClBlock::new(&mut tape, &cl).unwrap();
        let id_b1 = IdBlock::new(&mut tape, &id).unwrap();
        let id_b2 = IdBlock::new(&mut tape, &id).unwrap();
        let v = tape.leaf(x);
        let mut sink = Vec::new();
        let o1 = cl_b
            .run(&mut tape, BlockIo { a1: v, a2: v }, Mode::Infer, 0, &mut sink)
            .unwrap();
        let o2 = id_b1.run(&mut tape, o1, Mode::Infer, 1, &mut sink).unwrap();
        let o3 = id_b2.run(&mut tape, o2, Mode::Infer, 2, &mut sink).unwrap();
        assert!(tape.value(o3.a1).bitwise_eq(&alone_a1));
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let s = spec(2, 2, 1, 4);
        let mut rng = CounterRng::new(33);
        let mut p = ClBlockParams::init(&mut rng, &s);
        // Random peepholes so those paths carry signal too.
        for cell in [&mut p.cell1, &mut p.cell2, &mut p.cell3, &mut p.shortcut_cell] {
            if let Some(peep) = &mut cell.peephole {
                peep.w_ci = Tensor::from_fn(peep.w_ci.shape(), |_| rng.symmetric(0.3));
                peep.w_cf = Tensor::from_fn(peep.w_cf.shape(), |_| rng.symmetric(0.3));
                peep.w_co = Tensor::from_fn(peep.w_co.shape(), |_| rng.symmetric(0.3));
            }
        }
        let mut tape = Tape::new();
        let block = ClBlock::new(&mut tape, &p).unwrap();
        let x = Tensor::from_fn(&[2, 2, 4, 4, 2], |i| ((i * 5 % 17) as f64 - 8.0) * 0.12);
        let v = tape.leaf(x);
        let mut sink = Vec::new();
        let out = block
            .run(&mut tape, BlockIo { a1: v, a2: v }, Mode::Train, 11, &mut sink)
            .unwrap();
        let s1 = tape.sum_all(out.a1);
        let s2 = tape.sum_all(out.a2);
        let loss = tape.add(s1, s2).unwrap();

        let mut param_vars = Vec::new();
        for cell in [&block.cell1, &block.cell2, &block.cell3, &block.shortcut_cell] {
            param_vars.extend(cell.vars().tensors.iter().map(|(n, v)| (*n, *v)));
        }
        for bn in [&block.bn1, &block.bn2, &block.bn_shortcut, &block.bn_out] {
            param_vars.push(("gamma", bn.gamma));
            param_vars.push(("beta", bn.beta));
        }
        let grads = tape.backward(loss).unwrap();
        for (name, v) in param_vars {
            let g = grads.get(v);
            assert!(
                g.data().iter().any(|&x| x != 0.0),
                "parameter {name} received no gradient"
            );
        }
    }
}
