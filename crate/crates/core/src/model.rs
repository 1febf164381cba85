//! The full network: stem, four stages of residual blocks, and the
//! classifier head, assembled as a flat, ordered layer table plus the block
//! wiring over it.
//!
//! Layer-table order is the contract for freezing, persistence and
//! reproducible initialization. It follows the architecture row by row:
//!
//! ```text
//! stem:      cell bn relu pool
//! block row: [in_bn in_relu]  cell1 drop bn1 relu cell2 drop bn2
//!            [sc_cell] relu [sc_bn] cell3 add
//! head:      bn gap drop dense(sigmoid)
//! ```
//!
//! where `in_bn`/`in_relu` compute the a2 stream from the previous block's
//! a1 (absent on the first block, whose two input streams coincide), and the
//! bracketed shortcut layers exist only in convolutional blocks. The head's
//! norm plays the role of the final block's output transition, without a
//! rectifier before pooling.

use serde::{Deserialize, Serialize};

use crate::blocks::{run_bn, run_block_body, BlockBody, BnBind, BnParams, Mode};
use crate::convlstm::{ConvLstmCell, ConvLstmParams};
use crate::error::{Error, FormatError, Result};
use crate::ops::batchnorm::BatchStats;
use crate::ops::Padding;
use crate::rng::{derive, CounterRng, Domain};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Fraction of the layer table frozen by default during fine-tuning.
pub const DEFAULT_FREEZE_RATIO: f64 = 0.625;

/// Stem max-pool window: spatial halving only, the time axis is kept.
pub const STEM_POOL: (usize, usize, usize) = (1, 2, 2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClrnetConfig {
    /// Input spatial size (square frames).
    pub input_hw: usize,
    /// Frames per sample.
    pub seq_len: usize,
    /// Feature width of each stage.
    pub channels: [usize; 4],
    /// (convolutional, identity) block counts per stage.
    pub stage_blocks: [(usize, usize); 4],
    /// Spatial kernel size of the main-path cells.
    pub kernel: usize,
    pub dropout: f64,
    pub peephole: bool,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
    pub classifier_units: usize,
}

impl Default for ClrnetConfig {
    fn default() -> Self {
        ClrnetConfig {
            input_hw: 32,
            seq_len: 5,
            channels: [8, 16, 32, 64],
            stage_blocks: [(1, 2), (1, 3), (1, 5), (1, 2)],
            kernel: 3,
            dropout: 0.25,
            peephole: true,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
            classifier_units: 1,
        }
    }
}

impl ClrnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_hw < 2 || self.input_hw % 2 != 0 {
            return Err(Error::config(format!(
                "input_hw must be even and >= 2 so the stem pool divides it, got {}",
                self.input_hw
            )));
        }
        if self.seq_len == 0 {
            return Err(Error::config("seq_len must be >= 1"));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::config("stage channel widths must be positive"));
        }
        if self.kernel == 0 {
            return Err(Error::config("kernel size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.bn_epsilon <= 0.0 {
            return Err(Error::config("bn_epsilon must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::config("bn_momentum must be in [0,1]"));
        }
        if self.classifier_units != 1 {
            return Err(Error::config(
                "classifier_units must be 1 (single sigmoid unit)",
            ));
        }
        for (s, &(cl, _)) in self.stage_blocks.iter().enumerate() {
            if cl != 1 {
                return Err(Error::config(format!(
                    "stage {} must open with exactly one convolutional block, got {cl}",
                    s + 1
                )));
            }
        }
        Ok(())
    }

    pub fn total_blocks(&self) -> usize {
        self.stage_blocks.iter().map(|&(cl, id)| cl + id).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    ConvLstm(ConvLstmParams),
    BatchNorm(BnParams),
    Relu,
    Dropout { rate: f64 },
    MaxPool3 { window: (usize, usize, usize) },
    Add,
    GlobalAvgPool,
    /// Classifier; applies a sigmoid to its output.
    Dense { w: Tensor, b: Tensor },
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::ConvLstm(_) => "conv_lstm",
            LayerKind::BatchNorm(_) => "batch_norm",
            LayerKind::Relu => "relu",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::MaxPool3 { .. } => "max_pool3d",
            LayerKind::Add => "add",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Dense { .. } => "dense",
        }
    }

    fn format_tag(&self) -> Option<u8> {
        match self {
            LayerKind::ConvLstm(_) => Some(1),
            LayerKind::BatchNorm(_) => Some(2),
            LayerKind::Dense { .. } => Some(3),
            _ => None,
        }
    }

    /// Every tensor of this layer, persistence order.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            LayerKind::ConvLstm(p) => p.named_tensors(),
            LayerKind::BatchNorm(p) => p.named_tensors(),
            LayerKind::Dense { w, b } => vec![("w", w), ("b", b)],
            _ => Vec::new(),
        }
    }

    /// Tensors the optimizer updates (moving statistics excluded).
    pub fn optimizer_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            LayerKind::BatchNorm(p) => vec![("gamma", &p.gamma), ("beta", &p.beta)],
            other => other.named_tensors(),
        }
    }

    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        match self {
            LayerKind::ConvLstm(p) => p.set_tensor(name, value),
            LayerKind::BatchNorm(p) => p.set_tensor(name, value),
            LayerKind::Dense { w, b } => {
                let slot = match name {
                    "w" => w,
                    "b" => b,
                    other => {
                        return Err(Error::contract(format!("unknown dense tensor '{other}'")))
                    }
                };
                if slot.shape() != value.shape() {
                    return Err(Error::dimension(format!(
                        "dense tensor {name}: expected {:?}, got {:?}",
                        slot.shape(),
                        value.shape()
                    )));
                }
                *slot = value;
                Ok(())
            }
            other => Err(Error::contract(format!(
                "layer kind {} has no tensors",
                other.tag()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub trainable: bool,
}

#[derive(Debug, Clone)]
struct StemTopo {
    cell: usize,
    bn: usize,
    pool: usize,
}

#[derive(Debug, Clone)]
struct BlockTopo {
    is_cl: bool,
    in_bn: Option<usize>,
    cell1: usize,
    drop1: usize,
    bn1: usize,
    cell2: usize,
    drop2: usize,
    bn2: usize,
    cell3: usize,
    sc_cell: Option<usize>,
    sc_bn: Option<usize>,
}

#[derive(Debug, Clone)]
struct HeadTopo {
    bn: usize,
    drop: usize,
    dense: usize,
}

#[derive(Debug, Clone)]
struct Topology {
    stem: StemTopo,
    blocks: Vec<BlockTopo>,
    head: HeadTopo,
}

/// Addresses one tensor inside the model: layer index + slot name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub layer: usize,
    pub slot: &'static str,
}

#[derive(Debug, Clone)]
pub struct LayeredModel {
    pub config: ClrnetConfig,
    pub layers: Vec<Layer>,
    topology: Topology,
}

/// Construct the network for `cfg`, drawing weights from the stream keyed
/// by `seed` in layer-table order.
pub fn build_clrnet(cfg: &ClrnetConfig, seed: u64) -> Result<LayeredModel> {
    cfg.validate()?;
    let mut rng = CounterRng::for_domain(seed, Domain::Init, &[]);
    let mut layers: Vec<Layer> = Vec::new();
    let push = |layers: &mut Vec<Layer>, name: String, kind: LayerKind| -> usize {
        let idx = layers.len();
        layers.push(Layer {
            name,
            kind,
            trainable: true,
        });
        idx
    };
    let peep = |hw: usize| cfg.peephole.then_some((hw, hw));

    // Stem row.
    let mut hw = cfg.input_hw;
    let c_stem = cfg.channels[0];
    let stem_cell = ConvLstmParams::init(&mut rng, cfg.kernel, 3, c_stem, 1, Padding::Same, peep(hw));
    let stem_cell = push(&mut layers, "stem_cell".into(), LayerKind::ConvLstm(stem_cell));
    let stem_bn = push(
        &mut layers,
        "stem_bn".into(),
        LayerKind::BatchNorm(BnParams::init(c_stem, cfg.bn_epsilon, cfg.bn_momentum)),
    );
    push(&mut layers, "stem_relu".into(), LayerKind::Relu);
    let stem_pool = push(
        &mut layers,
        "stem_pool".into(),
        LayerKind::MaxPool3 { window: STEM_POOL },
    );
    let stem = StemTopo {
        cell: stem_cell,
        bn: stem_bn,
        pool: stem_pool,
    };
    hw /= 2; // stem pool

    // Residual stages.
    let mut blocks = Vec::new();
    let mut cin = c_stem;
    let mut first_block = true;
    for (stage, &(_, id_count)) in cfg.stage_blocks.iter().enumerate() {
        let cout = cfg.channels[stage];
        let stride = if stage == 0 { 1 } else { 2 };
        let out_hw = hw.div_ceil(stride);
        for b in 0..(1 + id_count) {
            let is_cl = b == 0;
            let prefix = format!("s{}b{b}", stage + 1);
            let (in_bn, _in_relu) = if first_block {
                (None, None)
            } else {
                let bn_idx = push(
                    &mut layers,
                    format!("{prefix}_in_bn"),
                    LayerKind::BatchNorm(BnParams::init(cin, cfg.bn_epsilon, cfg.bn_momentum)),
                );
                let relu_idx = push(&mut layers, format!("{prefix}_in_relu"), LayerKind::Relu);
                (Some(bn_idx), Some(relu_idx))
            };
            let (block_cin, block_stride, block_hw) = if is_cl {
                (cin, stride, out_hw)
            } else {
                (cout, 1, out_hw)
            };
            let cell1 = ConvLstmParams::init(
                &mut rng,
                cfg.kernel,
                block_cin,
                cout,
                block_stride,
                Padding::Same,
                peep(block_hw),
            );
            let cell1 = push(&mut layers, format!("{prefix}_cell1"), LayerKind::ConvLstm(cell1));
            let drop1 = push(
                &mut layers,
                format!("{prefix}_drop1"),
                LayerKind::Dropout { rate: cfg.dropout },
            );
            let bn1 = push(
                &mut layers,
                format!("{prefix}_bn1"),
                LayerKind::BatchNorm(BnParams::init(cout, cfg.bn_epsilon, cfg.bn_momentum)),
            );
            push(&mut layers, format!("{prefix}_relu1"), LayerKind::Relu);
            let cell2 = ConvLstmParams::init(
                &mut rng,
                cfg.kernel,
                cout,
                cout,
                1,
                Padding::Same,
                peep(block_hw),
            );
            let cell2 = push(&mut layers, format!("{prefix}_cell2"), LayerKind::ConvLstm(cell2));
            let drop2 = push(
                &mut layers,
                format!("{prefix}_drop2"),
                LayerKind::Dropout { rate: cfg.dropout },
            );
            let bn2 = push(
                &mut layers,
                format!("{prefix}_bn2"),
                LayerKind::BatchNorm(BnParams::init(cout, cfg.bn_epsilon, cfg.bn_momentum)),
            );
            let sc_cell = if is_cl {
                let p = ConvLstmParams::init(
                    &mut rng,
                    1,
                    block_cin,
                    cout,
                    block_stride,
                    Padding::Same,
                    peep(block_hw),
                );
                Some(push(&mut layers, format!("{prefix}_sc_cell"), LayerKind::ConvLstm(p)))
            } else {
                None
            };
            push(&mut layers, format!("{prefix}_relu2"), LayerKind::Relu);
            let sc_bn = if is_cl {
                Some(push(
                    &mut layers,
                    format!("{prefix}_sc_bn"),
                    LayerKind::BatchNorm(BnParams::init(cout, cfg.bn_epsilon, cfg.bn_momentum)),
                ))
            } else {
                None
            };
            let cell3 = ConvLstmParams::init(
                &mut rng,
                cfg.kernel,
                cout,
                cout,
                1,
                Padding::Same,
                peep(block_hw),
            );
            let cell3 = push(&mut layers, format!("{prefix}_cell3"), LayerKind::ConvLstm(cell3));
            push(&mut layers, format!("{prefix}_add"), LayerKind::Add);

            blocks.push(BlockTopo {
                is_cl,
                in_bn,
                cell1,
                drop1,
                bn1,
                cell2,
                drop2,
                bn2,
                cell3,
                sc_cell,
                sc_bn,
            });
            first_block = false;
            if is_cl {
                cin = cout;
            }
        }
        hw = out_hw;
    }

    // Head row.
    let c_last = cfg.channels[3];
    let head_bn = push(
        &mut layers,
        "head_bn".into(),
        LayerKind::BatchNorm(BnParams::init(c_last, cfg.bn_epsilon, cfg.bn_momentum)),
    );
    push(&mut layers, "head_gap".into(), LayerKind::GlobalAvgPool);
    let head_drop = push(
        &mut layers,
        "head_drop".into(),
        LayerKind::Dropout { rate: cfg.dropout },
    );
    let bound = (3.0 / c_last as f64).sqrt();
    let w = Tensor::from_fn(&[c_last, cfg.classifier_units], |_| rng.symmetric(bound));
    let b = Tensor::zeros(&[cfg.classifier_units]);
    let head_dense = push(&mut layers, "head_dense".into(), LayerKind::Dense { w, b });

    Ok(LayeredModel {
        config: cfg.clone(),
        layers,
        topology: Topology {
            stem,
            blocks,
            head: HeadTopo {
                bn: head_bn,
                drop: head_drop,
                dense: head_dense,
            },
        },
    })
}

/// A forward execution with its tape, for training steps and checks.
pub struct ForwardPass {
    pub tape: Tape,
    /// Classifier probabilities, shape [N, 1].
    pub output: Var,
    /// Batch statistics of every batch-norm layer that ran in train mode,
    /// keyed by layer index.
    pub bn_stats: Vec<(usize, BatchStats)>,
    /// Tape handle of every trainable tensor, layer-table order.
    pub param_vars: Vec<(ParamId, Var)>,
}

enum Registered {
    Inert,
    Cell(ConvLstmCell),
    Bn(BnBind),
    Dense { w: Var, b: Var },
}

fn cell_at<'r>(layers: &[Layer], reg: &'r [Registered], idx: usize) -> &'r ConvLstmCell {
    match &reg[idx] {
        Registered::Cell(c) => c,
        _ => unreachable!("layer {} is not a recurrent cell", layers[idx].name),
    }
}

fn bn_at<'r>(layers: &[Layer], reg: &'r [Registered], idx: usize) -> &'r BnBind {
    match &reg[idx] {
        Registered::Bn(b) => b,
        _ => unreachable!("layer {} is not a batch norm", layers[idx].name),
    }
}

impl LayeredModel {
    /// Run the model over `batch` [N, seq_len, hw, hw, 3], producing the
    /// tape alongside the output for gradient work.
    pub fn forward_pass(&self, batch: &Tensor, mode: Mode, seed: u64) -> Result<ForwardPass> {
        let cfg = &self.config;
        let s = batch.shape();
        if s.len() != 5 || s[1] != cfg.seq_len || s[2] != cfg.input_hw || s[3] != cfg.input_hw || s[4] != 3
        {
            return Err(Error::dimension(format!(
                "model input must be [N,{},{},{},3], got {s:?}",
                cfg.seq_len, cfg.input_hw, cfg.input_hw
            )));
        }

        let mut tape = Tape::new();
        // Register parameters in layer-table order. Frozen layers go in as
        // non-differentiated inputs, which prunes backward work below them.
        let mut reg: Vec<Registered> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let r = match &layer.kind {
                LayerKind::ConvLstm(p) => Registered::Cell(ConvLstmCell::new_with(
                    &mut tape,
                    p,
                    layer.trainable,
                )?),
                LayerKind::BatchNorm(p) => {
                    Registered::Bn(BnBind::new(&mut tape, p, idx, !layer.trainable))
                }
                LayerKind::Dense { w, b } => {
                    if layer.trainable {
                        Registered::Dense {
                            w: tape.leaf(w.clone()),
                            b: tape.leaf(b.clone()),
                        }
                    } else {
                        Registered::Dense {
                            w: tape.input(w.clone()),
                            b: tape.input(b.clone()),
                        }
                    }
                }
                _ => Registered::Inert,
            };
            reg.push(r);
        }

        let drop_key = |idx: usize| derive(seed, &[Domain::Dropout.tag(), idx as u64]);
        let mut sink: Vec<(usize, BatchStats)> = Vec::new();

        // Stem.
        let x = tape.input(batch.clone());
        let topo = &self.topology;
        let stem_cell = cell_at(&self.layers, &reg, topo.stem.cell);
        let mut cur = stem_cell.sequence(&mut tape, x, None)?;
        cur = run_bn(&mut tape, cur, bn_at(&self.layers, &reg, topo.stem.bn), mode, &mut sink)?;
        cur = tape.relu(cur);
        let window = match self.layers[topo.stem.pool].kind {
            LayerKind::MaxPool3 { window } => window,
            _ => unreachable!("stem pool"),
        };
        cur = tape.max_pool3d(cur, window)?;

        // Blocks: a1/a2 streams.
        let mut a1 = cur;
        let mut a2 = cur;
        for bt in &topo.blocks {
            if let Some(in_bn) = bt.in_bn {
                let n = run_bn(&mut tape, a1, bn_at(&self.layers, &reg, in_bn), mode, &mut sink)?;
                a2 = tape.relu(n);
            }
            let cell1 = cell_at(&self.layers, &reg, bt.cell1);
            let cell2 = cell_at(&self.layers, &reg, bt.cell2);
            let cell3 = cell_at(&self.layers, &reg, bt.cell3);
            let shortcut = match (bt.sc_cell, bt.sc_bn) {
                (Some(c), Some(b)) => Some((
                    cell_at(&self.layers, &reg, c),
                    bn_at(&self.layers, &reg, b),
                )),
                _ => None,
            };
            let bn1 = bn_at(&self.layers, &reg, bt.bn1);
            let bn2 = bn_at(&self.layers, &reg, bt.bn2);
            let rate = match self.layers[bt.drop1].kind {
                LayerKind::Dropout { rate } => rate,
                _ => unreachable!("drop1"),
            };
            let body = BlockBody {
                cell1,
                cell2,
                cell3,
                bn1,
                bn2,
                shortcut,
                dropout: rate,
                drop_keys: (drop_key(bt.drop1), drop_key(bt.drop2)),
            };
            a1 = run_block_body(&mut tape, a1, a2, &body, mode, &mut sink)?;
        }

        // Head: norm (no rectifier), pool over (T,H,W), dropout, classifier.
        let head_bn = bn_at(&self.layers, &reg, topo.head.bn);
        let mut h = run_bn(&mut tape, a1, head_bn, mode, &mut sink)?;
        h = tape.global_avg_pool(h)?;
        let rate = match self.layers[topo.head.drop].kind {
            LayerKind::Dropout { rate } => rate,
            _ => unreachable!("head drop"),
        };
        if mode == Mode::Train && rate > 0.0 {
            h = tape.dropout_train(h, rate, drop_key(topo.head.drop))?;
        }
        let (w, b) = match &reg[topo.head.dense] {
            Registered::Dense { w, b } => (*w, *b),
            _ => unreachable!("head dense"),
        };
        let logits = tape.dense(h, w, b)?;
        let output = tape.sigmoid(logits);

        // Trainable tensor handles, layer-table order.
        let mut param_vars = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if !layer.trainable {
                continue;
            }
            match &reg[idx] {
                Registered::Cell(cell) => {
                    for (slot, var) in &cell.vars().tensors {
                        param_vars.push((ParamId { layer: idx, slot }, *var));
                    }
                }
                Registered::Bn(bn) => {
                    param_vars.push((ParamId { layer: idx, slot: "gamma" }, bn.gamma));
                    param_vars.push((ParamId { layer: idx, slot: "beta" }, bn.beta));
                }
                Registered::Dense { w, b } => {
                    param_vars.push((ParamId { layer: idx, slot: "w" }, *w));
                    param_vars.push((ParamId { layer: idx, slot: "b" }, *b));
                }
                Registered::Inert => {}
            }
        }

        Ok(ForwardPass {
            tape,
            output,
            bn_stats: sink,
            param_vars,
        })
    }

    /// Plain forward returning probabilities [N, 1]. Inference mode is a
    /// pure function of weights and input.
    pub fn forward(&self, batch: &Tensor, mode: Mode, seed: u64) -> Result<Tensor> {
        let fp = self.forward_pass(batch, mode, seed)?;
        Ok(fp.tape.value(fp.output).clone())
    }

    /// First `k` layers (table order) non-trainable, the rest trainable.
    pub fn freeze_layers(&self, k: usize) -> Result<LayeredModel> {
        if k > self.layers.len() {
            return Err(Error::contract(format!(
                "freeze count {k} exceeds {} layers",
                self.layers.len()
            )));
        }
        let mut m = self.clone();
        for (i, layer) in m.layers.iter_mut().enumerate() {
            layer.trainable = i >= k;
        }
        Ok(m)
    }

    pub fn total_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layers that carry parameters (cells, norms, the classifier).
    pub fn parameterized_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !l.kind.named_tensors().is_empty())
            .count()
    }

    /// Desk-scale default freeze count: the layer-table share matching the
    /// full-scale freeze depth.
    pub fn default_freeze_k(&self) -> usize {
        (DEFAULT_FREEZE_RATIO * self.total_layers() as f64).round() as usize
    }

    /// "CL"/"ID" pattern of the built blocks.
    pub fn block_pattern(&self) -> Vec<&'static str> {
        self.topology
            .blocks
            .iter()
            .map(|b| if b.is_cl { "CL" } else { "ID" })
            .collect()
    }

    /// Trainable tensors in layer-table order (the optimizer walk).
    pub fn trainable_params(&self) -> Vec<(ParamId, Tensor)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if !layer.trainable {
                continue;
            }
            for (slot, t) in layer.kind.optimizer_tensors() {
                out.push((ParamId { layer: idx, slot }, t.clone()));
            }
        }
        out
    }

    pub fn set_param(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        self.layers[id.layer].kind.set_tensor(id.slot, value)
    }

    /// Fold collected batch statistics into the moving averages of unfrozen
    /// norm layers.
    pub fn absorb_bn_stats(&mut self, updates: &[(usize, BatchStats)]) {
        for (idx, stats) in updates {
            if !self.layers[*idx].trainable {
                continue;
            }
            if let LayerKind::BatchNorm(p) = &mut self.layers[*idx].kind {
                p.absorb(stats);
            }
        }
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }
}

// ---------------------------------------------------------------------------
// Persistence: magic "CLRN", version 1, little-endian, f64 payloads.
// ---------------------------------------------------------------------------

pub const WEIGHT_MAGIC: [u8; 4] = *b"CLRN";
pub const WEIGHT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                context: context.to_string(),
            }
            .into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, context: &str) -> Result<u8> {
        Ok(self.take(1, context)?[0])
    }
    fn u32(&mut self, context: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }
    fn u64(&mut self, context: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }
}

impl LayeredModel {
    /// Serialize every parameter and moving statistic, bit-exact.
    pub fn save_weights(&self) -> Vec<u8> {
        let entries: Vec<(String, u8, &Tensor)> = self
            .layers
            .iter()
            .flat_map(|layer| {
                let tag = layer.kind.format_tag();
                layer.kind.named_tensors().into_iter().filter_map(move |(slot, t)| {
                    tag.map(|tag| (format!("{}/{slot}", layer.name), tag, t))
                })
            })
            .collect();
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, tag, t) in entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tag);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Load a weight stream into a copy of this model. Names and shapes
    /// must match; the receiver is untouched on error.
    pub fn load_weights(&self, bytes: &[u8]) -> Result<LayeredModel> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != WEIGHT_MAGIC {
            return Err(FormatError::BadMagic {
                expected: WEIGHT_MAGIC,
                found: magic.try_into().unwrap(),
            }
            .into());
        }
        let version = r.u32("version")?;
        if version != WEIGHT_VERSION {
            return Err(FormatError::Version {
                found: version,
                supported: WEIGHT_VERSION,
            }
            .into());
        }
        let count = r.u32("entry count")? as usize;
        let mut staged: Vec<(String, Tensor)> = Vec::with_capacity(count);
        for i in 0..count {
            let ctx = format!("entry {i}");
            let name_len = r.u32(&ctx)? as usize;
            let name = String::from_utf8(r.take(name_len, &ctx)?.to_vec())
                .map_err(|_| Error::from(FormatError::Truncated { context: ctx.clone() }))?;
            let _tag = r.u8(&ctx)?;
            let rank = r.u32(&ctx)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64(&ctx)? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * 8, &name)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            staged.push((name, Tensor::new(shape, data)?));
        }

        let mut model = self.clone();
        let mut seen = vec![Vec::<String>::new(); model.layers.len()];
        for (name, tensor) in staged {
            let (layer_name, slot) = name.rsplit_once('/').ok_or_else(|| {
                Error::from(FormatError::UnknownEntry { name: name.clone() })
            })?;
            let idx = model
                .layer_index(layer_name)
                .ok_or_else(|| Error::from(FormatError::UnknownEntry { name: name.clone() }))?;
            let expected = model.layers[idx]
                .kind
                .named_tensors()
                .iter()
                .find(|(s, _)| *s == slot)
                .map(|(_, t)| t.shape().to_vec())
                .ok_or_else(|| Error::from(FormatError::UnknownEntry { name: name.clone() }))?;
            if expected != tensor.shape() {
                return Err(FormatError::ShapeMismatch {
                    name,
                    found: tensor.shape().to_vec(),
                    expected,
                }
                .into());
            }
            model.layers[idx].kind.set_tensor(slot, tensor)?;
            seen[idx].push(slot.to_string());
        }
        for (idx, layer) in model.layers.iter().enumerate() {
            for (slot, _) in layer.kind.named_tensors() {
                if !seen[idx].iter().any(|s| s == slot) {
                    return Err(FormatError::MissingEntry {
                        name: format!("{}/{slot}", layer.name),
                    }
                    .into());
                }
            }
        }
        Ok(model)
    }
}
