//! Fused gate arithmetic for the recurrent cell.
//!
//! One step's pointwise work is split into two kernels so the tape records
//! two nodes instead of a dozen: the state update (input and forget gates,
//! candidate, new cell state) and the output (output gate, hidden state).
//! Gate blocks inside the pre-activation tensor are ordered [i | f | c | o]
//! along the channel axis.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_pre(pre: &Tensor, cell: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    let ps = pre.shape();
    let cs = cell.shape();
    if ps.len() != 4 || cs.len() != 4 {
        return Err(Error::dimension(format!(
            "{what}: expected rank-4 tensors, got {ps:?} and {cs:?}"
        )));
    }
    let c = cs[3];
    if ps[..3] != cs[..3] || ps[3] != 4 * c {
        return Err(Error::dimension(format!(
            "{what}: pre-activations {ps:?} do not match state {cs:?} with 4 gate blocks"
        )));
    }
    Ok((cs[0], cs[1] * cs[2], c))
}

fn check_peep(p: Option<&Tensor>, cell: &Tensor, what: &str) -> Result<()> {
    if let Some(p) = p {
        if p.shape() != &cell.shape()[1..] {
            return Err(Error::dimension(format!(
                "{what}: peephole {:?} does not match state {:?} minus batch axis",
                p.shape(),
                cell.shape()
            )));
        }
    }
    Ok(())
}

/// Saved intermediates of the state update.
pub struct LstmStateOut {
    pub c: Tensor,
    pub gate_i: Tensor,
    pub gate_f: Tensor,
    pub c_tilde: Tensor,
}

/// c' = σ(a_i + p_i∘c)∘tanh(a_c) + σ(a_f + p_f∘c)∘c
pub fn lstm_state_forward(
    pre: &Tensor,
    c_prev: &Tensor,
    peep_i: Option<&Tensor>,
    peep_f: Option<&Tensor>,
) -> Result<LstmStateOut> {
    let (n, hw, c) = check_pre(pre, c_prev, "lstm_state")?;
    check_peep(peep_i, c_prev, "lstm_state/i")?;
    check_peep(peep_f, c_prev, "lstm_state/f")?;
    let pd = pre.data();
    let cd = c_prev.data();
    let pid = peep_i.map(|t| t.data());
    let pfd = peep_f.map(|t| t.data());

    let total = n * hw * c;
    let mut gate_i = Vec::with_capacity(total);
    let mut gate_f = Vec::with_capacity(total);
    let mut c_tilde = Vec::with_capacity(total);
    let mut c_new = Vec::with_capacity(total);
    for row in 0..n * hw {
        let pre_base = row * 4 * c;
        let cell_base = row * c;
        let peep_base = (row % hw) * c;
        for k in 0..c {
            let cp = cd[cell_base + k];
            let a_i = pd[pre_base + k] + pid.map_or(0.0, |p| p[peep_base + k] * cp);
            let a_f = pd[pre_base + c + k] + pfd.map_or(0.0, |p| p[peep_base + k] * cp);
            let a_c = pd[pre_base + 2 * c + k];
            let i = sigmoid(a_i);
            let f = sigmoid(a_f);
            let ct = a_c.tanh();
            gate_i.push(i);
            gate_f.push(f);
            c_tilde.push(ct);
            c_new.push(f * cp + i * ct);
        }
    }
    let shape = c_prev.shape().to_vec();
    Ok(LstmStateOut {
        c: Tensor::new(shape.clone(), c_new)?,
        gate_i: Tensor::new(shape.clone(), gate_i)?,
        gate_f: Tensor::new(shape.clone(), gate_f)?,
        c_tilde: Tensor::new(shape, c_tilde)?,
    })
}

/// Gradients of [`lstm_state_forward`]: (dpre, dc_prev, dpeep_i, dpeep_f).
#[allow(clippy::too_many_arguments)]
pub fn lstm_state_backward(
    gate_i: &Tensor,
    gate_f: &Tensor,
    c_tilde: &Tensor,
    c_prev: &Tensor,
    peep_i: Option<&Tensor>,
    peep_f: Option<&Tensor>,
    dout: &Tensor,
) -> (Tensor, Tensor, Option<Tensor>, Option<Tensor>) {
    let cs = c_prev.shape();
    let (n, hw, c) = (cs[0], cs[1] * cs[2], cs[3]);
    let cd = c_prev.data();
    let id = gate_i.data();
    let fd = gate_f.data();
    let td = c_tilde.data();
    let dd = dout.data();
    let pid = peep_i.map(|t| t.data());
    let pfd = peep_f.map(|t| t.data());

    let mut dpre = vec![0.0; n * hw * 4 * c];
    let mut dc_prev = vec![0.0; n * hw * c];
    let mut dpi = peep_i.map(|_| vec![0.0; hw * c]);
    let mut dpf = peep_f.map(|_| vec![0.0; hw * c]);
    for row in 0..n * hw {
        let pre_base = row * 4 * c;
        let cell_base = row * c;
        let peep_base = (row % hw) * c;
        for k in 0..c {
            let dc = dd[cell_base + k];
            let (i, f, ct, cp) = (
                id[cell_base + k],
                fd[cell_base + k],
                td[cell_base + k],
                cd[cell_base + k],
            );
            let da_i = dc * ct * i * (1.0 - i);
            let da_f = dc * cp * f * (1.0 - f);
            let da_c = dc * i * (1.0 - ct * ct);
            dpre[pre_base + k] = da_i;
            dpre[pre_base + c + k] = da_f;
            dpre[pre_base + 2 * c + k] = da_c;
            let mut dcp = dc * f;
            if let Some(p) = pid {
                dcp += da_i * p[peep_base + k];
                dpi.as_mut().unwrap()[peep_base + k] += da_i * cp;
            }
            if let Some(p) = pfd {
                dcp += da_f * p[peep_base + k];
                dpf.as_mut().unwrap()[peep_base + k] += da_f * cp;
            }
            dc_prev[cell_base + k] = dcp;
        }
    }
    let mut pre_shape = cs.to_vec();
    pre_shape[3] = 4 * c;
    let peep_shape = &cs[1..];
    (
        Tensor::new(pre_shape, dpre).expect("dpre shape"),
        Tensor::new(cs.to_vec(), dc_prev).expect("dc_prev shape"),
        dpi.map(|v| Tensor::new(peep_shape.to_vec(), v).expect("dpi shape")),
        dpf.map(|v| Tensor::new(peep_shape.to_vec(), v).expect("dpf shape")),
    )
}

/// Saved intermediates of the output computation.
pub struct LstmOutOut {
    pub h: Tensor,
    pub gate_o: Tensor,
    pub tanh_c: Tensor,
}

/// h = σ(a_o + p_o∘c')∘tanh(c')
pub fn lstm_out_forward(pre: &Tensor, c: &Tensor, peep_o: Option<&Tensor>) -> Result<LstmOutOut> {
    let (n, hw, ch) = check_pre(pre, c, "lstm_out")?;
    check_peep(peep_o, c, "lstm_out/o")?;
    let pd = pre.data();
    let cd = c.data();
    let pod = peep_o.map(|t| t.data());

    let total = n * hw * ch;
    let mut gate_o = Vec::with_capacity(total);
    let mut tanh_c = Vec::with_capacity(total);
    let mut h = Vec::with_capacity(total);
    for row in 0..n * hw {
        let pre_base = row * 4 * ch;
        let cell_base = row * ch;
        let peep_base = (row % hw) * ch;
        for k in 0..ch {
            let cv = cd[cell_base + k];
            let a_o = pd[pre_base + 3 * ch + k] + pod.map_or(0.0, |p| p[peep_base + k] * cv);
            let o = sigmoid(a_o);
            let t = cv.tanh();
            gate_o.push(o);
            tanh_c.push(t);
            h.push(o * t);
        }
    }
    let shape = c.shape().to_vec();
    Ok(LstmOutOut {
        h: Tensor::new(shape.clone(), h)?,
        gate_o: Tensor::new(shape.clone(), gate_o)?,
        tanh_c: Tensor::new(shape, tanh_c)?,
    })
}

/// Gradients of [`lstm_out_forward`]: (dpre, dc, dpeep_o).
pub fn lstm_out_backward(
    gate_o: &Tensor,
    tanh_c: &Tensor,
    c: &Tensor,
    peep_o: Option<&Tensor>,
    dout: &Tensor,
) -> (Tensor, Tensor, Option<Tensor>) {
    let cs = c.shape();
    let (n, hw, ch) = (cs[0], cs[1] * cs[2], cs[3]);
    let cd = c.data();
    let od = gate_o.data();
    let td = tanh_c.data();
    let dd = dout.data();
    let pod = peep_o.map(|t| t.data());

    let mut dpre = vec![0.0; n * hw * 4 * ch];
    let mut dc = vec![0.0; n * hw * ch];
    let mut dpo = peep_o.map(|_| vec![0.0; hw * ch]);
    for row in 0..n * hw {
        let pre_base = row * 4 * ch;
        let cell_base = row * ch;
        let peep_base = (row % hw) * ch;
        for k in 0..ch {
            let dh = dd[cell_base + k];
            let (o, t, cv) = (od[cell_base + k], td[cell_base + k], cd[cell_base + k]);
            let da_o = dh * t * o * (1.0 - o);
            dpre[pre_base + 3 * ch + k] = da_o;
            let mut dcv = dh * o * (1.0 - t * t);
            if let Some(p) = pod {
                dcv += da_o * p[peep_base + k];
                dpo.as_mut().unwrap()[peep_base + k] += da_o * cv;
            }
            dc[cell_base + k] = dcv;
        }
    }
    let mut pre_shape = cs.to_vec();
    pre_shape[3] = 4 * ch;
    (
        Tensor::new(pre_shape, dpre).expect("dpre shape"),
        Tensor::new(cs.to_vec(), dc).expect("dc shape"),
        dpo.map(|v| Tensor::new(cs[1..].to_vec(), v).expect("dpo shape")),
    )
}
