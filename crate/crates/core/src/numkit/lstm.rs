use serde::{Deserialize, Serialize};

use super::ops::{add_outer, matvec_acc, matvec_t_acc, sigmoid};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weights of a single LSTM cell.
///
/// `w` is `4H × (I + H)` and acts on the concatenation `[x; h]`; its row
/// blocks (and those of `b`) are the input, forget, candidate and output
/// gates, in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Tensor::zeros(&[4 * hidden, input + hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[1] - self.hidden_size()
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct LstmStep {
    xh: Vec<f64>,
    /// Activated gates `[i; f; g; o]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Standard LSTM cell: `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`,
/// `h' = o⊙tanh(c')`.
pub fn rnn_cell(x: &[f64], h: &[f64], c: &[f64], weights: &LstmWeights) -> Result<LstmStep> {
    let hs = weights.hidden_size();
    let is = weights.input_size();
    if x.len() != is || h.len() != hs || c.len() != hs {
        return Err(Error::Shape(format!(
            "lstm cell expects input {is}, hidden {hs}; got x={}, h={}, c={}",
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let mut xh = Vec::with_capacity(is + hs);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h);

    let mut gates = weights.b.data().to_vec();
    matvec_acc(weights.w.data(), 4 * hs, is + hs, &xh, &mut gates);
    for j in 0..hs {
        gates[j] = sigmoid(gates[j]);
        gates[hs + j] = sigmoid(gates[hs + j]);
        gates[2 * hs + j] = gates[2 * hs + j].tanh();
        gates[3 * hs + j] = sigmoid(gates[3 * hs + j]);
    }
    let mut c_new = vec![0.0; hs];
    let mut tanh_c = vec![0.0; hs];
    let mut h_new = vec![0.0; hs];
    for j in 0..hs {
        c_new[j] = gates[hs + j] * c[j] + gates[j] * gates[2 * hs + j];
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = gates[3 * hs + j] * tanh_c[j];
    }
    Ok(LstmStep {
        xh,
        gates,
        c_prev: c.to_vec(),
        tanh_c,
        h: h_new,
        c: c_new,
    })
}

/// Gradients flowing out of one cell.
pub struct LstmStepGrad {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Back-propagates `dh`, `dc` (gradients w.r.t. the step's outputs) through
/// the cell, accumulating weight gradients into `grads`.
pub fn rnn_cell_backward(
    step: &LstmStep,
    weights: &LstmWeights,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmWeights,
) -> LstmStepGrad {
    let hs = weights.hidden_size();
    let is = weights.input_size();
    let g = &step.gates;
    let mut dpre = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, cand, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
        let tc = step.tanh_c[j];
        let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dpre[j] = dcj * cand * i * (1.0 - i);
        dpre[hs + j] = dcj * step.c_prev[j] * f * (1.0 - f);
        dpre[2 * hs + j] = dcj * i * (1.0 - cand * cand);
        dpre[3 * hs + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dcj * f;
    }
    add_outer(grads.w.data_mut(), &dpre, &step.xh);
    for (gb, d) in grads.b.data_mut().iter_mut().zip(&dpre) {
        *gb += d;
    }
    let mut dxh = vec![0.0; is + hs];
    matvec_t_acc(weights.w.data(), 4 * hs, is + hs, &dpre, &mut dxh);
    let dh_prev = dxh.split_off(is);
    LstmStepGrad {
        dx: dxh,
        dh_prev,
        dc_prev,
    }
}
