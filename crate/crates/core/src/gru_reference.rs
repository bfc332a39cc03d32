//! Double-precision reference implementations of a GRU layer and its
//! delta-network reformulation. These are the oracles the quantized engine
//! is checked against.
//!
//! The delta form keeps four accumulation memories per layer. Writing `Δx`
//! for the thresholded change of an input element against its reference
//! value (and `Δh` likewise for the recurrent state):
//!
//! ```text
//! M_r  += W_ir Δx + W_hr Δh        r = sigmoid(M_r)
//! M_u  += W_iu Δx + W_hu Δh        u = sigmoid(M_u)
//! M_cx += W_ic Δx                  c = tanh(M_cx + r .* M_ch)
//! M_ch += W_hc Δh                  h = (1 - u) .* c + u .* h_prev
//! ```
//!
//! The candidate memory is split because the reset gate scales only the
//! recurrent contribution; merging the two would change the math. Reference
//! vectors hold the last *transmitted* value of each element, so sub-threshold
//! drift never accumulates: with a zero threshold the updates telescope and
//! the layer is exactly the plain GRU.

use crate::error::{Error, Result};
use crate::model::GruLayerParamsF;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-layer float state for the delta form. Memories start at the biases;
/// references and the carried output start at zero.
#[derive(Debug, Clone)]
pub struct FloatState {
    pub h_prev: Vec<f64>,
    pub x_ref: Vec<f64>,
    pub h_ref: Vec<f64>,
    pub m_r: Vec<f64>,
    pub m_u: Vec<f64>,
    pub m_cx: Vec<f64>,
    pub m_ch: Vec<f64>,
}

impl FloatState {
    pub fn new(params: &GruLayerParamsF) -> Self {
        let m = params.hidden_size();
        let n = params.input_size();
        Self {
            h_prev: vec![0.0; m],
            x_ref: vec![0.0; n],
            h_ref: vec![0.0; m],
            m_r: params.b_r.clone(),
            m_u: params.b_u.clone(),
            m_cx: params.b_c.clone(),
            m_ch: vec![0.0; m],
        }
    }
}

/// One step of the plain GRU layer.
pub fn gru_step_f(params: &GruLayerParamsF, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let m = params.hidden_size();
    if x.len() != params.input_size() {
        return Err(Error::dims("gru_step_f input", params.input_size(), x.len()));
    }
    if h_prev.len() != m {
        return Err(Error::dims("gru_step_f state", m, h_prev.len()));
    }
    let ir = params.w_ir.matvec(x)?;
    let iu = params.w_iu.matvec(x)?;
    let ic = params.w_ic.matvec(x)?;
    let hr = params.w_hr.matvec(h_prev)?;
    let hu = params.w_hu.matvec(h_prev)?;
    let hc = params.w_hc.matvec(h_prev)?;

    let h = (0..m)
        .map(|i| {
            let r = sigmoid(ir[i] + hr[i] + params.b_r[i]);
            let u = sigmoid(iu[i] + hu[i] + params.b_u[i]);
            let c = (ic[i] + r * hc[i] + params.b_c[i]).tanh();
            (1.0 - u) * c + u * h_prev[i]
        })
        .collect();
    Ok(h)
}

/// One step of the delta form. Elements whose change clears `theta` update
/// their reference and accumulate one weight column into the memories.
pub fn deltagru_step_f(
    params: &GruLayerParamsF,
    x: &[f64],
    state: &mut FloatState,
    theta: f64,
) -> Result<Vec<f64>> {
    let m = params.hidden_size();
    let n = params.input_size();
    if x.len() != n {
        return Err(Error::dims("deltagru_step_f input", n, x.len()));
    }
    if state.h_prev.len() != m || state.x_ref.len() != n {
        return Err(Error::dims("deltagru_step_f state", m, state.h_prev.len()));
    }

    for (j, &xv) in x.iter().enumerate() {
        let d = xv - state.x_ref[j];
        if d.abs() >= theta {
            state.x_ref[j] = xv;
            accumulate(&mut state.m_r, params.w_ir.col(j), d);
            accumulate(&mut state.m_u, params.w_iu.col(j), d);
            accumulate(&mut state.m_cx, params.w_ic.col(j), d);
        }
    }
    for j in 0..m {
        let d = state.h_prev[j] - state.h_ref[j];
        if d.abs() >= theta {
            state.h_ref[j] = state.h_prev[j];
            accumulate(&mut state.m_r, params.w_hr.col(j), d);
            accumulate(&mut state.m_u, params.w_hu.col(j), d);
            accumulate(&mut state.m_ch, params.w_hc.col(j), d);
        }
    }

    let h: Vec<f64> = (0..m)
        .map(|i| {
            let r = sigmoid(state.m_r[i]);
            let u = sigmoid(state.m_u[i]);
            let c = (state.m_cx[i] + r * state.m_ch[i]).tanh();
            (1.0 - u) * c + u * state.h_prev[i]
        })
        .collect();
    state.h_prev.copy_from_slice(&h);
    Ok(h)
}

fn accumulate(acc: &mut [f64], col: &[f64], d: f64) {
    for (a, &w) in acc.iter_mut().zip(col) {
        *a += w * d;
    }
}
