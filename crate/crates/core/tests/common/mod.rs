//! Independent oracles for the acceptance suite. These share the low-level
//! fixed-point primitives (quantizer, MAC, LUTs) with the library but none of
//! the engine's delta-scan/column-skip code path: the dense evaluator rebuilds
//! every gate pre-activation from the bias each step, and the sparse evaluator
//! zeroes sub-threshold deltas explicitly and walks every weight column.

use edgedrnn_core::fixedpoint::{mac, requantize, NluFunction, NluLut, QFormat};
use edgedrnn_core::model::PackedModel;

/// Shared activation math, written against the documented datapath:
/// r = LUTsig(M_r), u = LUTsig(M_u), c = LUTtanh(M_cx + align(r * narrow(M_ch))),
/// h = narrow((1 - u) * c + u * h_prev).
#[allow(clippy::too_many_arguments)]
fn activation(
    m_r: &[i32],
    m_u: &[i32],
    m_cx: &[i32],
    m_ch: &[i32],
    h_prev: &[i16],
    sigmoid: &NluLut,
    tanh: &NluLut,
    act: QFormat,
    acc: QFormat,
) -> Vec<i16> {
    let prod = QFormat::new(32, 2 * act.frac_bits()).unwrap();
    let one = act.one_raw();
    (0..m_r.len())
        .map(|i| {
            let r = sigmoid.eval(m_r[i], acc) as i32;
            let u = sigmoid.eval(m_u[i], acc) as i32;
            let mch_act = requantize(m_ch[i], acc, act);
            let r_mch = requantize(r * mch_act, prod, acc);
            let pre_c =
                (m_cx[i] as i64 + r_mch as i64).clamp(i32::MIN as i64, i32::MAX as i64) as i32;
            let c = tanh.eval(pre_c, acc) as i32;
            let blend = (one - u) * c + u * h_prev[i] as i32;
            requantize(blend, prod, act) as i16
        })
        .collect()
}

fn bias_memories(model: &PackedModel, l: usize) -> (Vec<i32>, Vec<i32>, Vec<i32>, Vec<i32>) {
    let m = model.config.hidden_size;
    let bias = model.layers[l].bias_col();
    (
        bias[0..m].to_vec(),
        bias[m..2 * m].to_vec(),
        bias[2 * m..3 * m].to_vec(),
        vec![0i32; m],
    )
}

/// Dense quantized GRU: recomputes each gate from bias + full matrix-vector
/// products over the packed columns every step. No delta state at all.
pub struct DenseGruOracle {
    sigmoid: NluLut,
    tanh: NluLut,
    h: Vec<Vec<i16>>,
}

impl DenseGruOracle {
    pub fn new(model: &PackedModel) -> Self {
        let act = model.config.act_fmt;
        Self {
            sigmoid: NluLut::new(NluFunction::Sigmoid, act).unwrap(),
            tanh: NluLut::new(NluFunction::Tanh, act).unwrap(),
            h: (0..model.config.layers)
                .map(|_| vec![0i16; model.config.hidden_size])
                .collect(),
        }
    }

    pub fn step(&mut self, model: &PackedModel, x: &[i16]) -> Vec<i16> {
        let cfg = &model.config;
        let m = cfg.hidden_size;
        let act = cfg.act_fmt;
        let acc = cfg.acc_fmt();
        let mut input: Vec<i16> = x.to_vec();
        for l in 0..cfg.layers {
            let layer = &model.layers[l];
            let (mut m_r, mut m_u, mut m_cx, mut m_ch) = bias_memories(model, l);
            for (j, &v) in input.iter().enumerate() {
                let d = v as i32;
                let col = layer.input_col(j);
                for i in 0..m {
                    m_r[i] = mac(col[i], d, m_r[i]);
                    m_u[i] = mac(col[m + i], d, m_u[i]);
                    m_cx[i] = mac(col[2 * m + i], d, m_cx[i]);
                }
            }
            for j in 0..m {
                let d = self.h[l][j] as i32;
                let col = layer.hidden_col(j);
                for i in 0..m {
                    m_r[i] = mac(col[i], d, m_r[i]);
                    m_u[i] = mac(col[m + i], d, m_u[i]);
                    m_ch[i] = mac(col[2 * m + i], d, m_ch[i]);
                }
            }
            let h_new = activation(
                &m_r,
                &m_u,
                &m_cx,
                &m_ch,
                &self.h[l],
                &self.sigmoid,
                &self.tanh,
                act,
                acc,
            );
            self.h[l] = h_new.clone();
            input = h_new;
        }
        input
    }
}

/// Sparsified-delta dense evaluation: builds the full delta vector, zeroes
/// every sub-threshold element, then runs the complete (zeros included)
/// matrix-vector product into persistent memories.
pub struct SparseDeltaOracle {
    sigmoid: NluLut,
    tanh: NluLut,
    m_r: Vec<Vec<i32>>,
    m_u: Vec<Vec<i32>>,
    m_cx: Vec<Vec<i32>>,
    m_ch: Vec<Vec<i32>>,
    x_ref: Vec<Vec<i16>>,
    h_ref: Vec<Vec<i16>>,
    h_prev: Vec<Vec<i16>>,
}

impl SparseDeltaOracle {
    pub fn new(model: &PackedModel) -> Self {
        let cfg = &model.config;
        let act = cfg.act_fmt;
        let mut o = Self {
            sigmoid: NluLut::new(NluFunction::Sigmoid, act).unwrap(),
            tanh: NluLut::new(NluFunction::Tanh, act).unwrap(),
            m_r: Vec::new(),
            m_u: Vec::new(),
            m_cx: Vec::new(),
            m_ch: Vec::new(),
            x_ref: Vec::new(),
            h_ref: Vec::new(),
            h_prev: Vec::new(),
        };
        for l in 0..cfg.layers {
            let (r, u, cx, ch) = bias_memories(model, l);
            o.m_r.push(r);
            o.m_u.push(u);
            o.m_cx.push(cx);
            o.m_ch.push(ch);
            o.x_ref.push(vec![0; cfg.layer_input_size(l)]);
            o.h_ref.push(vec![0; cfg.hidden_size]);
            o.h_prev.push(vec![0; cfg.hidden_size]);
        }
        o
    }

    pub fn step(&mut self, model: &PackedModel, x: &[i16]) -> Vec<i16> {
        let cfg = &model.config;
        let m = cfg.hidden_size;
        let theta = cfg.theta_raw as i32;
        let act = cfg.act_fmt;
        let acc = cfg.acc_fmt();
        let mut input: Vec<i16> = x.to_vec();
        for l in 0..cfg.layers {
            let layer = &model.layers[l];

            let mut dx = vec![0i32; input.len()];
            for (j, &v) in input.iter().enumerate() {
                let d = v as i32 - self.x_ref[l][j] as i32;
                if d.abs() >= theta {
                    dx[j] = d;
                    self.x_ref[l][j] = v;
                }
            }
            let mut dh = vec![0i32; m];
            for (j, slot) in dh.iter_mut().enumerate() {
                let d = self.h_prev[l][j] as i32 - self.h_ref[l][j] as i32;
                if d.abs() >= theta {
                    *slot = d;
                    self.h_ref[l][j] = self.h_prev[l][j];
                }
            }

            // full product, zero deltas and all
            for (j, &d) in dx.iter().enumerate() {
                let col = layer.input_col(j);
                for i in 0..m {
                    self.m_r[l][i] = mac(col[i], d, self.m_r[l][i]);
                    self.m_u[l][i] = mac(col[m + i], d, self.m_u[l][i]);
                    self.m_cx[l][i] = mac(col[2 * m + i], d, self.m_cx[l][i]);
                }
            }
            for (j, &d) in dh.iter().enumerate() {
                let col = layer.hidden_col(j);
                for i in 0..m {
                    self.m_r[l][i] = mac(col[i], d, self.m_r[l][i]);
                    self.m_u[l][i] = mac(col[m + i], d, self.m_u[l][i]);
                    self.m_ch[l][i] = mac(col[2 * m + i], d, self.m_ch[l][i]);
                }
            }

            let h_new = activation(
                &self.m_r[l],
                &self.m_u[l],
                &self.m_cx[l],
                &self.m_ch[l],
                &self.h_prev[l],
                &self.sigmoid,
                &self.tanh,
                act,
                acc,
            );
            self.h_prev[l] = h_new.clone();
            input = h_new;
        }
        input
    }
}

/// Greedy decode reference: scans the argmax from the top index downward so
/// ties land on the lowest index, collapses runs, then filters blanks.
pub fn greedy_oracle(logits: &[Vec<f64>], blank: usize) -> Vec<usize> {
    let mut path = Vec::with_capacity(logits.len());
    for row in logits {
        let mut best = row.len() - 1;
        for i in (0..row.len()).rev() {
            if row[i] >= row[best] {
                best = i;
            }
        }
        path.push(best);
    }
    let mut collapsed = Vec::new();
    for (k, &t) in path.iter().enumerate() {
        if k == 0 || path[k - 1] != t {
            collapsed.push(t);
        }
    }
    collapsed.into_iter().filter(|&t| t != blank).collect()
}

/// Full-matrix edit distance.
pub fn levenshtein_oracle(a: &[usize], b: &[usize]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dp[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[a.len()][b.len()]
}
