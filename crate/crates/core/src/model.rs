//! Float GRU parameter container, the quantizing converter, and the packed
//! column-major weight layout consumed by the engine.
//!
//! A packed layer holds two weight blocks plus one bias column:
//!
//! * input block, shape (3M, N): column `j` stacks `[W_ir[:,j]; W_iu[:,j];
//!   W_ic[:,j]]`;
//! * hidden block, shape (3M, M): column `j` stacks `[W_hr[:,j]; W_hu[:,j];
//!   W_hc[:,j]]`;
//! * bias column, length 3M: `[b_r; b_u; b_c]` quantized straight to the
//!   32-bit accumulator format (it seeds the accumulation memories, so it is
//!   never narrowed to the weight width).
//!
//! Within a layer the file order is input block, hidden block, bias column;
//! the bias column is addressed as column `M` of the hidden block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{quantize, QFormat, QTensor, Shape};
use crate::mat::MatF;

/// Float (f64) parameters of one GRU layer: reset gate r, update gate u and
/// candidate c, with input weights (M x N), hidden weights (M x M) and biases
/// (M).
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParamsF {
    pub w_ir: MatF,
    pub w_iu: MatF,
    pub w_ic: MatF,
    pub w_hr: MatF,
    pub w_hu: MatF,
    pub w_hc: MatF,
    pub b_r: Vec<f64>,
    pub b_u: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl GruLayerParamsF {
    pub fn input_size(&self) -> usize {
        self.w_ir.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_ir.rows()
    }

    /// Checks that all six matrices and three biases agree on (M, N).
    pub fn validate(&self) -> Result<()> {
        let m = self.hidden_size();
        let n = self.input_size();
        for (name, mat, rows, cols) in [
            ("W_ir", &self.w_ir, m, n),
            ("W_iu", &self.w_iu, m, n),
            ("W_ic", &self.w_ic, m, n),
            ("W_hr", &self.w_hr, m, m),
            ("W_hu", &self.w_hu, m, m),
            ("W_hc", &self.w_hc, m, m),
        ] {
            if mat.rows() != rows {
                return Err(Error::dims(format!("{name} rows"), rows, mat.rows()));
            }
            if mat.cols() != cols {
                return Err(Error::dims(format!("{name} cols"), cols, mat.cols()));
            }
        }
        for (name, b) in [("b_r", &self.b_r), ("b_u", &self.b_u), ("b_c", &self.b_c)] {
            if b.len() != m {
                return Err(Error::dims(format!("{name} len"), m, b.len()));
            }
        }
        Ok(())
    }
}

/// Network-level configuration: layer count L, first-layer input size N,
/// uniform hidden size M, the delta threshold (raw, in activation format),
/// and the number formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: usize,
    pub input_size: usize,
    pub hidden_size: usize,
    /// Delta threshold, raw activation-format value (0x40 = 0.25 in Q8.8).
    pub theta_raw: i16,
    pub act_fmt: QFormat,
    pub wgt_fmt: QFormat,
}

impl NetworkConfig {
    pub fn new(layers: usize, input_size: usize, hidden_size: usize, theta_raw: i16) -> Self {
        Self {
            layers,
            input_size,
            hidden_size,
            theta_raw,
            act_fmt: QFormat::q8_8(),
            wgt_fmt: QFormat::q1_7(),
        }
    }

    /// 32-bit accumulator format implied by the activation/weight formats.
    pub fn acc_fmt(&self) -> QFormat {
        QFormat::accumulator(self.act_fmt, self.wgt_fmt)
    }

    /// Input width of layer `l`: N for the first layer, M above it.
    pub fn layer_input_size(&self, l: usize) -> usize {
        if l == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::ConfigMismatch("layer count must be >= 1".into()));
        }
        if self.input_size == 0 || self.hidden_size == 0 {
            return Err(Error::ConfigMismatch("network sizes must be >= 1".into()));
        }
        if self.theta_raw < 0 {
            return Err(Error::ConfigMismatch(format!(
                "delta threshold must be >= 0, got {}",
                self.theta_raw
            )));
        }
        if self.act_fmt.total_bits() != 16 || self.act_fmt.frac_bits() < 6 {
            return Err(Error::FormatUnsupported(format!(
                "activations must be 16-bit with >= 6 frac bits, got {}",
                self.act_fmt
            )));
        }
        if !matches!(self.wgt_fmt.total_bits(), 8 | 16) {
            return Err(Error::FormatUnsupported(format!(
                "weights must be 8- or 16-bit, got {}",
                self.wgt_fmt
            )));
        }
        Ok(())
    }
}

/// Which weight block a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSource {
    Input,
    Hidden,
}

/// One burst: a byte offset (relative to the layer's data start) and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstDescriptor {
    pub start_offset: u64,
    pub burst_len: u64,
}

/// Quantized, column-major, bias-appended weights of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedLayer {
    input_block: QTensor,
    hidden_block: QTensor,
    bias_col: QTensor,
    col_stride_bytes: usize,
}

impl PackedLayer {
    pub fn hidden_size(&self) -> usize {
        self.hidden_block.cols()
    }

    pub fn input_size(&self) -> usize {
        self.input_block.cols()
    }

    /// 3M, the stacked column height.
    pub fn column_height(&self) -> usize {
        self.input_block.rows()
    }

    /// Byte stride between consecutive weight columns (3M * weight bytes).
    pub fn col_stride_bytes(&self) -> usize {
        self.col_stride_bytes
    }

    /// Column `j` of the input block: `[W_ir[:,j]; W_iu[:,j]; W_ic[:,j]]` raw.
    pub fn input_col(&self, j: usize) -> &[i32] {
        self.input_block.col(j)
    }

    /// Column `j` of the hidden block: `[W_hr[:,j]; W_hu[:,j]; W_hc[:,j]]` raw.
    pub fn hidden_col(&self, j: usize) -> &[i32] {
        self.hidden_block.col(j)
    }

    /// The appended bias column `[b_r; b_u; b_c]`, raw accumulator format.
    pub fn bias_col(&self) -> &[i32] {
        self.bias_col.data()
    }

    pub fn input_block(&self) -> &QTensor {
        &self.input_block
    }

    pub fn hidden_block(&self) -> &QTensor {
        &self.hidden_block
    }

    /// Total packed bytes of this layer in the model file.
    pub fn byte_len(&self) -> u64 {
        let weight_cols = (self.input_size() + self.hidden_size()) as u64;
        weight_cols * self.col_stride_bytes as u64 + self.column_height() as u64 * 4
    }

    pub(crate) fn from_parts(
        input_block: QTensor,
        hidden_block: QTensor,
        bias_col: QTensor,
        wgt_bytes: usize,
    ) -> Self {
        let col_stride_bytes = input_block.rows() * wgt_bytes;
        Self {
            input_block,
            hidden_block,
            bias_col,
            col_stride_bytes,
        }
    }
}

/// A quantized model ready for the engine: config plus packed layers.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedModel {
    pub config: NetworkConfig,
    pub layers: Vec<PackedLayer>,
}

impl PackedModel {
    /// Number of packed weights: 3MN + 3M^2 + (L-1) * 6M^2 (biases excluded).
    pub fn weight_count(&self) -> u64 {
        let m = self.config.hidden_size as u64;
        let n = self.config.input_size as u64;
        let l = self.config.layers as u64;
        3 * m * n + 3 * m * m + (l - 1) * 6 * m * m
    }

    /// Size of the serialized model file in bytes (header included).
    pub fn file_len(&self) -> u64 {
        crate::io::PACKED_HEADER_LEN as u64 + self.layers.iter().map(|l| l.byte_len()).sum::<u64>()
    }
}

fn quantize_block_cols(mats: [&MatF; 3], fmt: QFormat) -> Vec<i32> {
    let rows = mats[0].rows();
    let cols = mats[0].cols();
    let mut data = Vec::with_capacity(3 * rows * cols);
    for j in 0..cols {
        for mat in mats {
            for i in 0..rows {
                data.push(quantize(mat.get(i, j), fmt));
            }
        }
    }
    data
}

/// Quantizes and packs a float model. Weights go to `cfg.wgt_fmt`
/// (round-to-nearest-even, saturating); biases go straight to the 32-bit
/// accumulator format and live in the appended column of each layer.
pub fn convert(params: &[GruLayerParamsF], cfg: &NetworkConfig) -> Result<PackedModel> {
    cfg.validate()?;
    if params.len() != cfg.layers {
        return Err(Error::dims("layer count", cfg.layers, params.len()));
    }
    let acc = cfg.acc_fmt();
    let mut layers = Vec::with_capacity(params.len());
    for (l, p) in params.iter().enumerate() {
        p.validate()?;
        let m = cfg.hidden_size;
        let n = cfg.layer_input_size(l);
        if p.hidden_size() != m {
            return Err(Error::dims(format!("layer {l} hidden size"), m, p.hidden_size()));
        }
        if p.input_size() != n {
            return Err(Error::dims(format!("layer {l} input size"), n, p.input_size()));
        }

        let input_data = quantize_block_cols([&p.w_ir, &p.w_iu, &p.w_ic], cfg.wgt_fmt);
        let hidden_data = quantize_block_cols([&p.w_hr, &p.w_hu, &p.w_hc], cfg.wgt_fmt);
        let bias_data: Vec<i32> = p
            .b_r
            .iter()
            .chain(&p.b_u)
            .chain(&p.b_c)
            .map(|&b| quantize(b, acc))
            .collect();

        let input_block = QTensor::new(
            input_data,
            Shape::Matrix { rows: 3 * m, cols: n },
            cfg.wgt_fmt,
        )?;
        let hidden_block = QTensor::new(
            hidden_data,
            Shape::Matrix { rows: 3 * m, cols: m },
            cfg.wgt_fmt,
        )?;
        let bias_col = QTensor::new(bias_data, Shape::Vector(3 * m), acc)?;
        layers.push(PackedLayer::from_parts(
            input_block,
            hidden_block,
            bias_col,
            cfg.wgt_fmt.bytes(),
        ));
    }
    Ok(PackedModel {
        config: *cfg,
        layers,
    })
}

/// Burst descriptor for column `j` of a block, offsets relative to the
/// layer's data start. Column `M` of the hidden block is the bias column,
/// whose burst is 3M 32-bit words.
pub fn column_descriptor(
    layer: &PackedLayer,
    source: ColumnSource,
    j: usize,
) -> Result<BurstDescriptor> {
    let stride = layer.col_stride_bytes() as u64;
    let n = layer.input_size();
    let m = layer.hidden_size();
    match source {
        ColumnSource::Input => {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, width: n });
            }
            Ok(BurstDescriptor {
                start_offset: j as u64 * stride,
                burst_len: stride,
            })
        }
        ColumnSource::Hidden => {
            let base = n as u64 * stride;
            if j < m {
                Ok(BurstDescriptor {
                    start_offset: base + j as u64 * stride,
                    burst_len: stride,
                })
            } else if j == m {
                // appended bias column, stored as 32-bit words
                Ok(BurstDescriptor {
                    start_offset: base + m as u64 * stride,
                    burst_len: layer.column_height() as u64 * 4,
                })
            } else {
                Err(Error::IndexOutOfRange {
                    index: j,
                    width: m + 1,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn small_cfg(layers: usize, n: usize, m: usize) -> NetworkConfig {
        NetworkConfig::new(layers, n, m, 0x40)
    }

    #[test]
    fn weight_count_formula_matches_element_count() {
        for (l, n, m) in [(1, 3, 4), (2, 5, 6), (3, 2, 2), (1, 1, 1)] {
            let params = synth::gen_model(l, n, m, 7);
            let model = convert(&params, &small_cfg(l, n, m)).unwrap();
            let brute: usize = params
                .iter()
                .map(|p| {
                    p.w_ir.rows() * p.w_ir.cols() * 3 + p.w_hr.rows() * p.w_hr.cols() * 3
                })
                .sum();
            assert_eq!(model.weight_count(), brute as u64);
        }
    }

    #[test]
    fn benchmark_scale_weight_counts() {
        let params = synth::gen_model(2, 40, 768, 1);
        let model = convert(&params, &small_cfg(2, 40, 768)).unwrap();
        assert_eq!(model.weight_count(), 5_400_576);

        let params = synth::gen_model(1, 40, 256, 1);
        let model = convert(&params, &small_cfg(1, 40, 256)).unwrap();
        assert_eq!(model.weight_count(), 227_328);
    }

    #[test]
    fn representable_weights_pack_bit_identically() {
        // every weight an exact Q1.7 multiple: quantization must be lossless
        let m = 4;
        let n = 3;
        let mut params = synth::gen_model(1, n, m, 3);
        let p = &mut params[0];
        for mat in [&mut p.w_ir, &mut p.w_iu, &mut p.w_ic] {
            for i in 0..m {
                for j in 0..n {
                    let raw = ((i * n + j) as i32 % 255) - 127; // [-127, 127]
                    mat.set(i, j, raw as f64 / 128.0);
                }
            }
        }
        for mat in [&mut p.w_hr, &mut p.w_hu, &mut p.w_hc] {
            for i in 0..m {
                for j in 0..m {
                    let raw = ((i * m + j) as i32 % 255) - 127;
                    mat.set(i, j, raw as f64 / 128.0);
                }
            }
        }
        let model = convert(&params, &small_cfg(1, n, m)).unwrap();
        let layer = &model.layers[0];
        // inverse layout walk: undo the [r; u; c] stacking column by column
        for j in 0..n {
            let col = layer.input_col(j);
            for i in 0..m {
                assert_eq!(col[i] as f64 / 128.0, params[0].w_ir.get(i, j));
                assert_eq!(col[m + i] as f64 / 128.0, params[0].w_iu.get(i, j));
                assert_eq!(col[2 * m + i] as f64 / 128.0, params[0].w_ic.get(i, j));
            }
        }
        for j in 0..m {
            let col = layer.hidden_col(j);
            for i in 0..m {
                assert_eq!(col[i] as f64 / 128.0, params[0].w_hr.get(i, j));
                assert_eq!(col[m + i] as f64 / 128.0, params[0].w_hu.get(i, j));
                assert_eq!(col[2 * m + i] as f64 / 128.0, params[0].w_hc.get(i, j));
            }
        }
    }

    #[test]
    fn quantization_error_bounded_by_half_ulp() {
        let params = synth::gen_model(1, 6, 8, 11);
        let cfg = small_cfg(1, 6, 8);
        let model = convert(&params, &cfg).unwrap();
        let half_ulp = 0.5 / 128.0 + 1e-12;
        for j in 0..6 {
            let col = model.layers[0].input_col(j);
            for (i, &cv) in col.iter().take(8).enumerate() {
                let w = params[0].w_ir.get(i, j);
                if cv > -128 && cv < 127 {
                    assert!((cv as f64 / 128.0 - w).abs() <= half_ulp);
                }
            }
        }
    }

    #[test]
    fn descriptor_examples() {
        let params = synth::gen_model(1, 40, 256, 5);
        let model = convert(&params, &small_cfg(1, 40, 256)).unwrap();
        let layer = &model.layers[0];

        // first input column sits at the block base
        let d = column_descriptor(layer, ColumnSource::Input, 0).unwrap();
        assert_eq!(d.start_offset, 0);
        assert_eq!(d.burst_len, 768); // 3 * 256 INT8 weights

        // arithmetic check against the packed stride
        let d = column_descriptor(layer, ColumnSource::Input, 5).unwrap();
        assert_eq!(d.start_offset, 5 * 768);
        assert_eq!(d.burst_len, 768);

        // column M of the hidden block is the bias column (wider words)
        let d = column_descriptor(layer, ColumnSource::Hidden, 256).unwrap();
        assert_eq!(d.start_offset, (40 + 256) * 768);
        assert_eq!(d.burst_len, 768 * 4);

        assert!(matches!(
            column_descriptor(layer, ColumnSource::Input, 40),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            column_descriptor(layer, ColumnSource::Hidden, 257),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn descriptor_offsets_match_brute_force_packing() {
        // build the layer byte image by hand and check each descriptor
        // points at the column written there
        let params = synth::gen_model(1, 5, 4, 9);
        let cfg = small_cfg(1, 5, 4);
        let model = convert(&params, &cfg).unwrap();
        let layer = &model.layers[0];
        let mut image: Vec<u8> = Vec::new();
        for j in 0..5 {
            for &w in layer.input_col(j) {
                image.push(w as i8 as u8);
            }
        }
        for j in 0..4 {
            for &w in layer.hidden_col(j) {
                image.push(w as i8 as u8);
            }
        }
        for &b in layer.bias_col() {
            image.extend_from_slice(&b.to_le_bytes());
        }
        assert_eq!(image.len() as u64, layer.byte_len());

        let d = column_descriptor(layer, ColumnSource::Input, 3).unwrap();
        let got: Vec<i32> = image[d.start_offset as usize..(d.start_offset + d.burst_len) as usize]
            .iter()
            .map(|&b| b as i8 as i32)
            .collect();
        assert_eq!(got, layer.input_col(3));
    }

    #[test]
    fn convert_rejects_bad_dims_and_formats() {
        let params = synth::gen_model(1, 4, 4, 2);
        let cfg = small_cfg(2, 4, 4); // wants two layers
        assert!(matches!(
            convert(&params, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));

        let mut cfg = small_cfg(1, 4, 4);
        cfg.wgt_fmt = QFormat::new(32, 15).unwrap(); // 32-bit weights unsupported
        assert!(matches!(
            convert(&params, &cfg),
            Err(Error::FormatUnsupported(_))
        ));

        let mut cfg = small_cfg(1, 4, 4);
        cfg.theta_raw = -1;
        assert!(convert(&params, &cfg).is_err());
    }

    #[test]
    fn int16_weights_pack() {
        let params = synth::gen_model(1, 3, 4, 8);
        let mut cfg = small_cfg(1, 3, 4);
        cfg.wgt_fmt = QFormat::new(16, 15).unwrap(); // Q1.15
        let model = convert(&params, &cfg).unwrap();
        assert_eq!(model.layers[0].col_stride_bytes(), 3 * 4 * 2);
        assert_eq!(model.config.acc_fmt().frac_bits(), 23);
    }
}
