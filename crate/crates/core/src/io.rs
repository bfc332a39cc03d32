//! File formats: the packed model binary, the float-model interchange
//! directory, the FEAT feature/logit binary, and the plain-text loaders.
//! Everything on disk is little-endian.
//!
//! Packed model (`.edrn`), 64-byte header then layer data:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EDRN"
//! 4       4     version (u32, currently 1)
//! 8       4     L, layer count
//! 12      4     N, first-layer input size
//! 16      4     M, hidden size
//! 20      1     activation total bits
//! 21      1     activation frac bits
//! 22      1     weight total bits
//! 23      1     weight frac bits
//! 24      4     delta threshold, raw activation units (i32)
//! 28      36    reserved, zero
//! ```
//!
//! Each layer follows as: input block columns (3M weights each, at the weight
//! width), hidden block columns, then the bias column (3M i32 words).
//!
//! FEAT files carry one timestep-major i16 matrix: magic "FEAT", T (u32),
//! dim (u32), then T*dim raw Q8.8 values. Several records may be
//! concatenated in one file (one per utterance for decoder input).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{quantize, QFormat, QTensor, Shape};
use crate::mat::MatF;
use crate::model::{GruLayerParamsF, NetworkConfig, PackedLayer, PackedModel};

pub const PACKED_MAGIC: [u8; 4] = *b"EDRN";
pub const PACKED_VERSION: u32 = 1;
pub const PACKED_HEADER_LEN: usize = 64;

pub const FEAT_MAGIC: [u8; 4] = *b"FEAT";
pub const FEAT_HEADER_LEN: usize = 12;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes a packed model to `path`.
pub fn save_packed(model: &PackedModel, path: &Path) -> Result<()> {
    let cfg = &model.config;
    let mut buf = Vec::with_capacity(model.file_len() as usize);
    buf.extend_from_slice(&PACKED_MAGIC);
    buf.extend_from_slice(&PACKED_VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.layers as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.input_size as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.hidden_size as u32).to_le_bytes());
    buf.push(cfg.act_fmt.total_bits());
    buf.push(cfg.act_fmt.frac_bits());
    buf.push(cfg.wgt_fmt.total_bits());
    buf.push(cfg.wgt_fmt.frac_bits());
    buf.extend_from_slice(&(cfg.theta_raw as i32).to_le_bytes());
    buf.resize(PACKED_HEADER_LEN, 0);

    let wgt_bytes = cfg.wgt_fmt.bytes();
    for layer in &model.layers {
        for j in 0..layer.input_size() {
            push_weights(&mut buf, layer.input_col(j), wgt_bytes);
        }
        for j in 0..layer.hidden_size() {
            push_weights(&mut buf, layer.hidden_col(j), wgt_bytes);
        }
        for &b in layer.bias_col() {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    write_file(path, &buf)
}

fn push_weights(buf: &mut Vec<u8>, col: &[i32], wgt_bytes: usize) {
    for &w in col {
        match wgt_bytes {
            1 => buf.push(w as i8 as u8),
            2 => buf.extend_from_slice(&(w as i16).to_le_bytes()),
            _ => unreachable!("weight widths are validated at convert time"),
        }
    }
}

/// Loads a packed model, verifying magic, version and exact byte length.
pub fn load_packed(path: &Path) -> Result<PackedModel> {
    let bytes = read_file(path)?;
    if bytes.len() < PACKED_HEADER_LEN {
        return Err(Error::CorruptLength {
            expected: PACKED_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != PACKED_MAGIC {
        return Err(Error::BadMagic {
            expected: PACKED_MAGIC,
            found: magic,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PACKED_VERSION {
        return Err(Error::VersionMismatch {
            expected: PACKED_VERSION,
            found: version,
        });
    }
    let layers = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let input_size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let hidden_size = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let act_fmt = QFormat::new(bytes[20], bytes[21])?;
    let wgt_fmt = QFormat::new(bytes[22], bytes[23])?;
    let theta = i32::from_le_bytes(bytes[24..28].try_into().unwrap());
    let theta_raw = i16::try_from(theta)
        .map_err(|_| Error::Parse(format!("delta threshold {theta} out of range")))?;

    let cfg = NetworkConfig {
        layers,
        input_size,
        hidden_size,
        theta_raw,
        act_fmt,
        wgt_fmt,
    };
    cfg.validate()?;

    let m = hidden_size;
    let wgt_bytes = wgt_fmt.bytes();
    let layer_len = |n_in: usize| (n_in + m) * 3 * m * wgt_bytes + 3 * m * 4;
    let expected = PACKED_HEADER_LEN as u64
        + (0..layers)
            .map(|l| layer_len(cfg.layer_input_size(l)) as u64)
            .sum::<u64>();
    if bytes.len() as u64 != expected {
        return Err(Error::CorruptLength {
            expected,
            found: bytes.len() as u64,
        });
    }

    let acc = cfg.acc_fmt();
    let mut pos = PACKED_HEADER_LEN;
    let mut packed_layers = Vec::with_capacity(layers);
    for l in 0..layers {
        let n_in = cfg.layer_input_size(l);
        let input_data = take_weights(&bytes, &mut pos, 3 * m * n_in, wgt_bytes);
        let hidden_data = take_weights(&bytes, &mut pos, 3 * m * m, wgt_bytes);
        let mut bias_data = Vec::with_capacity(3 * m);
        for _ in 0..3 * m {
            bias_data.push(i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
            pos += 4;
        }
        let input_block = QTensor::new(
            input_data,
            Shape::Matrix {
                rows: 3 * m,
                cols: n_in,
            },
            wgt_fmt,
        )?;
        let hidden_block = QTensor::new(
            hidden_data,
            Shape::Matrix {
                rows: 3 * m,
                cols: m,
            },
            wgt_fmt,
        )?;
        let bias_col = QTensor::new(bias_data, Shape::Vector(3 * m), acc)?;
        packed_layers.push(PackedLayer::from_parts(
            input_block,
            hidden_block,
            bias_col,
            wgt_bytes,
        ));
    }
    Ok(PackedModel {
        config: cfg,
        layers: packed_layers,
    })
}

fn take_weights(bytes: &[u8], pos: &mut usize, count: usize, wgt_bytes: usize) -> Vec<i32> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let v = match wgt_bytes {
            1 => bytes[*pos] as i8 as i32,
            2 => i16::from_le_bytes(bytes[*pos..*pos + 2].try_into().unwrap()) as i32,
            _ => unreachable!(),
        };
        out.push(v);
        *pos += wgt_bytes;
    }
    out
}

// ---------------------------------------------------------------------------
// Float model interchange directory
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FloatManifest {
    layers: Vec<FloatLayerFiles>,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "L")]
    l: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FloatLayerFiles {
    #[serde(rename = "W_ir")]
    w_ir: String,
    #[serde(rename = "W_iu")]
    w_iu: String,
    #[serde(rename = "W_ic")]
    w_ic: String,
    #[serde(rename = "W_hr")]
    w_hr: String,
    #[serde(rename = "W_hu")]
    w_hu: String,
    #[serde(rename = "W_hc")]
    w_hc: String,
    b_r: String,
    b_u: String,
    b_c: String,
}

fn read_blob(dir: &Path, name: &str, file: &str, len: usize) -> Result<Vec<f64>> {
    let path = dir.join(file);
    let bytes = fs::read(&path)
        .map_err(|_| Error::MissingTensor(format!("{name} ({})", path.display())))?;
    if bytes.len() != len * 4 {
        return Err(Error::CorruptLength {
            expected: (len * 4) as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

/// Loads a float model directory: `manifest.json` plus row-major f32 blobs.
/// Returns the per-layer parameters along with (L, N, M) from the manifest.
pub fn load_float_dir(dir: &Path) -> Result<(Vec<GruLayerParamsF>, usize, usize, usize)> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: FloatManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest.json: {e}")))?;
    if manifest.layers.len() != manifest.l {
        return Err(Error::dims("manifest layers", manifest.l, manifest.layers.len()));
    }
    let (n, m) = (manifest.n, manifest.m);
    let mut params = Vec::with_capacity(manifest.l);
    for (l, files) in manifest.layers.iter().enumerate() {
        let n_in = if l == 0 { n } else { m };
        let mat = |name: &str, file: &str, rows: usize, cols: usize| -> Result<MatF> {
            let data = read_blob(dir, name, file, rows * cols)?;
            MatF::from_row_major(rows, cols, &data)
        };
        params.push(GruLayerParamsF {
            w_ir: mat("W_ir", &files.w_ir, m, n_in)?,
            w_iu: mat("W_iu", &files.w_iu, m, n_in)?,
            w_ic: mat("W_ic", &files.w_ic, m, n_in)?,
            w_hr: mat("W_hr", &files.w_hr, m, m)?,
            w_hu: mat("W_hu", &files.w_hu, m, m)?,
            w_hc: mat("W_hc", &files.w_hc, m, m)?,
            b_r: read_blob(dir, "b_r", &files.b_r, m)?,
            b_u: read_blob(dir, "b_u", &files.b_u, m)?,
            b_c: read_blob(dir, "b_c", &files.b_c, m)?,
        });
    }
    Ok((params, manifest.l, n, m))
}

/// Writes a float model directory in the interchange layout.
pub fn save_float_dir(params: &[GruLayerParamsF], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write_blob = |file: &str, data: &[f64]| -> Result<()> {
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for &v in data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        write_file(&dir.join(file), &bytes)
    };
    let mut layers = Vec::with_capacity(params.len());
    for (l, p) in params.iter().enumerate() {
        p.validate()?;
        let name = |t: &str| format!("layer{l}_{t}.bin");
        let files = FloatLayerFiles {
            w_ir: name("W_ir"),
            w_iu: name("W_iu"),
            w_ic: name("W_ic"),
            w_hr: name("W_hr"),
            w_hu: name("W_hu"),
            w_hc: name("W_hc"),
            b_r: name("b_r"),
            b_u: name("b_u"),
            b_c: name("b_c"),
        };
        write_blob(&files.w_ir, &p.w_ir.to_row_major())?;
        write_blob(&files.w_iu, &p.w_iu.to_row_major())?;
        write_blob(&files.w_ic, &p.w_ic.to_row_major())?;
        write_blob(&files.w_hr, &p.w_hr.to_row_major())?;
        write_blob(&files.w_hu, &p.w_hu.to_row_major())?;
        write_blob(&files.w_hc, &p.w_hc.to_row_major())?;
        write_blob(&files.b_r, &p.b_r)?;
        write_blob(&files.b_u, &p.b_u)?;
        write_blob(&files.b_c, &p.b_c)?;
        layers.push(files);
    }
    let manifest = FloatManifest {
        layers,
        n: params[0].input_size(),
        m: params[0].hidden_size(),
        l: params.len(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest.json: {e}")))?;
    write_file(&dir.join("manifest.json"), text.as_bytes())
}

// ---------------------------------------------------------------------------
// FEAT binary (features / engine outputs / logits)
// ---------------------------------------------------------------------------

fn encode_feat_record(dim: usize, rows: &[Vec<i16>]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(FEAT_HEADER_LEN + rows.len() * dim * 2);
    buf.extend_from_slice(&FEAT_MAGIC);
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for (t, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::dims(format!("feature row {t}"), dim, row.len()));
        }
        for &v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Writes one FEAT record. `dim` is explicit so empty sequences keep their
/// width.
pub fn save_features(path: &Path, dim: usize, rows: &[Vec<i16>]) -> Result<()> {
    write_file(path, &encode_feat_record(dim, rows)?)
}

/// Writes several FEAT records back to back (one per utterance).
pub fn save_feature_records(path: &Path, records: &[(usize, Vec<Vec<i16>>)]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (dim, rows) in records {
        let buf = encode_feat_record(*dim, rows)?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn decode_feat_record(bytes: &[u8], pos: &mut usize) -> Result<(usize, Vec<Vec<i16>>)> {
    if bytes.len() - *pos < FEAT_HEADER_LEN {
        return Err(Error::CorruptLength {
            expected: (*pos + FEAT_HEADER_LEN) as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[*pos..*pos + 4].try_into().unwrap();
    if magic != FEAT_MAGIC {
        return Err(Error::BadMagic {
            expected: FEAT_MAGIC,
            found: magic,
        });
    }
    let t = u32::from_le_bytes(bytes[*pos + 4..*pos + 8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[*pos + 8..*pos + 12].try_into().unwrap()) as usize;
    *pos += FEAT_HEADER_LEN;
    let body = t
        .checked_mul(dim)
        .and_then(|e| e.checked_mul(2))
        .ok_or(Error::Parse("FEAT header overflow".into()))?;
    if bytes.len() - *pos < body {
        return Err(Error::CorruptLength {
            expected: (*pos + body) as u64,
            found: bytes.len() as u64,
        });
    }
    let mut rows = Vec::with_capacity(t);
    for _ in 0..t {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(i16::from_le_bytes(bytes[*pos..*pos + 2].try_into().unwrap()));
            *pos += 2;
        }
        rows.push(row);
    }
    Ok((dim, rows))
}

/// Loads a single-record FEAT file; trailing bytes are rejected.
pub fn load_features(path: &Path) -> Result<(usize, Vec<Vec<i16>>)> {
    let bytes = read_file(path)?;
    let mut pos = 0;
    let rec = decode_feat_record(&bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(Error::CorruptLength {
            expected: pos as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(rec)
}

/// Loads every record of a concatenated FEAT file.
pub fn load_feature_records(path: &Path) -> Result<Vec<(usize, Vec<Vec<i16>>)>> {
    let bytes = read_file(path)?;
    let mut pos = 0;
    let mut records = Vec::new();
    while pos < bytes.len() {
        records.push(decode_feat_record(&bytes, &mut pos)?);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Plain-text loaders
// ---------------------------------------------------------------------------

fn parse_float_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {lineno}: bad number {tok:?}")))
        })
        .collect()
}

/// CSV feature loader: one timestep per line, comma-separated floats,
/// quantized to `act` on load.
pub fn load_features_csv(path: &Path, act: QFormat) -> Result<(usize, Vec<Vec<i16>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<i16>> = Vec::new();
    let mut dim = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_float_row(line, idx + 1)?;
        if rows.is_empty() {
            dim = vals.len();
        } else if vals.len() != dim {
            return Err(Error::dims(format!("feature line {}", idx + 1), dim, vals.len()));
        }
        rows.push(vals.iter().map(|&v| quantize(v, act) as i16).collect());
    }
    Ok((dim, rows))
}

/// Loads logit utterances from CSV (blank-line-separated blocks) or from a
/// concatenated FEAT file (values dequantized as Q8.8), picked by extension.
pub fn load_logits(path: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        load_logits_csv(path)
    } else {
        let records = load_feature_records(path)?;
        let act = QFormat::q8_8();
        Ok(records
            .into_iter()
            .map(|(_, rows)| {
                rows.into_iter()
                    .map(|r| {
                        r.into_iter()
                            .map(|v| crate::fixedpoint::dequantize(v as i32, act))
                            .collect()
                    })
                    .collect()
            })
            .collect())
    }
}

fn load_logits_csv(path: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut utterances = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                utterances.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push(parse_float_row(line, idx + 1)?);
    }
    if !current.is_empty() {
        utterances.push(current);
    }
    Ok(utterances)
}

/// Reference transcripts: one whitespace-separated token-index sequence per
/// line. An empty line is an empty reference, which is rejected.
pub fn load_transcripts(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines: Vec<&str> = text.lines().collect();
    // a single trailing newline does not count as an empty transcript
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    let mut out = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            return Err(Error::EmptyReference);
        }
        let tokens = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad token {tok:?}", idx + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(tokens);
    }
    Ok(out)
}
