//! Greedy CTC decoding and word-error-rate scoring.

use crate::error::{Error, Result};

/// A decoded label sequence. Tokens never contain the blank index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSeq {
    pub tokens: Vec<usize>,
    pub blank_index: usize,
}

impl LabelSeq {
    pub fn new(tokens: Vec<usize>, blank_index: usize) -> Self {
        debug_assert!(tokens.iter().all(|&t| t != blank_index));
        Self {
            tokens,
            blank_index,
        }
    }
}

/// Greedy decode of a T x C logit matrix: per-timestep argmax (ties break
/// toward the lowest index), collapse consecutive repeats, drop blanks.
pub fn greedy_decode(logits: &[Vec<f64>], blank_index: usize) -> Result<LabelSeq> {
    let c = match logits.first() {
        Some(row) => row.len(),
        None => return Ok(LabelSeq::new(Vec::new(), blank_index)),
    };
    if c < 2 {
        return Err(Error::dims("logit classes", 2, c));
    }
    if blank_index >= c {
        return Err(Error::dims("blank index", c, blank_index));
    }
    let mut tokens = Vec::new();
    let mut last = blank_index;
    for (t, row) in logits.iter().enumerate() {
        if row.len() != c {
            return Err(Error::dims(format!("logit row {t}"), c, row.len()));
        }
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best != last && best != blank_index {
            tokens.push(best);
        }
        last = best;
    }
    Ok(LabelSeq::new(tokens, blank_index))
}

/// Token-level edit distance (insertions, deletions, substitutions each
/// cost 1), rolling two-row dynamic program.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, &ai) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Word error rate: edit distance over reference length. Exceeds 1.0 when
/// the hypothesis inserts more than the reference holds; not clamped.
pub fn wer(hyp: &LabelSeq, reference: &LabelSeq) -> Result<f64> {
    if reference.tokens.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(levenshtein(&hyp.tokens, &reference.tokens) as f64 / reference.tokens.len() as f64)
}
