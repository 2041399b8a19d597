//! Dense simulation of chained multi-token prediction heads.
//!
//! Head 1 is the base head applied to the decoder state `h`. Head `k ≥ 2`
//! scores `head · (l1 · (h + l2 · e))`, where `e` embeds the token emitted by
//! head `k − 1` in the same step. Every head of a step shares one `h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

type Result<T> = std::result::Result<T, MtpError>;

/// Row-major dense matrix. Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MtpError::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(MtpError::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = MtpError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MtpError::Dimension("ragged matrix rows".into()));
        }
        let n = rows.len();
        Matrix::new(n, cols, rows.concat())
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|r| m.row(r).to_vec()).collect()
    }
}

/// One `(l1, l2)` pair, both `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadLayers {
    pub l1: Matrix,
    pub l2: Matrix,
}

/// Head weights. `layers` holds either one pair shared by all extra heads or
/// one pair per extra head (`m − 1` entries, head `k` using entry `k − 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtpWeights {
    pub m: usize,
    #[serde(default)]
    pub layers: Vec<HeadLayers>,
    /// `V × d` output projection shared by every head.
    pub head: Matrix,
    /// `V × d`, one row per token id.
    pub embed: Matrix,
}

impl MtpWeights {
    pub fn d(&self) -> usize {
        self.head.cols()
    }

    pub fn vocab(&self) -> usize {
        self.head.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (v, d) = (self.vocab(), self.d());
        if self.m == 0 {
            return Err(MtpError::Contract("m must be at least 1".into()));
        }
        if v == 0 || d == 0 {
            return Err(MtpError::Dimension("empty head matrix".into()));
        }
        if (self.embed.rows(), self.embed.cols()) != (v, d) {
            return Err(MtpError::Dimension(format!(
                "embed is {}x{}, head is {v}x{d}",
                self.embed.rows(),
                self.embed.cols()
            )));
        }
        let expected = match self.m {
            1 => self.layers.len() <= 1,
            m => self.layers.len() == 1 || self.layers.len() == m - 1,
        };
        if !expected {
            return Err(MtpError::Contract(format!(
                "{} layer pairs for m = {}",
                self.layers.len(),
                self.m
            )));
        }
        for (i, pair) in self.layers.iter().enumerate() {
            for (name, mat) in [("l1", &pair.l1), ("l2", &pair.l2)] {
                if (mat.rows(), mat.cols()) != (d, d) {
                    return Err(MtpError::Dimension(format!(
                        "layers[{i}].{name} is {}x{}, expected {d}x{d}",
                        mat.rows(),
                        mat.cols()
                    )));
                }
            }
        }
        Ok(())
    }

    fn layers_for(&self, k: usize) -> Result<&HeadLayers> {
        if k < 2 || k > self.m {
            return Err(MtpError::Contract(format!(
                "head {k} outside 2..={}",
                self.m
            )));
        }
        let idx = if self.layers.len() == 1 { 0 } else { k - 2 };
        self.layers
            .get(idx)
            .ok_or_else(|| MtpError::Contract(format!("no layers for head {k}")))
    }

    pub fn embedding(&self, token: usize) -> Result<&[f64]> {
        if token >= self.vocab() {
            return Err(MtpError::Contract(format!(
                "token {token} outside vocabulary of {}",
                self.vocab()
            )));
        }
        Ok(self.embed.row(token))
    }

    /// Base next-token logits, `head · h`.
    pub fn base_logits(&self, h: &HiddenState) -> Result<Vec<f64>> {
        self.head.mul_vec(&h.h)
    }
}

/// Final decoder state at the current position.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
}

impl HiddenState {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(MtpError::Contract(
                "hidden state has non-finite entries".into(),
            ));
        }
        Ok(HiddenState { h })
    }
}

/// Deterministic single-step decoder: equal prefixes give equal states.
pub trait BaseDecoder {
    fn hidden(&self, prefix: &[usize]) -> HiddenState;
}

/// Table-driven decoder keyed on a hash of the last `context` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupDecoder {
    pub context: usize,
    pub states: Vec<Vec<f64>>,
}

impl LookupDecoder {
    pub fn new(context: usize, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() {
            return Err(MtpError::Contract(
                "lookup decoder needs at least one state".into(),
            ));
        }
        let d = states[0].len();
        if states.iter().any(|s| s.len() != d) {
            return Err(MtpError::Dimension("lookup states differ in width".into()));
        }
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MtpError::Contract(
                "lookup states have non-finite entries".into(),
            ));
        }
        Ok(LookupDecoder { context, states })
    }

    pub fn width(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    fn slot(&self, prefix: &[usize]) -> usize {
        // FNV-1a over the little-endian bytes of the context window
        let window = &prefix[prefix.len().saturating_sub(self.context)..];
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for &t in window {
            for b in (t as u64).to_le_bytes() {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        (hash % self.states.len() as u64) as usize
    }
}

impl BaseDecoder for LookupDecoder {
    fn hidden(&self, prefix: &[usize]) -> HiddenState {
        HiddenState {
            h: self.states[self.slot(prefix)].clone(),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Logits of head `k ≥ 2` given the previous head's token embedding.
pub fn mtp_logits_for_head(
    h: &HiddenState,
    prev_embed: &[f64],
    w: &MtpWeights,
    k: usize,
) -> Result<Vec<f64>> {
    let layers = w.layers_for(k)?;
    let d = w.d();
    if h.h.len() != d || prev_embed.len() != d {
        return Err(MtpError::Dimension(format!(
            "hidden {} and embedding {} against width {d}",
            h.h.len(),
            prev_embed.len()
        )));
    }
    let mixed: Vec<f64> = layers
        .l2
        .mul_vec(prev_embed)?
        .iter()
        .zip(&h.h)
        .map(|(e, x)| x + e)
        .collect();
    w.head.mul_vec(&layers.l1.mul_vec(&mixed)?)
}

/// `head · (l1 · (h + l2 · prev_embed))` with the first extra head's layers.
pub fn mtp_logits(h: &HiddenState, prev_embed: &[f64], w: &MtpWeights) -> Result<Vec<f64>> {
    mtp_logits_for_head(h, prev_embed, w, 2)
}

/// One decoding step: the shared state, the tokens kept, and each head's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub hidden: HiddenState,
    pub tokens: Vec<usize>,
    pub logits: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub tokens: Vec<usize>,
    pub steps: Vec<StepTrace>,
}

/// Greedy decoding emitting up to `m` tokens per base step, without verification.
///
/// Output is the prompt followed by generated tokens, at most `max_len` in
/// total. When `end_token` is emitted it is kept, the rest of its step is
/// dropped and decoding stops.
pub fn greedy_decode_traced(
    base: &dyn BaseDecoder,
    w: &MtpWeights,
    prompt: &[usize],
    m: usize,
    max_len: usize,
    end_token: Option<usize>,
) -> Result<DecodeTrace> {
    w.validate()?;
    if m == 0 || m > w.m {
        return Err(MtpError::Contract(format!("m = {m} outside 1..={}", w.m)));
    }
    if max_len < prompt.len() {
        return Err(MtpError::Contract(format!(
            "max_len {max_len} shorter than prompt of {}",
            prompt.len()
        )));
    }
    if let Some(&t) = prompt.iter().find(|&&t| t >= w.vocab()) {
        return Err(MtpError::Contract(format!(
            "prompt token {t} outside vocabulary"
        )));
    }
    let mut tokens = prompt.to_vec();
    let mut steps = Vec::new();
    'outer: while tokens.len() < max_len {
        let hidden = base.hidden(&tokens);
        if hidden.h.len() != w.d() {
            return Err(MtpError::Dimension(format!(
                "decoder state of width {} against head width {}",
                hidden.h.len(),
                w.d()
            )));
        }
        let mut step = StepTrace {
            hidden,
            tokens: Vec::new(),
            logits: Vec::new(),
        };
        for k in 1..=m {
            if tokens.len() >= max_len {
                break;
            }
            let logits = match step.tokens.last() {
                None => w.base_logits(&step.hidden)?,
                Some(&prev) => mtp_logits_for_head(&step.hidden, w.embedding(prev)?, w, k)?,
            };
            let t = argmax(&logits).expect("vocabulary is non-empty");
            step.logits.push(logits);
            step.tokens.push(t);
            tokens.push(t);
            if Some(t) == end_token {
                steps.push(step);
                break 'outer;
            }
        }
        steps.push(step);
    }
    Ok(DecodeTrace { tokens, steps })
}

pub fn greedy_decode_multi(
    base: &dyn BaseDecoder,
    w: &MtpWeights,
    prompt: &[usize],
    m: usize,
    max_len: usize,
    end_token: Option<usize>,
) -> Result<Vec<usize>> {
    greedy_decode_traced(base, w, prompt, m, max_len, end_token).map(|t| t.tokens)
}

/// Plain single-token greedy decoding with the base head only.
pub fn greedy_decode(
    base: &dyn BaseDecoder,
    w: &MtpWeights,
    prompt: &[usize],
    max_len: usize,
    end_token: Option<usize>,
) -> Result<Vec<usize>> {
    if let Some(&t) = prompt.iter().find(|&&t| t >= w.vocab()) {
        return Err(MtpError::Contract(format!(
            "prompt token {t} outside vocabulary"
        )));
    }
    let mut tokens = prompt.to_vec();
    while tokens.len() < max_len {
        let t = argmax(&w.base_logits(&base.hidden(&tokens))?).expect("vocabulary is non-empty");
        tokens.push(t);
        if Some(t) == end_token {
            break;
        }
    }
    Ok(tokens)
}

/// Training-mode logits of head `k`: position `i` conditions on the embedding
/// of `gold[i]` instead of a predicted token.
pub fn teacher_forced_logits(
    states: &[HiddenState],
    gold: &[usize],
    w: &MtpWeights,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    if states.len() != gold.len() {
        return Err(MtpError::Contract(format!(
            "{} states against {} gold tokens",
            states.len(),
            gold.len()
        )));
    }
    states
        .iter()
        .zip(gold)
        .map(|(h, &g)| mtp_logits_for_head(h, w.embedding(g)?, w, k))
        .collect()
}
