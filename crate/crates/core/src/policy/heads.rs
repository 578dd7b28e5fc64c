//! Link, answer and action heads: forward passes plus hand-derived
//! backward passes into a [`Model`]-shaped gradient buffer.

use crate::belief::{BeliefEncoding, Sentinel, TokenRole};
use crate::env::Func;
use crate::error::{Error, Result};
use crate::model::{Model, ANSWER_END, ANSWER_START, LINK_W, PI_B1, PI_B2, PI_FUNC, PI_W1, PI_W2};
use crate::retrieval::dot;

/// Maximum answer span length in tokens.
pub const MAX_SPAN: usize = 30;

/// Link-head inputs: one vector per anchor slot, then the NONE sentinel.
pub fn link_inputs(enc: &BeliefEncoding) -> Vec<Vec<f64>> {
    let d = enc.global.len();
    let mut bias_only = vec![0.0; d];
    bias_only[0] = 1.0;
    let mut out: Vec<Vec<f64>> = enc
        .anchors
        .iter()
        .map(|a| enc.token_mean(a.tokens.clone(), &bias_only))
        .collect();
    out.push(enc.tokens[enc.sentinel(Sentinel::None)].vector.clone());
    out
}

/// Link logits over anchor slots followed by NONE.
pub fn link_logits(model: &Model, inputs: &[Vec<f64>]) -> Vec<f64> {
    let w = model.block(LINK_W);
    inputs.iter().map(|x| dot(w, x)).collect()
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_ce(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::EmptyScores);
    }
    if label >= logits.len() {
        return Err(Error::InvalidLabel(format!(
            "label {label} out of range for {} scores",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - logits[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / z - (i == label) as u8 as f64)
        .collect();
    Ok((loss, grad))
}

/// Link cross-entropy; `label` indexes `inputs` (last = NONE). Adds the
/// parameter gradient into `grad`.
pub fn link_loss(
    model: &Model,
    inputs: &[Vec<f64>],
    label: usize,
    grad: &mut Model,
) -> Result<f64> {
    let logits = link_logits(model, inputs);
    let (loss, dl) = softmax_ce(&logits, label)?;
    let g = grad.block_mut(LINK_W);
    for (x, d) in inputs.iter().zip(&dl) {
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += d * xi;
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanKind {
    Sentinel(Sentinel),
    /// Inclusive token range into [`BeliefEncoding::tokens`].
    Text {
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub kind: SpanKind,
    pub score: f64,
}

impl SpanPrediction {
    /// Token indices `(start, end)` of the prediction.
    pub fn token_range(&self, enc: &BeliefEncoding) -> (usize, usize) {
        match self.kind {
            SpanKind::Sentinel(s) => {
                let i = enc.sentinel(s);
                (i, i)
            }
            SpanKind::Text { start, end } => (start, end),
        }
    }
}

pub fn span_logits(model: &Model, enc: &BeliefEncoding) -> (Vec<f64>, Vec<f64>) {
    let ws = model.block(ANSWER_START);
    let we = model.block(ANSWER_END);
    enc.tokens
        .iter()
        .map(|t| (dot(ws, &t.vector), dot(we, &t.vector)))
        .unzip()
}

fn same_field(a: &TokenRole, b: &TokenRole) -> bool {
    match (a, b) {
        (
            TokenRole::Passage {
                cand: ca,
                title: ta,
                ..
            },
            TokenRole::Passage {
                cand: cb,
                title: tb,
                ..
            },
        ) => ca == cb && ta == tb,
        _ => false,
    }
}

/// Best-scoring span (`start + end` logits) within one field of one
/// candidate, or a sentinel. Ties go to the earlier start, sentinels first.
#[allow(clippy::needless_range_loop)]
pub fn extract_answer(model: &Model, enc: &BeliefEncoding) -> SpanPrediction {
    let (s, e) = span_logits(model, enc);
    let mut best = SpanPrediction {
        kind: SpanKind::Sentinel(Sentinel::None),
        score: f64::NEG_INFINITY,
    };
    for sent in Sentinel::ALL {
        let i = enc.sentinel(sent);
        let score = s[i] + e[i];
        if score > best.score {
            best = SpanPrediction {
                kind: SpanKind::Sentinel(sent),
                score,
            };
        }
    }
    let n = enc.tokens.len();
    for i in 0..n {
        if matches!(enc.tokens[i].role, TokenRole::Sentinel(_)) {
            continue;
        }
        for j in i..n.min(i + MAX_SPAN) {
            if !same_field(&enc.tokens[i].role, &enc.tokens[j].role) {
                break;
            }
            let score = s[i] + e[j];
            if score > best.score {
                best = SpanPrediction {
                    kind: SpanKind::Text { start: i, end: j },
                    score,
                };
            }
        }
    }
    best
}

/// `½(CE(start) + CE(end))` over all tokens, with gradient.
pub fn answer_loss(
    model: &Model,
    enc: &BeliefEncoding,
    label: (usize, usize),
    grad: &mut Model,
) -> Result<f64> {
    let (s, e) = span_logits(model, enc);
    if label.0 > label.1 {
        return Err(Error::InvalidLabel(format!(
            "span start {} after end {}",
            label.0, label.1
        )));
    }
    let (ls, ds) = softmax_ce(&s, label.0)?;
    let (le, de) = softmax_ce(&e, label.1)?;
    for (block, dl) in [(ANSWER_START, &ds), (ANSWER_END, &de)] {
        let g = grad.block_mut(block);
        for (t, d) in enc.tokens.iter().zip(dl.iter()) {
            for (gi, xi) in g.iter_mut().zip(&t.vector) {
                *gi += 0.5 * d * xi;
            }
        }
    }
    Ok(0.5 * (ls + le))
}

/// Intermediate values of one action-scorer forward pass.
#[derive(Debug, Clone)]
pub struct ActionForward {
    pub score: f64,
    input: Vec<f64>,
    hidden: Vec<f64>,
    func: Func,
}

/// `π(a|b) = w2 · relu(W1 [v_cls; w_f; v_u] + b1) + b2`.
pub fn action_forward(model: &Model, global: &[f64], func: Func, arg: &[f64]) -> ActionForward {
    let d = model.dim;
    let wf = &model.block(PI_FUNC)[func.index() * d..(func.index() + 1) * d];
    let mut input = Vec::with_capacity(3 * d);
    input.extend_from_slice(global);
    input.extend_from_slice(wf);
    input.extend_from_slice(arg);
    let w1 = model.block(PI_W1);
    let b1 = model.block(PI_B1);
    let hidden: Vec<f64> = (0..4 * d)
        .map(|r| dot(&w1[r * 3 * d..(r + 1) * 3 * d], &input) + b1[r])
        .collect();
    let w2 = model.block(PI_W2);
    let score = hidden
        .iter()
        .zip(w2)
        .map(|(h, w)| h.max(0.0) * w)
        .sum::<f64>()
        + model.block(PI_B2)[0];
    ActionForward {
        score,
        input,
        hidden,
        func,
    }
}

/// Accumulate `dscore * ∂score/∂θ` into `grad`.
pub fn action_backward(model: &Model, fwd: &ActionForward, dscore: f64, grad: &mut Model) {
    let d = model.dim;
    let w2 = model.block(PI_W2);
    grad.block_mut(PI_B2)[0] += dscore;
    let dh: Vec<f64> = fwd
        .hidden
        .iter()
        .zip(w2)
        .map(|(h, w)| if *h > 0.0 { dscore * w } else { 0.0 })
        .collect();
    {
        let g = grad.block_mut(PI_W2);
        for (gi, h) in g.iter_mut().zip(&fwd.hidden) {
            *gi += dscore * h.max(0.0);
        }
    }
    {
        let g = grad.block_mut(PI_B1);
        for (gi, x) in g.iter_mut().zip(&dh) {
            *gi += x;
        }
    }
    let w1 = model.block(PI_W1);
    let mut dwf = vec![0.0; d];
    {
        let g = grad.block_mut(PI_W1);
        for (r, &dhr) in dh.iter().enumerate() {
            if dhr == 0.0 {
                continue;
            }
            let row = &mut g[r * 3 * d..(r + 1) * 3 * d];
            for (gi, x) in row.iter_mut().zip(&fwd.input) {
                *gi += dhr * x;
            }
            let wrow = &w1[r * 3 * d + d..r * 3 * d + 2 * d];
            for (o, w) in dwf.iter_mut().zip(wrow) {
                *o += dhr * w;
            }
        }
    }
    let g = grad.block_mut(PI_FUNC);
    let f = fwd.func.index();
    for (gi, x) in g[f * d..(f + 1) * d].iter_mut().zip(&dwf) {
        *gi += x;
    }
}

/// Policy cross-entropy over unmasked candidates. Returns the loss and
/// `∂L/∂score` (zero for masked entries).
pub fn policy_loss(scores: &[f64], masked: &[bool], label: usize) -> Result<(f64, Vec<f64>)> {
    if scores.len() != masked.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: masked.len(),
        });
    }
    if label >= scores.len() || masked[label] {
        return Err(Error::InvalidLabel(format!(
            "oracle action {label} is masked or missing"
        )));
    }
    let live: Vec<usize> = (0..scores.len()).filter(|&i| !masked[i]).collect();
    let sub: Vec<f64> = live.iter().map(|&i| scores[i]).collect();
    let pos = live
        .iter()
        .position(|&i| i == label)
        .expect("label is live");
    let (loss, g) = softmax_ce(&sub, pos)?;
    let mut grad = vec![0.0; scores.len()];
    for (k, &i) in live.iter().enumerate() {
        grad[i] = g[k];
    }
    Ok((loss, grad))
}
