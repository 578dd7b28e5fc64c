//! Action-space narrowing and action selection.
//!
//! Each step the argument generators propose exactly one argument per
//! function (`g_s`, `g_d`, `g_l`, `g_o`); the action scorer then picks the
//! best unmasked candidate.

pub mod heads;

use std::collections::HashSet;

pub use heads::{
    action_backward, action_forward, answer_loss, extract_answer, link_inputs, link_logits,
    link_loss, policy_loss, softmax_ce, span_logits, ActionForward, SpanKind, SpanPrediction,
    MAX_SPAN,
};

use crate::belief::{
    BeliefEncoder, BeliefEncoding, BeliefState, EncodeContext, EvidenceSet, Sentinel, TokenRole,
};
use crate::corpus::{Corpus, Question};
use crate::env::{Action, EnvState, Func};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::retrieval::AnchorRef;
use crate::text::{char_slice, tokenize};

/// `g_s`: the question itself, or for multi-hop questions with evidence,
/// the question terms not yet covered by evidence plus the highest-idf
/// bigram of the top evidence passage that shares no term with the
/// question or that passage's title.
pub fn gen_sparse_query(
    question: &Question,
    evidence: &EvidenceSet,
    corpus: &Corpus,
    multi_hop: bool,
) -> String {
    let Some(top) = evidence.top().filter(|_| multi_hop) else {
        return question.text.clone();
    };
    let q_tokens = tokenize(&question.text);
    let q_set: HashSet<&str> = q_tokens.iter().map(String::as_str).collect();
    let covered: HashSet<&str> = evidence
        .members
        .iter()
        .flat_map(|m| corpus.passage(m.passage).tokens.iter().map(String::as_str))
        .collect();
    let mut terms: Vec<String> = Vec::new();
    for t in &q_tokens {
        if !covered.contains(t.as_str()) && !terms.contains(t) {
            terms.push(t.clone());
        }
    }
    let p = corpus.passage(top.passage);
    let title: HashSet<&str> = p.title_tokens().iter().map(String::as_str).collect();
    let mut best: Option<(f64, &[String])> = None;
    for w in p.content_tokens().windows(2) {
        if w.iter()
            .any(|t| q_set.contains(t.as_str()) || title.contains(t.as_str()))
        {
            continue;
        }
        let score = corpus.idf(&w[0]) + corpus.idf(&w[1]);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, w));
        }
    }
    if let Some((_, w)) = best {
        terms.extend(w.iter().cloned());
    }
    if terms.is_empty() {
        return question.text.clone();
    }
    terms.join(" ")
}

/// `g_d`: the question, concatenated with the top evidence passage for
/// multi-hop questions. Also returns that passage.
pub fn gen_dense_query(
    question: &Question,
    evidence: &EvidenceSet,
    corpus: &Corpus,
    multi_hop: bool,
) -> (String, Option<usize>) {
    match evidence.top().filter(|_| multi_hop) {
        None => (question.text.clone(), None),
        Some(top) => {
            let p = corpus.passage(top.passage);
            (
                format!("{} {} {}", question.text, p.title, p.content),
                Some(top.passage),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkChoice {
    /// Index into [`BeliefEncoding::anchors`].
    pub slot: usize,
    pub anchor: AnchorRef,
}

pub fn anchor_ref(
    belief: &BeliefState,
    enc: &BeliefEncoding,
    corpus: &Corpus,
    slot: usize,
) -> AnchorRef {
    let s = &enc.anchors[slot];
    let p = corpus.passage(belief.candidates[s.cand].passage);
    AnchorRef::new(&p.id, &p.anchors[s.anchor])
}

/// `g_l`: the best-scoring anchor in `C_t`, or `None` when the NONE
/// sentinel scores at least as high.
pub fn gen_link_query(
    model: &Model,
    belief: &BeliefState,
    enc: &BeliefEncoding,
    corpus: &Corpus,
) -> Option<LinkChoice> {
    let logits = link_logits(model, &link_inputs(enc));
    let none = *logits.last().expect("NONE is always present");
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in logits[..logits.len() - 1].iter().enumerate() {
        if s > best.map_or(none, |b| b.1) {
            best = Some((i, s));
        }
    }
    best.map(|(slot, _)| LinkChoice {
        slot,
        anchor: anchor_ref(belief, enc, corpus, slot),
    })
}

/// Answer string for a span prediction. NONE maps to the empty string.
pub fn answer_text(
    pred: &SpanPrediction,
    belief: &BeliefState,
    enc: &BeliefEncoding,
    corpus: &Corpus,
) -> String {
    match pred.kind {
        SpanKind::Sentinel(Sentinel::Yes) => "yes".into(),
        SpanKind::Sentinel(Sentinel::No) => "no".into(),
        SpanKind::Sentinel(Sentinel::None) => String::new(),
        SpanKind::Text { start, end } => {
            let (
                TokenRole::Passage {
                    cand,
                    title,
                    start: s,
                    ..
                },
                TokenRole::Passage { end: e, .. },
            ) = (enc.tokens[start].role, enc.tokens[end].role)
            else {
                unreachable!("text spans cover passage tokens")
            };
            let p = corpus.passage(belief.candidates[cand].passage);
            let field = if title { &p.title } else { &p.content };
            char_slice(field, s, e).to_string()
        }
    }
}

/// One argument per function, before masking.
#[derive(Debug, Clone, PartialEq)]
pub struct Arguments {
    pub sparse: String,
    pub dense: String,
    /// Passage concatenated into the dense query.
    pub dense_passage: Option<usize>,
    pub link: Option<LinkChoice>,
    pub answer: SpanPrediction,
    pub answer_text: String,
}

/// Run all four generators with the learned heads.
pub fn generate_arguments(
    model: &Model,
    belief: &BeliefState,
    evidence: &EvidenceSet,
    enc: &BeliefEncoding,
    ctx: &EncodeContext,
) -> Arguments {
    let (dense, dense_passage) =
        gen_dense_query(belief.question, evidence, ctx.corpus, ctx.multi_hop);
    let answer = extract_answer(model, enc);
    Arguments {
        sparse: gen_sparse_query(belief.question, evidence, ctx.corpus, ctx.multi_hop),
        dense,
        dense_passage,
        link: gen_link_query(model, belief, enc, ctx.corpus),
        answer_text: answer_text(&answer, belief, enc, ctx.corpus),
        answer,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionCandidate {
    pub action: Action,
    pub masked: bool,
    /// `v_u`, the argument representation fed to the action scorer.
    pub arg_vector: Vec<f64>,
}

/// Exactly four candidates in [`Func::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct NarrowedActions {
    pub candidates: Vec<ActionCandidate>,
}

impl NarrowedActions {
    pub fn get(&self, f: Func) -> &ActionCandidate {
        &self.candidates[f.index()]
    }

    pub fn masks(&self) -> Vec<bool> {
        self.candidates.iter().map(|c| c.masked).collect()
    }

    pub fn unmasked(&self) -> impl Iterator<Item = &ActionCandidate> {
        self.candidates.iter().filter(|c| !c.masked)
    }
}

/// Build `Ǎ` and mask invalid candidates: LINK when `g_l` is NONE,
/// retrieval keys that would only return EXHAUSTED, and functions outside
/// `allowed` (indexed by [`Func::index`]). ANSWER is never masked.
#[allow(clippy::too_many_arguments)]
pub fn narrow_actions(
    args: &Arguments,
    belief: &BeliefState,
    enc: &BeliefEncoding,
    encoder: &dyn BeliefEncoder,
    ctx: &EncodeContext,
    state: Option<&EnvState>,
    allowed: [bool; 4],
) -> NarrowedActions {
    let exhausted = |a: &Action| state.is_some_and(|s| s.is_exhausted(a));
    let sparse = Action::new(Func::Sparse, args.sparse.clone());
    let dense = Action::new(Func::Dense, args.dense.clone());
    let dense_vec = match args.dense_passage {
        None => enc.none_slot.clone(),
        Some(p) => {
            let i = belief
                .candidates
                .iter()
                .position(|c| c.passage == p)
                .expect("evidence is drawn from the candidates");
            enc.candidates[i].clone()
        }
    };
    let inputs = link_inputs(enc);
    let (link, link_vec) = match &args.link {
        Some(l) => (
            Action::new(Func::Link, l.anchor.to_string()),
            inputs[l.slot].clone(),
        ),
        None => (
            Action::new(Func::Link, ""),
            inputs.last().cloned().unwrap_or_default(),
        ),
    };
    let (s, e) = args.answer.token_range(enc);
    let answer_vec = enc.token_mean(s..e + 1, &enc.tokens[enc.sentinel(Sentinel::None)].vector);

    let candidates = vec![
        ActionCandidate {
            masked: !allowed[0] || exhausted(&sparse),
            arg_vector: encoder.encode_query(&sparse.arg, belief, ctx),
            action: sparse,
        },
        ActionCandidate {
            masked: !allowed[1] || exhausted(&dense),
            action: dense,
            arg_vector: dense_vec,
        },
        ActionCandidate {
            masked: !allowed[2] || args.link.is_none() || exhausted(&link),
            action: link,
            arg_vector: link_vec,
        },
        ActionCandidate {
            masked: false,
            action: Action::new(Func::Answer, args.answer_text.clone()),
            arg_vector: answer_vec,
        },
    ];
    NarrowedActions { candidates }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub scores: Vec<f64>,
    pub forwards: Vec<ActionForward>,
}

/// Index of the highest score among unmasked entries; ties go to
/// ANSWER > LINK > SPARSE > DENSE.
pub fn argmax_unmasked(scores: &[f64], masked: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for i in 0..scores.len() {
        if masked[i] {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = scores[i] > scores[b]
                    || (scores[i] == scores[b]
                        && Func::ALL[i].priority() > Func::ALL[b].priority());
                Some(if better { i } else { b })
            }
        };
    }
    best.ok_or(Error::AllMasked)
}

/// `a_t = argmax_{a ∈ Ǎ} π(a | b_t)`.
pub fn select_action(
    actions: &NarrowedActions,
    enc: &BeliefEncoding,
    model: &Model,
) -> Result<Selection> {
    let forwards: Vec<ActionForward> = actions
        .candidates
        .iter()
        .map(|c| action_forward(model, &enc.global, c.action.func, &c.arg_vector))
        .collect();
    let scores: Vec<f64> = forwards.iter().map(|f| f.score).collect();
    let index = argmax_unmasked(&scores, &actions.masks())?;
    Ok(Selection {
        index,
        scores,
        forwards,
    })
}
