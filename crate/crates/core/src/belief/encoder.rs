//! Belief encoders: map `⟨q, C_t⟩` to a global vector, one vector per
//! candidate, a pseudo-passage vector and per-token vectors for every
//! candidate text.
//!
//! The `feature` encoder is a fixed, non-learned featurizer. All learning
//! happens in the heads that read its output.

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use super::BeliefState;
use crate::corpus::{Corpus, Passage};
use crate::error::{Error, Result};
use crate::retrieval::{DenseIndex, Retriever};
use crate::text::{fnv1a, token_spans, tokenize, TokenSpan};

pub const ENCODER_TAG: &str = "feature";
pub const DEFAULT_DIM: usize = 64;
pub const MIN_DIM: usize = 48;

// Candidate features.
pub(crate) const C_BIAS: usize = 0;
pub(crate) const C_IS_OBS: usize = 1;
pub(crate) const C_POSITION: usize = 2;
pub(crate) const C_ADMITTED: usize = 3;
pub(crate) const C_UNI: usize = 4;
pub(crate) const C_IDF: usize = 5;
pub(crate) const C_BIGRAM: usize = 6;
pub(crate) const C_TITLE_MATCH: usize = 7;
pub(crate) const C_TITLE_FRAC: usize = 8;
pub(crate) const C_BRIDGE: usize = 9;
pub(crate) const C_ANCHORED: usize = 10;
pub(crate) const C_OUT_LINKS: usize = 11;
pub(crate) const C_DENSE_Q: usize = 12;
pub(crate) const C_DENSE_CTX: usize = 13;
pub(crate) const C_UNCOVERED: usize = 14;
pub(crate) const C_LEN: usize = 15;
pub(crate) const C_IS_NONE: usize = 16;
pub(crate) const C_CANON: usize = 17;
pub(crate) const CAND_FIXED: usize = 18;

// Question features.
const Q_BIAS: usize = 0;
const Q_COUNT: usize = 1;
const Q_EMPTY: usize = 2;
const Q_OOV: usize = 3;
const Q_MEAN_IDF: usize = 4;
const Q_YESNO: usize = 5;
const Q_MULTI: usize = 6;
const Q_TITLE_MATCHES: usize = 7;
const Q_LINKED_PAIR: usize = 8;
const Q_COVERAGE: usize = 9;
const Q_HAS_OBS: usize = 10;
const Q_PRIOR: usize = 11;
const Q_FEATURES: usize = 12;
const GLOBAL_FIXED: usize = 2 * CAND_FIXED + Q_FEATURES;

// Token features.
const T_BIAS: usize = 0;
const T_YES: usize = 1;
const T_NO: usize = 2;
const T_NONE: usize = 3;
const T_IN_Q: usize = 4;
const T_IDF: usize = 5;
const T_OOV: usize = 6;
const T_TITLE: usize = 7;
const T_OBS: usize = 8;
const T_IN_ANCHOR: usize = 9;
const T_ANCHOR_NEW: usize = 10;
const T_PREV_Q: usize = 11;
const T_NEXT_Q: usize = 12;
const T_NEAR_Q: usize = 13;
const T_COVERED: usize = 14;
const T_CAND: usize = 15;
const COPIED: [usize; 6] = [
    C_TITLE_MATCH,
    C_TITLE_FRAC,
    C_BRIDGE,
    C_ANCHORED,
    C_IDF,
    C_UNCOVERED,
];
const T_YN_BLOCK: usize = T_CAND + COPIED.len();
const SENTINEL_Q: [usize; 8] = [
    Q_BIAS,
    Q_EMPTY,
    Q_YESNO,
    Q_MULTI,
    Q_TITLE_MATCHES,
    Q_LINKED_PAIR,
    Q_COVERAGE,
    Q_COUNT,
];
const T_NONE_BLOCK: usize = T_YN_BLOCK + SENTINEL_Q.len();
const TOKEN_FIXED: usize = T_NONE_BLOCK + SENTINEL_Q.len();

const NEAR_WINDOW: usize = 3;
const YES_NO_CUES: [&str; 12] = [
    "is", "was", "are", "were", "do", "does", "did", "can", "has", "have", "could", "will",
];

/// Inputs beyond the belief state itself.
#[derive(Debug, Clone, Copy)]
pub struct EncodeContext<'a> {
    pub corpus: &'a Corpus,
    pub dense: &'a DenseIndex,
    pub capacity: usize,
    /// Whether questions in this setting need more than one passage.
    pub multi_hop: bool,
}

impl<'a> EncodeContext<'a> {
    pub fn new(retriever: &'a Retriever, capacity: usize, multi_hop: bool) -> Self {
        EncodeContext {
            corpus: &retriever.corpus,
            dense: &retriever.dense,
            capacity,
            multi_hop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sentinel {
    Yes,
    No,
    None,
}

impl Sentinel {
    pub const ALL: [Sentinel; 3] = [Sentinel::Yes, Sentinel::No, Sentinel::None];

    pub fn label(self) -> &'static str {
        match self {
            Sentinel::Yes => "YES",
            Sentinel::No => "NO",
            Sentinel::None => "NONE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Sentinel(Sentinel),
    /// Token of candidate `cand`; `start..end` are char offsets into the
    /// title or content.
    Passage {
        cand: usize,
        title: bool,
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedToken {
    pub role: TokenRole,
    pub term: String,
    pub vector: Vec<f64>,
}

/// A followable anchor in one of the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSlot {
    pub cand: usize,
    /// Index into the passage's anchor list.
    pub anchor: usize,
    /// Indices into [`BeliefEncoding::tokens`]; empty for zero-width anchors.
    pub tokens: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefEncoding {
    pub global: Vec<f64>,
    /// One vector per candidate, in [`BeliefState::candidates`] order.
    pub candidates: Vec<Vec<f64>>,
    pub none_slot: Vec<f64>,
    /// `[YES] [NO] [NONE]` first, then candidate tokens.
    pub tokens: Vec<EncodedToken>,
    pub anchors: Vec<AnchorSlot>,
}

impl BeliefEncoding {
    pub fn sentinel(&self, s: Sentinel) -> usize {
        match s {
            Sentinel::Yes => 0,
            Sentinel::No => 1,
            Sentinel::None => 2,
        }
    }

    /// Mean of token vectors over `range`, or `fallback` if it is empty.
    pub fn token_mean(&self, range: Range<usize>, fallback: &[f64]) -> Vec<f64> {
        if range.is_empty() {
            return fallback.to_vec();
        }
        let n = range.len() as f64;
        let mut out = vec![0.0; fallback.len()];
        for i in range {
            for (o, v) in out.iter_mut().zip(&self.tokens[i].vector) {
                *o += v / n;
            }
        }
        out
    }
}

pub trait BeliefEncoder: Send + Sync + std::fmt::Debug {
    fn tag(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn encode(&self, belief: &BeliefState, ctx: &EncodeContext) -> BeliefEncoding;
    /// Mean token vector of a free-text query read against the belief.
    fn encode_query(&self, query: &str, belief: &BeliefState, ctx: &EncodeContext) -> Vec<f64>;
}

pub fn encoder_for_tag(tag: &str, dim: usize) -> Result<Box<dyn BeliefEncoder>> {
    match tag {
        ENCODER_TAG => Ok(Box::new(FeatureEncoder::new(dim)?)),
        other => Err(Error::UnknownEncoder(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureEncoder {
    dim: usize,
}

impl FeatureEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::InvalidArgument(format!(
                "encoder dimension must be at least {MIN_DIM}, got {dim}"
            )));
        }
        Ok(FeatureEncoder { dim })
    }
}

impl Default for FeatureEncoder {
    fn default() -> Self {
        FeatureEncoder { dim: DEFAULT_DIM }
    }
}

struct QuestionInfo {
    terms: Vec<String>,
    set: HashSet<String>,
    idf: HashMap<String, f64>,
    idf_total: f64,
    bigrams: HashSet<(String, String)>,
    embedding: Vec<f64>,
    /// Distinct question terms after the dense embedder's rewriting.
    canonical: HashSet<String>,
    oov: f64,
    mean_idf: f64,
    yes_no: bool,
}

impl QuestionInfo {
    fn new(text: &str, ctx: &EncodeContext) -> Self {
        let tokens = tokenize(text);
        let max_idf = ctx.corpus.max_idf().max(f64::MIN_POSITIVE);
        let mut terms = Vec::new();
        let mut set = HashSet::new();
        for t in &tokens {
            if set.insert(t.clone()) {
                terms.push(t.clone());
            }
        }
        let idf: HashMap<String, f64> = terms
            .iter()
            .map(|t| (t.clone(), ctx.corpus.idf(t) / max_idf))
            .collect();
        let idf_total: f64 = terms.iter().map(|t| idf[t]).sum();
        let bigrams = tokens
            .windows(2)
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect();
        let n = terms.len().max(1) as f64;
        let oov = terms.iter().filter(|t| ctx.corpus.df(t) == 0).count() as f64 / n;
        QuestionInfo {
            embedding: ctx.dense.embed_query(text),
            canonical: ctx
                .dense
                .embedder()
                .canonical_terms(text)
                .into_iter()
                .collect(),
            oov,
            mean_idf: idf_total / n,
            yes_no: tokens
                .first()
                .is_some_and(|t| YES_NO_CUES.contains(&t.as_str())),
            terms,
            set,
            idf,
            idf_total,
            bigrams,
        }
    }

    fn weight(&self, t: &str) -> f64 {
        self.idf.get(t).copied().unwrap_or(0.0)
    }
}

struct CandText<'c> {
    passage: &'c Passage,
    title: Vec<TokenSpan>,
    content: Vec<TokenSpan>,
    terms: HashSet<&'c str>,
}

fn hash_into(out: &mut [f64], term: &str, weight: f64) {
    if out.is_empty() {
        return;
    }
    let h = fnv1a(term.as_bytes());
    let bucket = (h % out.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    out[bucket] += sign * weight;
}

fn normalize(v: &mut [f64], norm: f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / n);
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn contains_seq(hay: &[TokenSpan], needle: &[TokenSpan]) -> bool {
    !needle.is_empty()
        && hay.len() >= needle.len()
        && hay
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(a, b)| a.term == b.term))
}

impl FeatureEncoder {
    fn question_features(
        &self,
        belief: &BeliefState,
        ctx: &EncodeContext,
        q: &QuestionInfo,
        cand_feats: &[Vec<f64>],
        texts: &[CandText],
    ) -> Vec<f64> {
        let mut f = vec![0.0; Q_FEATURES];
        let cap = ctx.capacity.max(1) as f64;
        f[Q_BIAS] = 1.0;
        f[Q_COUNT] = belief.len() as f64 / cap;
        f[Q_EMPTY] = belief.is_empty() as u8 as f64;
        f[Q_OOV] = q.oov;
        f[Q_MEAN_IDF] = q.mean_idf;
        f[Q_YESNO] = q.yes_no as u8 as f64;
        f[Q_MULTI] = ctx.multi_hop as u8 as f64;
        let matches = cand_feats.iter().filter(|c| c[C_TITLE_MATCH] > 0.0).count();
        f[Q_TITLE_MATCHES] = (matches as f64 / 2.0).min(1.0);
        f[Q_LINKED_PAIR] = cand_feats
            .iter()
            .any(|c| c[C_BRIDGE] > 0.0 || c[C_ANCHORED] > 0.0) as u8
            as f64;
        if q.idf_total > 0.0 {
            let covered: f64 = q
                .terms
                .iter()
                .filter(|t| texts.iter().any(|c| c.terms.contains(t.as_str())))
                .map(|t| q.weight(t))
                .sum();
            f[Q_COVERAGE] = covered / q.idf_total;
        }
        f[Q_HAS_OBS] = belief.observation().is_some() as u8 as f64;
        f[Q_PRIOR] = belief
            .candidates
            .iter()
            .filter(|c| !c.is_observation)
            .count() as f64
            / cap;
        f
    }

    fn candidate_features(
        &self,
        belief: &BeliefState,
        ctx: &EncodeContext,
        q: &QuestionInfo,
        texts: &[CandText],
    ) -> Vec<Vec<f64>> {
        let n = texts.len();
        let cap = ctx.capacity.max(1) as f64;
        let order = belief.input_order();
        let vectors: Vec<&[f64]> = texts
            .iter()
            .map(|c| {
                let idx = ctx
                    .corpus
                    .index_of(&c.passage.id)
                    .expect("candidate in corpus");
                ctx.dense.vector(idx)
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for (i, c) in texts.iter().enumerate() {
            let mut f = vec![0.0; self.dim];
            let cand = &belief.candidates[i];
            f[C_BIAS] = 1.0;
            f[C_IS_OBS] = cand.is_observation as u8 as f64;
            f[C_POSITION] = order.iter().position(|&o| o == i).unwrap_or(0) as f64 / cap;
            f[C_ADMITTED] = (!cand.is_observation) as u8 as f64;
            let nq = q.terms.len().max(1) as f64;
            let shared: Vec<&String> = q
                .terms
                .iter()
                .filter(|t| c.terms.contains(t.as_str()))
                .collect();
            f[C_UNI] = shared.len() as f64 / nq;
            if q.idf_total > 0.0 {
                f[C_IDF] = shared.iter().map(|t| q.weight(t)).sum::<f64>() / q.idf_total;
                let uncovered: f64 = shared
                    .iter()
                    .filter(|t| {
                        texts
                            .iter()
                            .enumerate()
                            .all(|(j, o)| j == i || !o.terms.contains(t.as_str()))
                    })
                    .map(|t| q.weight(t))
                    .sum();
                f[C_UNCOVERED] = uncovered / q.idf_total;
            }
            if !q.bigrams.is_empty() {
                let tokens = &c.passage.tokens;
                let hits: HashSet<(&str, &str)> = tokens
                    .windows(2)
                    .map(|w| (w[0].as_str(), w[1].as_str()))
                    .filter(|(a, b)| q.bigrams.contains(&(a.to_string(), b.to_string())))
                    .collect();
                f[C_BIGRAM] = hits.len() as f64 / q.bigrams.len() as f64;
            }
            if !c.title.is_empty() {
                let in_q = c.title.iter().filter(|t| q.set.contains(&t.term)).count();
                f[C_TITLE_MATCH] = (in_q == c.title.len()) as u8 as f64;
                f[C_TITLE_FRAC] = in_q as f64 / c.title.len() as f64;
            }
            f[C_BRIDGE] = texts
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && contains_seq(&o.content, &c.title))
                as u8 as f64;
            f[C_ANCHORED] = texts.iter().enumerate().any(|(j, o)| {
                j != i
                    && o.passage
                        .anchors
                        .iter()
                        .any(|a| !a.synthetic && a.target == c.passage.id)
            }) as u8 as f64;
            let links = c.passage.anchors.iter().filter(|a| !a.synthetic).count();
            f[C_OUT_LINKS] = (links as f64 / 4.0).min(1.0);
            f[C_DENSE_Q] = cosine(&q.embedding, vectors[i]);
            f[C_DENSE_CTX] = (0..n)
                .filter(|&j| j != i)
                .map(|j| cosine(vectors[i], vectors[j]))
                .fold(0.0, f64::max);
            if !q.canonical.is_empty() {
                let lex = ctx.dense.embedder();
                let cand: HashSet<String> = c
                    .terms
                    .iter()
                    .flat_map(|t| lex.canonical_terms(t))
                    .collect();
                f[C_CANON] = q.canonical.iter().filter(|t| cand.contains(*t)).count() as f64
                    / q.canonical.len() as f64;
            }
            f[C_LEN] = (c.passage.tokens.len() as f64 / 100.0).min(1.0);
            let hashed = &mut f[CAND_FIXED..];
            for t in &c.terms {
                hash_into(hashed, t, 1.0);
            }
            normalize(hashed, 0.5);
            out.push(f);
        }
        out
    }

    fn sentinel_vector(&self, s: Sentinel, qf: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[T_BIAS] = 1.0;
        let block = match s {
            Sentinel::Yes => {
                v[T_YES] = 1.0;
                T_YN_BLOCK
            }
            Sentinel::No => {
                v[T_NO] = 1.0;
                T_YN_BLOCK
            }
            Sentinel::None => {
                v[T_NONE] = 1.0;
                T_NONE_BLOCK
            }
        };
        for (k, &qi) in SENTINEL_Q.iter().enumerate() {
            v[block + k] = qf[qi];
        }
        v
    }

    fn hashed_identity(&self, v: &mut [f64], term: &str, prev: Option<&str>) {
        let tail = &mut v[TOKEN_FIXED..];
        let split = tail.len().div_ceil(2);
        let (ident, prev_part) = tail.split_at_mut(split);
        hash_into(ident, term, 1.0);
        if let Some(p) = prev {
            hash_into(prev_part, p, 0.5);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn token_vectors(
        &self,
        belief: &BeliefState,
        ctx: &EncodeContext,
        q: &QuestionInfo,
        texts: &[CandText],
        cand_feats: &[Vec<f64>],
        tokens: &mut Vec<EncodedToken>,
        anchors: &mut Vec<AnchorSlot>,
    ) {
        let in_c: HashSet<&str> = texts.iter().map(|c| c.passage.id.as_str()).collect();
        let _ = ctx;
        for (i, c) in texts.iter().enumerate() {
            let is_obs = belief.candidates[i].is_observation;
            let others: Vec<&CandText> = texts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| o)
                .collect();
            let content_start = tokens.len() + c.title.len();
            for (field_title, spans) in [(true, &c.title), (false, &c.content)] {
                for (k, span) in spans.iter().enumerate() {
                    let mut v = vec![0.0; self.dim];
                    v[T_BIAS] = 1.0;
                    let term = span.term.as_str();
                    v[T_IN_Q] = q.set.contains(term) as u8 as f64;
                    v[T_IDF] = ctx.corpus.idf(term) / ctx.corpus.max_idf().max(f64::MIN_POSITIVE);
                    v[T_OOV] = (ctx.corpus.df(term) == 0) as u8 as f64;
                    v[T_TITLE] = field_title as u8 as f64;
                    v[T_OBS] = is_obs as u8 as f64;
                    if !field_title {
                        for a in c.passage.anchors.iter().filter(|a| !a.synthetic) {
                            if span.start < a.span.1 && span.end > a.span.0 {
                                v[T_IN_ANCHOR] = 1.0;
                                if !in_c.contains(a.target.as_str()) {
                                    v[T_ANCHOR_NEW] = 1.0;
                                }
                            }
                        }
                    }
                    if k > 0 {
                        v[T_PREV_Q] = q.weight(&spans[k - 1].term);
                    }
                    if k + 1 < spans.len() {
                        v[T_NEXT_Q] = q.weight(&spans[k + 1].term);
                    }
                    let lo = k.saturating_sub(NEAR_WINDOW);
                    let hi = (k + NEAR_WINDOW + 1).min(spans.len());
                    v[T_NEAR_Q] = (lo..hi)
                        .filter(|&j| j != k)
                        .map(|j| q.weight(&spans[j].term))
                        .fold(0.0, f64::max);
                    v[T_COVERED] = others.iter().any(|o| o.terms.contains(term)) as u8 as f64;
                    for (m, &ci) in COPIED.iter().enumerate() {
                        v[T_CAND + m] = cand_feats[i][ci];
                    }
                    let prev = (k > 0).then(|| spans[k - 1].term.as_str());
                    self.hashed_identity(&mut v, term, prev);
                    tokens.push(EncodedToken {
                        role: TokenRole::Passage {
                            cand: i,
                            title: field_title,
                            start: span.start,
                            end: span.end,
                        },
                        term: span.term.clone(),
                        vector: v,
                    });
                }
            }
            for (ai, a) in c.passage.anchors.iter().enumerate() {
                if a.target == c.passage.id {
                    continue;
                }
                let first = c
                    .content
                    .iter()
                    .position(|s| s.start < a.span.1 && s.end > a.span.0);
                let range = match first {
                    Some(f) if !a.synthetic => {
                        let len = c.content[f..]
                            .iter()
                            .take_while(|s| s.start < a.span.1 && s.end > a.span.0)
                            .count();
                        content_start + f..content_start + f + len
                    }
                    _ => content_start..content_start,
                };
                anchors.push(AnchorSlot {
                    cand: i,
                    anchor: ai,
                    tokens: range,
                });
            }
        }
    }
}

impl BeliefEncoder for FeatureEncoder {
    fn tag(&self) -> &'static str {
        ENCODER_TAG
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, belief: &BeliefState, ctx: &EncodeContext) -> BeliefEncoding {
        let q = QuestionInfo::new(&belief.question.text, ctx);
        let texts: Vec<CandText> = belief
            .candidates
            .iter()
            .map(|c| {
                let passage = ctx.corpus.passage(c.passage);
                CandText {
                    passage,
                    title: token_spans(&passage.title),
                    content: token_spans(&passage.content),
                    terms: passage.tokens.iter().map(String::as_str).collect(),
                }
            })
            .collect();
        let cand_feats = self.candidate_features(belief, ctx, &q, &texts);
        let qf = self.question_features(belief, ctx, &q, &cand_feats, &texts);

        let mut global = vec![0.0; self.dim];
        if !cand_feats.is_empty() {
            let n = cand_feats.len() as f64;
            for k in 0..CAND_FIXED {
                global[k] = cand_feats.iter().map(|c| c[k]).sum::<f64>() / n;
                global[CAND_FIXED + k] = cand_feats.iter().map(|c| c[k]).fold(f64::MIN, f64::max);
            }
        }
        global[2 * CAND_FIXED..GLOBAL_FIXED].copy_from_slice(&qf);
        let hashed = &mut global[GLOBAL_FIXED..];
        for t in &q.terms {
            hash_into(hashed, t, 1.0);
        }
        normalize(hashed, 0.5);

        let mut none_slot = vec![0.0; self.dim];
        none_slot[C_BIAS] = 1.0;
        none_slot[C_IS_NONE] = 1.0;

        let mut tokens: Vec<EncodedToken> = Sentinel::ALL
            .iter()
            .map(|&s| EncodedToken {
                role: TokenRole::Sentinel(s),
                term: s.label().to_string(),
                vector: self.sentinel_vector(s, &qf),
            })
            .collect();
        let mut anchors = Vec::new();
        self.token_vectors(
            belief,
            ctx,
            &q,
            &texts,
            &cand_feats,
            &mut tokens,
            &mut anchors,
        );

        BeliefEncoding {
            global,
            candidates: cand_feats,
            none_slot,
            tokens,
            anchors,
        }
    }

    fn encode_query(&self, query: &str, belief: &BeliefState, ctx: &EncodeContext) -> Vec<f64> {
        let q = QuestionInfo::new(&belief.question.text, ctx);
        let tokens = tokenize(query);
        let mut mean = vec![0.0; self.dim];
        if tokens.is_empty() {
            mean[T_BIAS] = 1.0;
            return mean;
        }
        let in_belief: HashSet<&str> = belief
            .candidates
            .iter()
            .flat_map(|c| {
                ctx.corpus
                    .passage(c.passage)
                    .tokens
                    .iter()
                    .map(String::as_str)
            })
            .collect();
        let n = tokens.len() as f64;
        for (k, term) in tokens.iter().enumerate() {
            let mut v = vec![0.0; self.dim];
            v[T_BIAS] = 1.0;
            v[T_IN_Q] = q.set.contains(term) as u8 as f64;
            v[T_IDF] = ctx.corpus.idf(term) / ctx.corpus.max_idf().max(f64::MIN_POSITIVE);
            v[T_OOV] = (ctx.corpus.df(term) == 0) as u8 as f64;
            v[T_COVERED] = in_belief.contains(term.as_str()) as u8 as f64;
            let prev = (k > 0).then(|| tokens[k - 1].as_str());
            self.hashed_identity(&mut v, term, prev);
            for (m, x) in mean.iter_mut().zip(&v) {
                *m += x / n;
            }
        }
        mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{form_belief, update_evidence, EvidenceSet};
    use crate::corpus::{parse_corpus, Answer, Question, Split};
    use crate::env::Observation;
    use crate::retrieval::RetrievalConfig;
    use std::sync::Arc;

    fn setup() -> (Retriever, Question) {
        let src = r#"{"id":"A","title":"Alpha Town","text":"Alpha Town is home of the Beta Works.","anchors":[{"span":[26,36],"target":"B"}]}
{"id":"B","title":"Beta Works","text":"Beta Works was founded in 1901."}
{"id":"C","title":"Gamma","text":"Gamma is unrelated."}
"#;
        let (corpus, _) = parse_corpus(src.as_bytes()).unwrap();
        let r = Retriever::new(Arc::new(corpus), &RetrievalConfig::default()).unwrap();
        let q = Question {
            id: "q".into(),
            text: "When was the works in Alpha Town founded?".into(),
            gold_evidence: vec!["A".into(), "B".into()],
            gold_answer: Answer::Text("1901".into()),
            split: Split::Dev,
        };
        (r, q)
    }

    #[test]
    fn rejects_small_dimension() {
        assert!(FeatureEncoder::new(MIN_DIM - 1).is_err());
        assert!(encoder_for_tag("bert", 64).is_err());
        assert_eq!(encoder_for_tag(ENCODER_TAG, 64).unwrap().dim(), 64);
    }

    #[test]
    fn shapes_and_sentinels() {
        let (r, q) = setup();
        let ctx = EncodeContext::new(&r, 3, true);
        let enc = FeatureEncoder::default();
        let e = update_evidence(&[0], &[1.0], 0.0).unwrap();
        let b = form_belief(&e, Observation::Passage(1), &q, 3);
        let out = enc.encode(&b, &ctx);
        assert_eq!(out.global.len(), DEFAULT_DIM);
        assert_eq!(out.candidates.len(), 2);
        assert!(out.tokens.iter().all(|t| t.vector.len() == DEFAULT_DIM));
        assert_eq!(out.tokens[out.sentinel(Sentinel::None)].term, "NONE");
        // title-match passage A, bridged B
        assert_eq!(out.candidates[0][C_TITLE_MATCH], 1.0);
        assert_eq!(out.candidates[1][C_ANCHORED], 1.0);
        assert_eq!(out.candidates[1][C_BRIDGE], 1.0);
        assert_eq!(out.candidates[1][C_IS_OBS], 1.0);
        assert_eq!(out.anchors.len(), 1);
        let slot = &out.anchors[0];
        let terms: Vec<&str> = slot
            .tokens
            .clone()
            .map(|i| out.tokens[i].term.as_str())
            .collect();
        assert_eq!(terms, vec!["beta", "works"]);
        // anchor target already in C
        assert_eq!(out.tokens[slot.tokens.start].vector[T_ANCHOR_NEW], 0.0);
    }

    #[test]
    fn empty_belief() {
        let (r, q) = setup();
        let ctx = EncodeContext::new(&r, 3, false);
        let enc = FeatureEncoder::default();
        let b = form_belief(&EvidenceSet::default(), Observation::Question, &q, 3);
        let out = enc.encode(&b, &ctx);
        assert!(out.candidates.is_empty());
        assert_eq!(out.tokens.len(), 3);
        assert_eq!(out.global[2 * CAND_FIXED + Q_EMPTY], 1.0);
        let v = enc.encode_query("", &b, &ctx);
        assert_eq!(v[T_BIAS], 1.0);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn deterministic() {
        let (r, q) = setup();
        let ctx = EncodeContext::new(&r, 3, true);
        let enc = FeatureEncoder::default();
        let b = form_belief(&EvidenceSet::default(), Observation::Passage(0), &q, 3);
        assert_eq!(enc.encode(&b, &ctx), enc.encode(&b, &ctx));
    }
}
