//! Belief state `⟨q, C_t⟩` and the evidence set maintained by the
//! dynamic-threshold rule: a candidate stays in the evidence set only if it
//! scores strictly above the pseudo passage.

mod encoder;

use serde::{Deserialize, Serialize};

pub use encoder::{
    encoder_for_tag, AnchorSlot, BeliefEncoder, BeliefEncoding, EncodeContext, EncodedToken,
    FeatureEncoder, Sentinel, TokenRole, DEFAULT_DIM, ENCODER_TAG, MIN_DIM,
};

use crate::corpus::{Corpus, Question};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::model::{Model, PHI_B, PHI_W};
use crate::retrieval::dot;

/// Candidate passages fed to the encoders at once.
pub const DEFAULT_CAPACITY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub passage: usize,
    /// Score from the previous step (0 for a fresh observation).
    pub prior: f64,
    pub is_observation: bool,
}

/// `⟨q, C_t⟩`. Candidates hold the previous evidence in descending prior
/// score followed by the fresh observation, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState<'q> {
    pub question: &'q Question,
    pub candidates: Vec<Candidate>,
    /// Passage pushed out because the candidate set exceeded capacity.
    pub evicted: Option<usize>,
}

impl<'q> BeliefState<'q> {
    pub fn initial(question: &'q Question) -> Self {
        BeliefState {
            question,
            candidates: Vec::new(),
            evicted: None,
        }
    }

    /// Build directly from a candidate list whose first element is the
    /// observation and the rest earlier evidence.
    pub fn from_sample(question: &'q Question, candidates: &[usize]) -> Self {
        let mut out: Vec<Candidate> = candidates
            .iter()
            .skip(1)
            .map(|&p| Candidate {
                passage: p,
                prior: 0.0,
                is_observation: false,
            })
            .collect();
        if let Some(&obs) = candidates.first() {
            out.push(Candidate {
                passage: obs,
                prior: 0.0,
                is_observation: true,
            });
        }
        BeliefState {
            question,
            candidates: out,
            evicted: None,
        }
    }

    pub fn passages(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.passage).collect()
    }

    pub fn contains(&self, passage: usize) -> bool {
        self.candidates.iter().any(|c| c.passage == passage)
    }

    pub fn observation(&self) -> Option<usize> {
        self.candidates.iter().position(|c| c.is_observation)
    }

    /// Candidate indices in encoder input order: observation first, then
    /// evidence.
    pub fn input_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = self.observation().into_iter().collect();
        order.extend((0..self.candidates.len()).filter(|&i| !self.candidates[i].is_observation));
        order
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: usize,
    pub score: f64,
}

/// Admitted passages, sorted by descending score (ties by passage index),
/// plus the threshold they had to beat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvidenceSet {
    pub members: Vec<ScoredPassage>,
    pub threshold: f64,
}

impl EvidenceSet {
    pub fn contains(&self, passage: usize) -> bool {
        self.members.iter().any(|m| m.passage == passage)
    }

    pub fn passages(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.passage).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn top(&self) -> Option<&ScoredPassage> {
        self.members.first()
    }
}

/// `C_t = E_{t-1} ∪ {o_t}`, evicting the lowest-scored evidence passage when
/// the set would exceed `capacity`.
pub fn form_belief<'q>(
    prev: &EvidenceSet,
    observation: Observation,
    question: &'q Question,
    capacity: usize,
) -> BeliefState<'q> {
    let mut candidates: Vec<Candidate> = prev
        .members
        .iter()
        .map(|m| Candidate {
            passage: m.passage,
            prior: m.score,
            is_observation: false,
        })
        .collect();
    if let Observation::Passage(p) = observation {
        if !prev.contains(p) {
            candidates.push(Candidate {
                passage: p,
                prior: 0.0,
                is_observation: true,
            });
        }
    }
    let mut evicted = None;
    if candidates.len() > capacity.max(1) {
        let victim = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_observation)
            .min_by(|(ia, a), (ib, b)| {
                a.prior
                    .partial_cmp(&b.prior)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // later (lower-ranked) passage loses ties
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i);
        if let Some(i) = victim {
            let c = candidates.remove(i);
            log::debug!("belief for {}: evicted passage {}", question.id, c.passage);
            evicted = Some(c.passage);
        }
    }
    BeliefState {
        question,
        candidates,
        evicted,
    }
}

/// `E_t = { p : φ(p) > φ(p₀) }`.
pub fn update_evidence(passages: &[usize], scores: &[f64], threshold: f64) -> Result<EvidenceSet> {
    if passages.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: passages.len(),
            got: scores.len(),
        });
    }
    let mut members: Vec<ScoredPassage> = passages
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s > threshold)
        .map(|(&passage, &score)| ScoredPassage { passage, score })
        .collect();
    members.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.passage.cmp(&b.passage))
    });
    Ok(EvidenceSet { members, threshold })
}

/// Linear evidence scorer `φ(p) = w · [v_p; v_global] + b`, applied to
/// every candidate and to the pseudo passage.
#[derive(Debug, Clone, Copy)]
pub struct EvidenceScorer<'m> {
    pub w: &'m [f64],
    pub b: f64,
}

impl<'m> EvidenceScorer<'m> {
    pub fn from_model(model: &'m Model) -> Self {
        EvidenceScorer {
            w: model.block(PHI_W),
            b: model.block(PHI_B)[0],
        }
    }

    fn score(&self, x: &[f64], global: &[f64]) -> f64 {
        let d = global.len();
        dot(&self.w[..d], x) + dot(&self.w[d..], global) + self.b
    }
}

/// Candidate scores (in [`BeliefState::candidates`] order) and the pseudo
/// passage score `φ(p₀)`.
pub fn score_candidates(enc: &BeliefEncoding, scorer: &EvidenceScorer) -> Result<(Vec<f64>, f64)> {
    let d = enc.global.len();
    if scorer.w.len() != 2 * d {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            got: scorer.w.len(),
        });
    }
    let scores = enc
        .candidates
        .iter()
        .map(|x| scorer.score(x, &enc.global))
        .collect();
    Ok((scores, scorer.score(&enc.none_slot, &enc.global)))
}

/// Canonical encoder input string.
pub fn serialize_belief(b: &BeliefState, corpus: &Corpus) -> String {
    let mut s = format!("[CLS] [YES] [NO] [NONE] {} [SEP]", b.question.text);
    for i in b.input_order() {
        let p = corpus.passage(b.candidates[i].passage);
        s.push_str(&format!(" {} [SOP] {} [SEP]", p.title, p.content));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::BeliefEncoding;
    use super::*;
    use crate::corpus::{Answer, Split};

    fn question() -> Question {
        Question {
            id: "q".into(),
            text: "Who?".into(),
            gold_evidence: vec![],
            gold_answer: Answer::Text("x".into()),
            split: Split::Train,
        }
    }

    fn evidence(items: &[(usize, f64)]) -> EvidenceSet {
        let passages: Vec<usize> = items.iter().map(|x| x.0).collect();
        let scores: Vec<f64> = items.iter().map(|x| x.1).collect();
        update_evidence(&passages, &scores, f64::NEG_INFINITY).unwrap()
    }

    #[test]
    fn initial_belief_from_question() {
        let q = question();
        let b = form_belief(&EvidenceSet::default(), Observation::Question, &q, 3);
        assert!(b.is_empty());
        assert_eq!(b, BeliefState::initial(&q));
    }

    #[test]
    fn reobserved_passage_keeps_slot() {
        let q = question();
        let e = evidence(&[(1, 0.9)]);
        let b = form_belief(&e, Observation::Passage(1), &q, 3);
        assert_eq!(b.passages(), vec![1]);
        assert!(b.observation().is_none());
    }

    #[test]
    fn evidence_then_observation_order() {
        let q = question();
        let e = evidence(&[(2, 0.4), (1, 0.8)]);
        let b = form_belief(&e, Observation::Passage(3), &q, 3);
        assert_eq!(b.passages(), vec![1, 2, 3]);
        assert_eq!(b.input_order(), vec![2, 0, 1]);
        assert!(b.evicted.is_none());
    }

    #[test]
    fn eviction_removes_lowest_prior() {
        let q = question();
        let e = evidence(&[(1, 0.8), (2, 0.1), (3, 0.5)]);
        let b = form_belief(&e, Observation::Passage(4), &q, 3);
        assert_eq!(b.passages(), vec![1, 3, 4]);
        assert_eq!(b.evicted, Some(2));
    }

    #[test]
    fn threshold_is_strict() {
        let e = update_evidence(&[1, 2], &[0.8, 0.3], 0.5).unwrap();
        assert_eq!(e.passages(), vec![1]);
        let e = update_evidence(&[1, 2], &[0.1, 0.3], 0.5).unwrap();
        assert!(e.is_empty());
        let e = update_evidence(&[1], &[0.5], 0.5).unwrap();
        assert!(e.is_empty());
    }

    fn encoding(cands: Vec<Vec<f64>>) -> BeliefEncoding {
        BeliefEncoding {
            global: vec![1.0, 2.0],
            candidates: cands,
            none_slot: vec![0.5, 0.0],
            tokens: vec![],
            anchors: vec![],
        }
    }

    #[test]
    fn zero_scorer_scores_zero() {
        let enc = encoding(vec![vec![1.0, 1.0], vec![3.0, -1.0]]);
        let w = vec![0.0; 4];
        let (s, t) = score_candidates(&enc, &EvidenceScorer { w: &w, b: 0.0 }).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn hand_set_weights() {
        let enc = encoding(vec![vec![1.0, 1.0], vec![3.0, -1.0]]);
        let w = vec![0.5, 2.0, 1.0, -1.0];
        let (s, t) = score_candidates(&enc, &EvidenceScorer { w: &w, b: 0.25 }).unwrap();
        // global part: 1*1 + 2*(-1) = -1
        assert_eq!(s, vec![0.5 + 2.0 - 1.0 + 0.25, 1.5 - 2.0 - 1.0 + 0.25]);
        assert_eq!(t, 0.25 - 1.0 + 0.25);
        let short = vec![0.0; 3];
        assert!(score_candidates(&enc, &EvidenceScorer { w: &short, b: 0.0 }).is_err());
    }

    #[test]
    fn serialization_layout() {
        let src = r#"{"id":"P1","title":"T1","text":"c1"}
{"id":"P2","title":"T2","text":"c2"}
"#;
        let (corpus, _) = crate::corpus::parse_corpus(src.as_bytes()).unwrap();
        let q = question();
        let e = evidence(&[(0, 0.9)]);
        let b = form_belief(&e, Observation::Passage(1), &q, 3);
        assert_eq!(
            serialize_belief(&b, &corpus),
            "[CLS] [YES] [NO] [NONE] Who? [SEP] T2 [SOP] c2 [SEP] T1 [SOP] c1 [SEP]"
        );
    }
}
