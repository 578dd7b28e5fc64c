//! The model-based oracle: with access to gold evidence and the hidden
//! ranked lists it labels each belief state with a near-optimal action, and
//! supplies the ideal evidence filter and arguments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::belief::{BeliefEncoding, BeliefState, EvidenceSet, ScoredPassage, Sentinel, TokenRole};
use crate::corpus::{Answer, Corpus, Question};
use crate::env::{Action, EnvState, Func};
use crate::error::Result;
use crate::harness::metrics::exact_match;
use crate::policy::{
    anchor_ref, answer_text, Arguments, LinkChoice, NarrowedActions, SpanKind, SpanPrediction,
};
use crate::retrieval::{RankedList, Retriever};
use crate::text::tokenize;

/// Shared cache of ranked lists for states that have no environment of
/// their own (sampled training states).
#[derive(Debug, Default)]
pub struct ListMemo {
    lists: Mutex<HashMap<Action, Arc<RankedList>>>,
}

impl ListMemo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lists.lock().expect("memo lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn search(&self, func: Func, arg: &str, retriever: &Retriever) -> Result<Arc<RankedList>> {
        self.get_or_search(&Action::new(func, arg), retriever)
    }

    fn get_or_search(&self, action: &Action, retriever: &Retriever) -> Result<Arc<RankedList>> {
        if let Some(l) = self.lists.lock().expect("memo lock").get(action) {
            return Ok(l.clone());
        }
        let list = Arc::new(retriever.retrieve(action.func, &action.arg)?);
        self.lists
            .lock()
            .expect("memo lock")
            .insert(action.clone(), list.clone());
        Ok(list)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleContext<'a> {
    pub question: &'a Question,
    pub retriever: &'a Retriever,
    /// Reveal counters; `None` means every list is unread.
    pub state: Option<&'a EnvState>,
    pub evidence: &'a EvidenceSet,
    pub memo: Option<&'a ListMemo>,
}

impl<'a> OracleContext<'a> {
    pub fn corpus(&self) -> &'a Corpus {
        &self.retriever.corpus
    }

    pub fn gold(&self) -> Vec<usize> {
        gold_indices(self.question, self.corpus())
    }

    /// Gold passages not yet in the evidence set.
    pub fn missing(&self) -> Vec<usize> {
        self.gold()
            .into_iter()
            .filter(|&g| !self.evidence.contains(g))
            .collect()
    }

    fn list(&self, action: &Action) -> Result<(Arc<RankedList>, usize)> {
        if let Some(c) = self.state.and_then(|s| s.cached(action)) {
            return Ok((c.list.clone(), c.revealed));
        }
        let list = match self.memo {
            Some(m) => m.get_or_search(action, self.retriever)?,
            None => Arc::new(self.retriever.retrieve(action.func, &action.arg)?),
        };
        Ok((list, 0))
    }
}

pub fn gold_indices(question: &Question, corpus: &Corpus) -> Vec<usize> {
    question
        .gold_evidence
        .iter()
        .filter_map(|id| corpus.index_of(id))
        .collect()
}

/// Steps until `action`, issued repeatedly, reveals a missing gold
/// passage: `min (rank − revealed)` over missing gold ranked below the
/// reveal point. `None` is infinity.
pub fn steps_to_missing(action: &Action, ctx: &OracleContext) -> Result<Option<usize>> {
    if !action.func.is_retrieval() {
        return Ok(None);
    }
    let missing = ctx.missing();
    if missing.is_empty() {
        return Ok(None);
    }
    let (list, revealed) = ctx.list(action)?;
    Ok(missing
        .iter()
        .filter_map(|&g| list.rank_of(g))
        .filter(|&r| r > revealed)
        .map(|r| r - revealed)
        .min())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecision {
    pub action: Action,
    /// Position in the narrowed action list, absent for the dead-end
    /// fallback when it is not one of the candidates.
    pub index: Option<usize>,
    /// Per-candidate cost in [`Func::ALL`] order; `None` is infinity or
    /// not applicable.
    pub costs: Vec<Option<usize>>,
    pub dead_end: bool,
}

/// Answer when all gold evidence is collected and `answer_arg` is correct;
/// otherwise the cheapest unmasked retrieval candidate (ties LINK > SPARSE >
/// DENSE). With every cost infinite the oracle answers if nothing is
/// missing, else falls back to sparse search on the question.
pub fn oracle_action(
    ctx: &OracleContext,
    candidates: &NarrowedActions,
    answer_arg: &str,
) -> Result<OracleDecision> {
    let mut costs = vec![None; 4];
    for (i, c) in candidates.candidates.iter().enumerate() {
        if !c.masked && c.action.func.is_retrieval() {
            costs[i] = steps_to_missing(&c.action, ctx)?;
        }
    }
    let answer_idx = Func::Answer.index();
    let missing = ctx.missing();
    let correct = exact_match(answer_arg, ctx.question.gold_answer.as_text());
    if missing.is_empty() && correct {
        return Ok(OracleDecision {
            action: candidates.candidates[answer_idx].action.clone(),
            index: Some(answer_idx),
            costs,
            dead_end: false,
        });
    }
    let best = (0..4)
        .filter_map(|i| costs[i].map(|c| (i, c)))
        .min_by(|(ia, ca), (ib, cb)| {
            ca.cmp(cb)
                .then(Func::ALL[*ib].priority().cmp(&Func::ALL[*ia].priority()))
        });
    if let Some((i, _)) = best {
        return Ok(OracleDecision {
            action: candidates.candidates[i].action.clone(),
            index: Some(i),
            costs,
            dead_end: false,
        });
    }
    if missing.is_empty() {
        return Ok(OracleDecision {
            action: candidates.candidates[answer_idx].action.clone(),
            index: Some(answer_idx),
            costs,
            dead_end: false,
        });
    }
    let fallback = Action::new(Func::Sparse, ctx.question.text.clone());
    log::debug!("oracle dead end on {}", ctx.question.id);
    let exhausted = ctx.state.is_some_and(|s| s.is_exhausted(&fallback));
    let (action, index) = if exhausted {
        (
            candidates.candidates[answer_idx].action.clone(),
            Some(answer_idx),
        )
    } else {
        let idx = candidates
            .candidates
            .iter()
            .position(|c| !c.masked && c.action == fallback);
        (fallback, idx)
    };
    Ok(OracleDecision {
        action,
        index,
        costs,
        dead_end: true,
    })
}

/// `φ★`: keep exactly the gold candidates. Gold scores 1, others 0,
/// threshold 0.5.
pub fn oracle_evidence_filter(
    candidates: &[usize],
    question: &Question,
    corpus: &Corpus,
) -> EvidenceSet {
    let gold = gold_indices(question, corpus);
    let mut members: Vec<ScoredPassage> = candidates
        .iter()
        .filter(|p| gold.contains(p))
        .map(|&passage| ScoredPassage {
            passage,
            score: 1.0,
        })
        .collect();
    members.sort_by_key(|m| m.passage);
    members.dedup_by_key(|m| m.passage);
    EvidenceSet {
        members,
        threshold: 0.5,
    }
}

/// Scores `φ★` assigns to each candidate.
pub fn oracle_scores(
    candidates: &[usize],
    question: &Question,
    corpus: &Corpus,
) -> (Vec<f64>, f64) {
    let gold = gold_indices(question, corpus);
    (
        candidates
            .iter()
            .map(|p| if gold.contains(p) { 1.0 } else { 0.0 })
            .collect(),
        0.5,
    )
}

/// `g_l★`: the first anchor slot in `C` pointing at a missing gold passage.
pub fn oracle_link_slot(
    belief: &BeliefState,
    enc: &BeliefEncoding,
    ctx: &OracleContext,
) -> Option<usize> {
    let corpus = ctx.corpus();
    let missing: Vec<&str> = ctx
        .missing()
        .into_iter()
        .map(|g| corpus.passage(g).id.as_str())
        .collect();
    enc.anchors.iter().position(|s| {
        let p = corpus.passage(belief.candidates[s.cand].passage);
        missing.contains(&p.anchors[s.anchor].target.as_str())
    })
}

/// `g_o★` as token indices into the encoding: the gold sentinel for yes/no
/// answers, the first occurrence of the answer text inside a gold
/// candidate, or NONE when the gold evidence is not all in `C` or the text
/// does not occur.
pub fn oracle_answer_label(
    belief: &BeliefState,
    enc: &BeliefEncoding,
    question: &Question,
    corpus: &Corpus,
) -> (usize, usize) {
    let none = enc.sentinel(Sentinel::None);
    let gold = gold_indices(question, corpus);
    if gold.is_empty() || !gold.iter().all(|g| belief.contains(*g)) {
        return (none, none);
    }
    let target = match &question.gold_answer {
        Answer::Yes => return (enc.sentinel(Sentinel::Yes), enc.sentinel(Sentinel::Yes)),
        Answer::No => return (enc.sentinel(Sentinel::No), enc.sentinel(Sentinel::No)),
        Answer::Text(t) => tokenize(t),
    };
    if target.is_empty() {
        return (none, none);
    }
    let n = enc.tokens.len();
    for i in 0..n {
        let TokenRole::Passage { cand, title, .. } = enc.tokens[i].role else {
            continue;
        };
        if !gold.contains(&belief.candidates[cand].passage) || i + target.len() > n {
            continue;
        }
        let fits = (0..target.len()).all(|k| {
            let t = &enc.tokens[i + k];
            t.term == target[k]
                && matches!(t.role, TokenRole::Passage { cand: c, title: f, .. } if c == cand && f == title)
        });
        if fits {
            return (i, i + target.len() - 1);
        }
    }
    (none, none)
}

/// Replace the learned link and answer arguments with `g_l★` and `g_o★`.
pub fn oracle_arguments(
    mut args: Arguments,
    belief: &BeliefState,
    enc: &BeliefEncoding,
    ctx: &OracleContext,
) -> Arguments {
    let corpus = ctx.corpus();
    args.link = oracle_link_slot(belief, enc, ctx).map(|slot| LinkChoice {
        slot,
        anchor: anchor_ref(belief, enc, corpus, slot),
    });
    let (start, end) = oracle_answer_label(belief, enc, ctx.question, corpus);
    let kind = match enc.tokens[start].role {
        TokenRole::Sentinel(s) => SpanKind::Sentinel(s),
        TokenRole::Passage { .. } => SpanKind::Text { start, end },
    };
    args.answer = SpanPrediction { kind, score: 0.0 };
    args.answer_text = answer_text(&args.answer, belief, enc, corpus);
    args
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, Split};
    use crate::policy::ActionCandidate;
    use crate::retrieval::{Hit, RetrievalConfig};

    fn setup() -> (Retriever, Question) {
        let mut lines = String::new();
        for i in 0..6 {
            lines.push_str(&format!(
                "{{\"id\":\"P{i}\",\"title\":\"T{i}\",\"text\":\"common words passage{i}\"}}\n"
            ));
        }
        let (corpus, _) = parse_corpus(lines.as_bytes()).unwrap();
        let r = Retriever::new(Arc::new(corpus), &RetrievalConfig::default()).unwrap();
        let q = Question {
            id: "q".into(),
            text: "passage3 passage4".into(),
            gold_evidence: vec!["P3".into(), "P4".into()],
            gold_answer: Answer::Text("x".into()),
            split: Split::Dev,
        };
        (r, q)
    }

    fn narrowed(masked: [bool; 3], args: [&str; 3]) -> NarrowedActions {
        let mut candidates: Vec<ActionCandidate> = Func::RETRIEVAL
            .iter()
            .zip(masked)
            .zip(args)
            .map(|((&f, m), a)| ActionCandidate {
                action: Action::new(f, a),
                masked: m,
                arg_vector: vec![],
            })
            .collect();
        candidates.push(ActionCandidate {
            action: Action::new(Func::Answer, "x"),
            masked: false,
            arg_vector: vec![],
        });
        NarrowedActions { candidates }
    }

    #[test]
    fn cost_counts_from_reveal_point() {
        let (r, q) = setup();
        let e = EvidenceSet::default();
        let ctx = OracleContext {
            question: &q,
            retriever: &r,
            state: None,
            evidence: &e,
            memo: None,
        };
        let a = Action::new(Func::Sparse, "passage4");
        assert_eq!(steps_to_missing(&a, &ctx).unwrap(), Some(1));
        // unmatched query: nothing retrieved, infinite
        let a = Action::new(Func::Sparse, "zzz");
        assert_eq!(steps_to_missing(&a, &ctx).unwrap(), None);
    }

    #[test]
    fn deep_rank_cost_equals_rank() {
        // 100-entry list with the gold at rank 65
        let hits: Vec<Hit> = (0..100)
            .map(|i| Hit {
                passage: if i == 64 { 3 } else { 0 },
                score: 1.0,
            })
            .collect();
        let list = RankedList { hits };
        let revealed = 0;
        let cost = list
            .rank_of(3)
            .filter(|&r| r > revealed)
            .map(|r| r - revealed);
        assert_eq!(cost, Some(65));
    }

    #[test]
    fn answer_when_complete_and_correct() {
        let (r, q) = setup();
        let c = r.corpus();
        let e = oracle_evidence_filter(&[3, 4, 0], &q, c);
        let ctx = OracleContext {
            question: &q,
            retriever: &r,
            state: None,
            evidence: &e,
            memo: None,
        };
        let n = narrowed([false; 3], ["passage3", "passage4", ""]);
        let d = oracle_action(&ctx, &n, "x").unwrap();
        assert_eq!(d.action.func, Func::Answer);
        assert!(!d.dead_end);
    }

    #[test]
    fn cheapest_retrieval_with_tie_break() {
        let (r, q) = setup();
        let e = EvidenceSet::default();
        let memo = ListMemo::new();
        let ctx = OracleContext {
            question: &q,
            retriever: &r,
            state: None,
            evidence: &e,
            memo: Some(&memo),
        };
        // sparse and dense both reach a gold passage in one step; link masked
        let n = narrowed([false, false, true], ["passage3", "passage4", ""]);
        let d = oracle_action(&ctx, &n, "").unwrap();
        assert_eq!(d.action.func, Func::Sparse);
        assert_eq!(d.costs[0], Some(1));
        assert_eq!(d.costs[2], None);
        assert_eq!(memo.len(), 2);
    }

    #[test]
    fn dead_end_falls_back_to_question() {
        let (r, q) = setup();
        let e = EvidenceSet::default();
        let ctx = OracleContext {
            question: &q,
            retriever: &r,
            state: None,
            evidence: &e,
            memo: None,
        };
        let n = narrowed([false, true, true], ["zzz", "", ""]);
        let d = oracle_action(&ctx, &n, "").unwrap();
        assert!(d.dead_end);
        assert_eq!(d.action, Action::new(Func::Sparse, q.text.clone()));
        assert_eq!(d.index, None);
    }

    #[test]
    fn evidence_filter_is_intersection() {
        let (r, q) = setup();
        let c = r.corpus();
        assert_eq!(oracle_evidence_filter(&[3, 0], &q, c).passages(), vec![3]);
        assert!(oracle_evidence_filter(&[0], &q, c).is_empty());
        assert_eq!(
            oracle_evidence_filter(&[4, 0, 3], &q, c).passages(),
            vec![3, 4]
        );
    }
}
