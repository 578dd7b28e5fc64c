//! Belief states for training: a random subset of the gold evidence plus a
//! few hard negatives, shuffled, with the first passage as the observation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::Question;
use crate::env::Func;
use crate::error::Result;
use crate::oracle::{gold_indices, ListMemo};
use crate::retrieval::Retriever;

/// Non-gold passages per retrieval function considered as negatives.
pub const DEFAULT_POOL_DEPTH: usize = 20;
/// Negatives injected per state are drawn from `0..=MAX_NEGATIVES`.
pub const MAX_NEGATIVES: usize = 2;

/// Hard negatives for one question: the top non-gold passages of sparse
/// and dense search on the question and of the links out of its gold
/// passages, deduplicated in that order.
pub fn negative_pool(
    question: &Question,
    retriever: &Retriever,
    depth: usize,
    memo: &ListMemo,
) -> Result<Vec<usize>> {
    let corpus = retriever.corpus();
    let gold = gold_indices(question, corpus);
    let mut seen = BTreeSet::new();
    let mut pool = Vec::new();
    let mut take = |ps: &mut dyn Iterator<Item = usize>| {
        for p in ps.filter(|p| !gold.contains(p)).take(depth) {
            if seen.insert(p) {
                pool.push(p);
            }
        }
    };
    for f in [Func::Sparse, Func::Dense] {
        let list = memo.search(f, &question.text, retriever)?;
        take(&mut list.hits.iter().map(|h| h.passage));
    }
    let mut targets = Vec::new();
    for &g in &gold {
        for a in &corpus.passage(g).anchors {
            if let Some(t) = corpus.index_of(&a.target) {
                targets.push(t);
            }
        }
    }
    take(&mut targets.into_iter());
    Ok(pool)
}

/// Candidate passages of one sampled belief state; the first element is
/// the observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledState {
    pub question: usize,
    pub candidates: Vec<usize>,
}

/// Each gold passage is kept with probability ½, which makes every subset
/// equally likely; then 0 to `max_negatives` pool passages join and the
/// whole set is shuffled.
pub fn sample_belief_state<R: Rng>(
    question_index: usize,
    gold: &[usize],
    pool: &[usize],
    max_negatives: usize,
    rng: &mut R,
) -> SampledState {
    let mut candidates: Vec<usize> = gold.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    let n_neg = rng.gen_range(0..=max_negatives);
    if pool.is_empty() {
        if n_neg > 0 {
            log::debug!("question {question_index}: empty negative pool");
        }
    } else {
        candidates.extend(pool.choose_multiple(rng, n_neg.min(pool.len())).copied());
    }
    candidates.shuffle(rng);
    SampledState {
        question: question_index,
        candidates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn negatives_bounded_and_golds_kept_apart() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool = [10, 11, 12, 13];
        let mut counts = [0usize; 3];
        for _ in 0..500 {
            let s = sample_belief_state(0, &[1, 2], &pool, MAX_NEGATIVES, &mut rng);
            let neg = s.candidates.iter().filter(|p| pool.contains(p)).count();
            counts[neg] += 1;
            let mut c = s.candidates.clone();
            c.sort();
            c.dedup();
            assert_eq!(c.len(), s.candidates.len());
        }
        assert!(counts.iter().all(|&c| c > 100), "{counts:?}");
    }

    #[test]
    fn empty_pool_gives_gold_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = sample_belief_state(0, &[4], &[], MAX_NEGATIVES, &mut rng);
            assert!(s.candidates.iter().all(|&p| p == 4));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_belief_state(0, &[1, 2], &[7, 8, 9], 2, &mut rng).candidates)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }
}
