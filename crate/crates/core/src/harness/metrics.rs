//! Answer and evidence metrics.

use std::collections::HashMap;

use crate::text::tokenize;

/// SQuAD-style normalization: lowercase, strip punctuation and the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(prediction: &str, gold: &str) -> bool {
    normalize_answer(prediction) == normalize_answer(gold)
}

/// Token-level F1 between normalized answers.
pub fn f1_score(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return (pt == gt) as u8 as f64;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// P EM: the top-`|gold|` evidence passages (by score) are exactly the gold
/// set.
pub fn passage_em(ranked_evidence: &[String], gold: &[String]) -> bool {
    if gold.is_empty() || ranked_evidence.len() < gold.len() {
        return false;
    }
    let mut top: Vec<&str> = ranked_evidence[..gold.len()]
        .iter()
        .map(String::as_str)
        .collect();
    let mut g: Vec<&str> = gold.iter().map(String::as_str).collect();
    top.sort_unstable();
    g.sort_unstable();
    g.dedup();
    top == g
}

/// Number of answer tokens, used only for reporting.
pub fn answer_len(s: &str) -> usize {
    tokenize(s).len()
}
