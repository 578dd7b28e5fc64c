use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Hit, RankedList};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 inverted index. Title terms are indexed ahead of content terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub k1: f64,
    pub b: f64,
    /// term -> (passage index, term frequency), sorted by passage index.
    postings: HashMap<String, Vec<(u32, u32)>>,
    lengths: Vec<u32>,
    avg_len: f64,
}

pub fn build_sparse_index(corpus: &Corpus, k1: f64, b: f64) -> Result<SparseIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut lengths = Vec::with_capacity(corpus.len());
    for (i, p) in corpus.passages().iter().enumerate() {
        lengths.push(p.tokens.len() as u32);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &p.tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        for (t, n) in tf {
            postings
                .entry(t.to_string())
                .or_default()
                .push((i as u32, n));
        }
    }
    // passages were visited in index order, so every list is already sorted
    let total: u64 = lengths.iter().map(|&l| l as u64).sum();
    let avg_len = total as f64 / lengths.len() as f64;
    Ok(SparseIndex {
        k1,
        b,
        postings,
        lengths,
        avg_len,
    })
}

impl SparseIndex {
    pub fn num_passages(&self) -> usize {
        self.lengths.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn passage_len(&self, passage: usize) -> usize {
        self.lengths[passage] as usize
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |p| p.len())
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], |p| p.as_slice())
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.lengths.len() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Contribution of one query term to one passage's score.
    pub fn term_score(&self, idf: f64, tf: f64, len: f64) -> f64 {
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * len / self.avg_len))
    }

    /// Distinct query terms in first-occurrence order; duplicates count once.
    pub fn query_terms(query: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        tokenize(query)
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }

    pub fn search(&self, query: &str, k: usize) -> RankedList {
        let terms = Self::query_terms(query);
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for t in &terms {
            let plist = self.postings(t);
            if plist.is_empty() {
                continue;
            }
            let idf = self.idf(t);
            for &(doc, tf) in plist {
                let s = self.term_score(idf, tf as f64, self.lengths[doc as usize] as f64);
                *acc.entry(doc).or_insert(0.0) += s;
            }
        }
        let hits = acc
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(doc, score)| Hit {
                passage: doc as usize,
                score,
            })
            .collect();
        RankedList::from_scores(hits, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn corpus(lines: &[(&str, &str, &str)]) -> Corpus {
        let src: String = lines
            .iter()
            .map(|(id, title, text)| {
                format!("{{\"id\":\"{id}\",\"title\":\"{title}\",\"text\":\"{text}\"}}\n")
            })
            .collect();
        parse_corpus(src.as_bytes()).unwrap().0
    }

    #[test]
    fn df_for_term_in_two_passages() {
        let c = corpus(&[("P1", "", "cat dog"), ("P2", "", "cat"), ("P3", "", "bird")]);
        let idx = build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(idx.df("cat"), 2);
        assert_eq!(idx.df("bird"), 1);
        assert_eq!(build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap(), idx);
    }

    #[test]
    fn single_passage_avg_len() {
        let c = corpus(&[("P1", "Title words", "one two three")]);
        let idx = build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(idx.avg_len(), 5.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c = corpus(&[]);
        assert!(matches!(
            build_sparse_index(&c, DEFAULT_K1, DEFAULT_B),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn hand_computed_two_doc_score() {
        let c = corpus(&[("P1", "", "cat game"), ("P2", "", "dog")]);
        let idx = build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap();
        let list = idx.search("cat", 10);
        assert_eq!(list.ids(&c), vec!["P1"]);
        // N=2, df=1: idf = ln(1 + 1.5/1.5) = ln 2; len 2, avg 1.5
        let expected = 2f64.ln() * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / 1.5));
        assert!((list.hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn out_of_vocabulary_query_is_empty() {
        let c = corpus(&[("P1", "", "cat game"), ("P2", "", "dog")]);
        let idx = build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap();
        assert!(idx.search("zebra", 10).is_empty());
        assert!(idx.search("", 10).is_empty());
    }

    #[test]
    fn score_monotone_in_tf() {
        let c = corpus(&[("P1", "", "a b c"), ("P2", "", "d e f")]);
        let idx = build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap();
        let idf = idx.idf("a");
        let mut prev = 0.0;
        for tf in 1..50 {
            let s = idx.term_score(idf, tf as f64, 10.0);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn truncates_to_k() {
        let c = corpus(&[("P1", "", "x"), ("P2", "", "x"), ("P3", "", "x y")]);
        let idx = build_sparse_index(&c, DEFAULT_K1, DEFAULT_B).unwrap();
        let list = idx.search("x", 2);
        // equal-length docs tie and fall back to id order
        assert_eq!(list.ids(&c), vec!["P1", "P2"]);
    }
}
