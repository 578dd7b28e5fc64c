//! The three retrieval functions: BM25, exact inner-product search over
//! passage vectors, and hyperlink following.

mod dense;
mod link;
mod sparse;

use std::sync::Arc;

use serde::Serialize;

pub(crate) use dense::dot;
pub use dense::{
    build_dense_index, embed, load_lexicon, read_embedding_file, write_embedding_file, DenseIndex,
    Embedder, Lexicon, DEFAULT_DIM as DEFAULT_EMBED_DIM,
};
pub use link::{link_search, AnchorRef};
pub use sparse::{build_sparse_index, SparseIndex, DEFAULT_B, DEFAULT_K1};

use crate::corpus::Corpus;
use crate::env::Func;
use crate::error::{Error, Result};

/// Depth cap applied to every cached retrieval list.
pub const DEFAULT_DEPTH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hit {
    /// Passage index in the corpus (ids sort the same way).
    pub passage: usize,
    pub score: f64,
}

/// Passages ordered by non-increasing score, ties by ascending passage id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub hits: Vec<Hit>,
}

impl RankedList {
    /// Sort scored passages and keep the top `k`.
    pub fn from_scores(mut hits: Vec<Hit>, k: usize) -> Self {
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.passage.cmp(&b.passage))
        });
        hits.truncate(k);
        RankedList { hits }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Hit> {
        self.hits.get(i)
    }

    /// 1-based rank of a passage, if present.
    pub fn rank_of(&self, passage: usize) -> Option<usize> {
        self.hits
            .iter()
            .position(|h| h.passage == passage)
            .map(|i| i + 1)
    }

    pub fn ids<'c>(&self, corpus: &'c Corpus) -> Vec<&'c str> {
        self.hits
            .iter()
            .map(|h| corpus.passage(h.passage).id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalConfig {
    pub k1: f64,
    pub b: f64,
    pub depth: usize,
    pub embedder: Embedder,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            depth: DEFAULT_DEPTH,
            embedder: Embedder::hash_bow(dense::DEFAULT_DIM),
        }
    }
}

/// Corpus plus the indexes every retrieval function needs. Immutable once
/// built and shared read-only across episodes.
#[derive(Debug)]
pub struct Retriever {
    pub corpus: Arc<Corpus>,
    pub sparse: SparseIndex,
    pub dense: DenseIndex,
    pub depth: usize,
}

impl Retriever {
    pub fn new(corpus: Arc<Corpus>, config: &RetrievalConfig) -> Result<Self> {
        let sparse = build_sparse_index(&corpus, config.k1, config.b)?;
        let dense = build_dense_index(&corpus, config.embedder.clone())?;
        Ok(Retriever {
            corpus,
            sparse,
            dense,
            depth: config.depth,
        })
    }

    pub fn with_dense(
        corpus: Arc<Corpus>,
        config: &RetrievalConfig,
        dense: DenseIndex,
    ) -> Result<Self> {
        let sparse = build_sparse_index(&corpus, config.k1, config.b)?;
        Ok(Retriever {
            corpus,
            sparse,
            dense,
            depth: config.depth,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    /// Execute a retrieval function on its textual argument.
    pub fn retrieve(&self, func: Func, arg: &str) -> Result<RankedList> {
        match func {
            Func::Sparse => Ok(self.sparse.search(arg, self.depth)),
            Func::Dense => {
                let q = self.dense.embed_query(arg);
                self.dense.search(&q, self.depth)
            }
            Func::Link => {
                let r = AnchorRef::parse(arg)?;
                let source = self
                    .corpus
                    .index_of(&r.source)
                    .ok_or_else(|| Error::UnresolvedAnchor(arg.to_string()))?;
                let p = self.corpus.passage(source);
                let anchor = p
                    .anchors
                    .iter()
                    .find(|a| a.span == r.span)
                    .ok_or_else(|| Error::UnresolvedAnchor(arg.to_string()))?;
                link_search(&self.corpus, &r.source, anchor)
            }
            Func::Answer => Err(Error::InvalidArgument(
                "the answer function does not retrieve".into(),
            )),
        }
    }
}
