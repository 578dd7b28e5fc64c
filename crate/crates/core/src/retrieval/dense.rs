use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Hit, RankedList};
use crate::corpus::{Corpus, Passage};
use crate::error::{Error, Result};
use crate::text::{fnv1a, tokenize};

pub const DEFAULT_DIM: usize = 128;
const MIN_DIM: usize = 8;

/// Term rewrites applied before hashing, mapping variant surface forms onto
/// one canonical term (one `variant<TAB>canonical` pair per line on disk).
/// An empty canonical form drops the term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon(pub BTreeMap<String, String>);

impl Lexicon {
    pub fn canonical<'a>(&'a self, term: &'a str) -> &'a str {
        self.0.get(term).map(String::as_str).unwrap_or(term)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.0 {
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    }

    pub fn parse<R: Read>(r: R) -> Result<Lexicon> {
        let mut map = BTreeMap::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line.map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: i + 1,
                message: "expected `variant<TAB>canonical`".into(),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Lexicon(map))
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse(f)
}

/// How query (and, unless loaded from a file, passage) vectors are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    /// Signed feature hashing of terms into `dim` buckets, L2-normalized.
    HashBow { dim: usize },
    /// `HashBow` after rewriting terms through a lexicon.
    LexiconBow { dim: usize, lexicon: Arc<Lexicon> },
}

impl Embedder {
    pub fn hash_bow(dim: usize) -> Self {
        Embedder::HashBow { dim }
    }

    pub fn from_tag(tag: &str, dim: usize, lexicon: Option<Lexicon>) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension {dim} is below {MIN_DIM}"
            )));
        }
        match (tag, lexicon) {
            ("hash-bow", _) => Ok(Embedder::HashBow { dim }),
            ("hash-bow-lexicon", Some(lexicon)) => Ok(Embedder::LexiconBow {
                dim,
                lexicon: Arc::new(lexicon),
            }),
            ("hash-bow-lexicon", None) => Err(Error::InvalidArgument(
                "hash-bow-lexicon needs a lexicon".into(),
            )),
            (other, _) => Err(Error::UnknownEmbedder(other.to_string())),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Embedder::HashBow { .. } => "hash-bow",
            Embedder::LexiconBow { .. } => "hash-bow-lexicon",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::HashBow { dim } | Embedder::LexiconBow { dim, .. } => *dim,
        }
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let terms = self.canonical_terms(text);
        hash_terms(terms.iter().map(String::as_str), self.dim())
    }

    /// Tokens of `text` as the embedder sees them: rewritten through the
    /// lexicon, if any, with dropped terms removed.
    pub fn canonical_terms(&self, text: &str) -> Vec<String> {
        let terms = tokenize(text);
        match self {
            Embedder::HashBow { .. } => terms,
            Embedder::LexiconBow { lexicon, .. } => terms
                .iter()
                .map(|t| lexicon.canonical(t))
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
        }
    }

    pub fn embed_passage(&self, p: &Passage) -> Vec<f64> {
        self.embed(&format!("{} {}", p.title, p.content))
    }
}

fn hash_terms<'a>(terms: impl Iterator<Item = &'a str>, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for t in terms {
        let h = fnv1a(t.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Embed text with a tagged parameter-free embedder.
pub fn embed(text: &str, d_e: usize, tag: &str) -> Result<Vec<f64>> {
    Ok(Embedder::from_tag(tag, d_e, None)?.embed(text))
}

/// One vector per passage, scanned exhaustively at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    vectors: Vec<f64>,
    embedder: Embedder,
}

pub fn build_dense_index(corpus: &Corpus, embedder: Embedder) -> Result<DenseIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = embedder.dim();
    let mut vectors = Vec::with_capacity(corpus.len() * dim);
    for p in corpus.passages() {
        vectors.extend(embedder.embed_passage(p));
    }
    Ok(DenseIndex {
        dim,
        vectors,
        embedder,
    })
}

impl DenseIndex {
    /// Wrap precomputed passage vectors (row-major, corpus order).
    pub fn from_vectors(dim: usize, vectors: Vec<f64>, embedder: Embedder) -> Result<Self> {
        if embedder.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: embedder.dim(),
            });
        }
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("ragged vector matrix".into()));
        }
        Ok(DenseIndex {
            dim,
            vectors,
            embedder,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn vector(&self, passage: usize) -> &[f64] {
        &self.vectors[passage * self.dim..(passage + 1) * self.dim]
    }

    pub fn embed_query(&self, text: &str) -> Vec<f64> {
        self.embedder.embed(text)
    }

    /// Exact top-k by inner product over every stored vector.
    pub fn search(&self, query: &[f64], k: usize) -> Result<RankedList> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let hits = self
            .vectors
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, v)| Hit {
                passage: i,
                score: dot(v, query),
            })
            .collect();
        Ok(RankedList::from_scores(hits, k))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn write_embedding_file(path: &Path, corpus: &Corpus, index: &DenseIndex) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "d_e={} count={}", index.dim(), index.len())?;
        for (i, p) in corpus.passages().iter().enumerate() {
            write!(w, "{}", p.id)?;
            for x in index.vector(i) {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Load passage vectors. Every corpus passage must appear exactly once with
/// the declared dimension; queries are embedded with `embedder`.
pub fn read_embedding_file<R: Read>(
    reader: R,
    corpus: &Corpus,
    embedder: Embedder,
) -> Result<DenseIndex> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .ok_or(Error::Malformed {
            line: 1,
            message: "missing header".into(),
        })?;
    let bad_header = || Error::Malformed {
        line: 1,
        message: format!("expected `d_e=<int> count=<int>`, got `{header}`"),
    };
    let mut parts = header.split_whitespace();
    let dim: usize = parts
        .next()
        .and_then(|s| s.strip_prefix("d_e="))
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad_header)?;
    let count: usize = parts
        .next()
        .and_then(|s| s.strip_prefix("count="))
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad_header)?;
    if embedder.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: embedder.dim(),
            got: dim,
        });
    }
    let mut vectors = vec![0.0; corpus.len() * dim];
    let mut filled = vec![false; corpus.len()];
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default();
        let idx = corpus.index_of(id).ok_or_else(|| Error::Malformed {
            line: lineno,
            message: format!("unknown passage `{id}`"),
        })?;
        if filled[idx] {
            return Err(Error::Malformed {
                line: lineno,
                message: format!("duplicate vector for `{id}`"),
            });
        }
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len(),
            });
        }
        vectors[idx * dim..(idx + 1) * dim].copy_from_slice(&values);
        filled[idx] = true;
        rows += 1;
    }
    if rows != count || rows != corpus.len() {
        return Err(Error::Malformed {
            line: 1,
            message: format!(
                "header declares {count} vectors, file has {rows}, corpus has {}",
                corpus.len()
            ),
        });
    }
    DenseIndex::from_vectors(dim, vectors, embedder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn empty_text_embeds_to_zero() {
        let v = embed("", 16, "hash-bow").unwrap();
        assert_eq!(v, vec![0.0; 16]);
    }

    #[test]
    fn embedding_is_deterministic_and_order_free() {
        let a = embed("cat game", 16, "hash-bow").unwrap();
        assert_eq!(a, embed("cat game", 16, "hash-bow").unwrap());
        let b = embed("game cat", 16, "hash-bow").unwrap();
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_tag_and_small_dim_rejected() {
        assert!(matches!(
            embed("x", 16, "bert"),
            Err(Error::UnknownEmbedder(_))
        ));
        assert!(embed("x", 4, "hash-bow").is_err());
    }

    #[test]
    fn lexicon_maps_variants_together() {
        let lex = Lexicon([("scarlet".to_string(), "crimson".to_string())].into());
        let e = Embedder::from_tag("hash-bow-lexicon", 32, Some(lex)).unwrap();
        assert_eq!(e.embed("scarlet port"), e.embed("crimson port"));
    }

    fn one_hot_index(n: usize, dim: usize) -> (Corpus, DenseIndex) {
        let src: String = (0..n)
            .map(|i| format!("{{\"id\":\"P{}\",\"title\":\"\",\"text\":\"x\"}}\n", i + 1))
            .collect();
        let corpus = parse_corpus(src.as_bytes()).unwrap().0;
        let mut vectors = vec![0.0; n * dim];
        for i in 0..n {
            vectors[i * dim + i] = 1.0;
        }
        let idx = DenseIndex::from_vectors(dim, vectors, Embedder::hash_bow(dim)).unwrap();
        (corpus, idx)
    }

    #[test]
    fn orthogonal_query_ranks_its_passage_first() {
        let (c, idx) = one_hot_index(3, 8);
        let mut q = vec![0.0; 8];
        q[1] = 1.0;
        let list = idx.search(&q, 10).unwrap();
        assert_eq!(list.ids(&c)[0], "P2");
        // the rest tie at zero and fall back to id order
        assert_eq!(list.ids(&c), vec!["P2", "P1", "P3"]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (_, idx) = one_hot_index(3, 8);
        assert!(matches!(
            idx.search(&[1.0; 4], 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embedding_file_round_trip_and_validation() {
        let (c, idx) = one_hot_index(3, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        write_embedding_file(&path, &c, &idx).unwrap();
        let back =
            read_embedding_file(File::open(&path).unwrap(), &c, Embedder::hash_bow(8)).unwrap();
        assert_eq!(back, idx);

        let short = "d_e=8 count=3\nP1 1 0 0 0 0 0 0 0\n";
        assert!(read_embedding_file(short.as_bytes(), &c, Embedder::hash_bow(8)).is_err());
        let ragged = "d_e=8 count=1\nP1 1 0 0\n";
        assert!(read_embedding_file(ragged.as_bytes(), &c, Embedder::hash_bow(8)).is_err());
    }
}
