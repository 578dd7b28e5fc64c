//! Passage collection, hyperlink graph, and question sets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{char_len, char_slice, tokenize};

/// A hyperlink inside a passage's content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor {
    pub surface: String,
    /// `[start, end)` character offsets into the passage content.
    pub span: (usize, usize),
    pub target: String,
    /// Added at ingest to connect adjacent passages of one article.
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub content: String,
    /// Title terms followed by content terms.
    pub tokens: Vec<String>,
    pub title_len: usize,
    pub anchors: Vec<Anchor>,
    pub article: Option<(String, i64)>,
}

impl Passage {
    pub fn title_tokens(&self) -> &[String] {
        &self.tokens[..self.title_len]
    }

    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[self.title_len..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Text(String),
    Yes,
    No,
}

impl Answer {
    pub fn parse(raw: &str) -> Answer {
        match raw.trim().to_lowercase().as_str() {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            _ => Answer::Text(raw.to_string()),
        }
    }

    pub fn as_text(&self) -> &str {
        match self {
            Answer::Text(s) => s,
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold_evidence: Vec<String>,
    pub gold_answer: Answer,
    pub split: Split,
}

impl Question {
    pub fn is_gold(&self, passage_id: &str) -> bool {
        self.gold_evidence.iter().any(|g| g == passage_id)
    }
}

/// On-disk passage record, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageRecord {
    pub id: String,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub anchors: Vec<AnchorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub span: [usize; 2],
    pub target: String,
}

/// On-disk question record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub supporting_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl From<QuestionRecord> for Question {
    fn from(r: QuestionRecord) -> Self {
        Question {
            id: r.id,
            text: r.question,
            gold_evidence: r.supporting_ids,
            gold_answer: Answer::parse(&r.answer),
            split: r.split.unwrap_or_default(),
        }
    }
}

impl From<&Question> for QuestionRecord {
    fn from(q: &Question) -> Self {
        QuestionRecord {
            id: q.id.clone(),
            question: q.text.clone(),
            answer: q.gold_answer.as_text().to_string(),
            supporting_ids: q.gold_evidence.clone(),
            split: Some(q.split),
        }
    }
}

/// Warning counters collected while ingesting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub passages: usize,
    pub anchors_kept: usize,
    pub dangling_dropped: usize,
    pub out_of_bounds_dropped: usize,
    pub adjacency_links: usize,
}

impl IngestReport {
    pub fn warnings(&self) -> usize {
        self.dangling_dropped + self.out_of_bounds_dropped
    }
}

/// Immutable passage collection. Passages are stored sorted by id, so a
/// passage index doubles as the tie-break order for ranked lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
    df: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_records(records: Vec<PassageRecord>) -> Result<(Corpus, IngestReport)> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.id.is_empty() {
                return Err(Error::InvalidArgument("empty passage id".into()));
            }
            if !seen.insert(r.id.clone()) {
                return Err(Error::DuplicatePassage(r.id.clone()));
            }
        }
        let mut report = IngestReport {
            passages: records.len(),
            ..Default::default()
        };
        let mut records = records;
        records.sort_by(|a, b| a.id.cmp(&b.id));

        let mut passages: Vec<Passage> = Vec::with_capacity(records.len());
        for r in records {
            let content_chars = char_len(&r.text);
            let mut anchors = Vec::new();
            for a in r.anchors {
                let [start, end] = a.span;
                if start > end || end > content_chars {
                    report.out_of_bounds_dropped += 1;
                    continue;
                }
                if !seen.contains(&a.target) {
                    report.dangling_dropped += 1;
                    continue;
                }
                anchors.push(Anchor {
                    surface: char_slice(&r.text, start, end).to_string(),
                    span: (start, end),
                    target: a.target,
                    synthetic: false,
                });
            }
            report.anchors_kept += anchors.len();
            let title_tokens = tokenize(&r.title);
            let title_len = title_tokens.len();
            let mut tokens = title_tokens;
            tokens.extend(tokenize(&r.text));
            passages.push(Passage {
                id: r.id,
                title: r.title,
                content: r.text,
                tokens,
                title_len,
                anchors,
                article: r.article_id.zip(r.position),
            });
        }

        // previous/next links between adjacent passages of one article
        let mut articles: BTreeMap<&str, Vec<(i64, usize)>> = BTreeMap::new();
        for (i, p) in passages.iter().enumerate() {
            if let Some((art, pos)) = &p.article {
                articles.entry(art.as_str()).or_default().push((*pos, i));
            }
        }
        // (source, target, is_next)
        let mut extra: Vec<(usize, String, bool)> = Vec::new();
        for members in articles.values_mut() {
            members.sort();
            for w in members.windows(2) {
                let (a, b) = (w[0].1, w[1].1);
                extra.push((a, passages[b].id.clone(), true));
                extra.push((b, passages[a].id.clone(), false));
            }
        }
        report.adjacency_links = extra.len();
        for (src, target, is_next) in extra {
            // zero-width: "previous" sits at the start, "next" at the end
            let at = if is_next {
                char_len(&passages[src].content)
            } else {
                0
            };
            passages[src].anchors.push(Anchor {
                surface: String::new(),
                span: (at, at),
                target,
                synthetic: true,
            });
        }

        let by_id = passages
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for p in &passages {
            let uniq: HashSet<&String> = p.tokens.iter().collect();
            for t in uniq {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        Ok((
            Corpus {
                passages,
                by_id,
                df,
            },
            report,
        ))
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn passage(&self, idx: usize) -> &Passage {
        &self.passages[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.index_of(id).map(|i| &self.passages[i])
    }

    /// Surviving anchors of a passage.
    pub fn links(&self, id: &str) -> &[Anchor] {
        self.get(id).map(|p| p.anchors.as_slice()).unwrap_or(&[])
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// BM25 inverse document frequency.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.passages.len() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Largest possible idf, reached by unseen terms.
    pub fn max_idf(&self) -> f64 {
        let n = self.passages.len() as f64;
        (1.0 + (n + 0.5) / 0.5).ln()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.df.len()
    }

    /// Records in id order. Adjacency anchors are not written; they are
    /// re-derived from `article_id`/`position` on ingest.
    pub fn to_records(&self) -> Vec<PassageRecord> {
        self.passages
            .iter()
            .map(|p| PassageRecord {
                id: p.id.clone(),
                title: p.title.clone(),
                text: p.content.clone(),
                anchors: p
                    .anchors
                    .iter()
                    .filter(|a| !a.synthetic)
                    .map(|a| AnchorRecord {
                        span: [a.span.0, a.span.1],
                        target: a.target.clone(),
                    })
                    .collect(),
                article_id: p.article.as_ref().map(|a| a.0.clone()),
                position: p.article.as_ref().map(|a| a.1),
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in self.to_records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_corpus<R: Read>(reader: R) -> Result<(Corpus, IngestReport)> {
    Corpus::from_records(read_jsonl(reader)?)
}

/// Load a line-delimited corpus file.
pub fn ingest_corpus(path: &Path) -> Result<(Corpus, IngestReport)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (corpus, report) = parse_corpus(f)?;
    if report.warnings() > 0 {
        log::warn!(
            "{}: dropped {} dangling and {} out-of-bounds anchors",
            path.display(),
            report.dangling_dropped,
            report.out_of_bounds_dropped
        );
    }
    Ok((corpus, report))
}

pub fn parse_questions<R: Read>(reader: R) -> Result<Vec<Question>> {
    Ok(read_jsonl::<QuestionRecord, _>(reader)?
        .into_iter()
        .map(Question::from)
        .collect())
}

pub fn load_questions(path: &Path) -> Result<Vec<Question>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_questions(f)
}

pub fn save_questions(path: &Path, questions: &[Question]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let res: std::io::Result<()> = (|| {
        for q in questions {
            serde_json::to_writer(&mut w, &QuestionRecord::from(q))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Every gold passage must exist in the corpus.
pub fn validate_questions(corpus: &Corpus, questions: &[Question]) -> Result<()> {
    for q in questions {
        for g in &q.gold_evidence {
            if corpus.index_of(g).is_none() {
                return Err(Error::UnknownPassage(format!("{g} (question {})", q.id)));
            }
        }
    }
    Ok(())
}
