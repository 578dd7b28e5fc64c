//! Seeded generator of small corpora with planted evidence chains.
//!
//! Each question owns a group of passages. In the two-hop setting passage
//! `A` names the question's subject and mentions a bridge entity whose own
//! passage `B` holds the answer; `A` links to `B` unless the link is
//! dropped. Distractors reuse the question's relation words so that
//! lexical search is easily misled, and "mismatched" questions describe
//! `A` through synonyms that never occur in the corpus (a lexicon maps
//! them back for the dense embedder).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{save_questions, AnchorRecord, Answer, Corpus, PassageRecord, Question, Split};
use crate::error::{Error, Result};

use crate::retrieval::{Embedder, Lexicon, RetrievalConfig, Retriever};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Training questions.
    pub questions: usize,
    /// Additional questions tagged `dev`.
    #[serde(default)]
    pub dev_questions: usize,
    pub hops: u8,
    pub distractors: usize,
    /// Probability that a question refers to its subject only via synonyms.
    pub mismatch: f64,
    /// Probability that the link between the two gold passages is removed.
    pub dropout: f64,
    /// Probability of a yes/no question.
    #[serde(default)]
    pub yes_no: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            questions: 200,
            dev_questions: 200,
            hops: 2,
            distractors: 8,
            mismatch: 0.3,
            dropout: 0.3,
            yes_no: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.hops) {
            return Err(Error::InvalidSpec(format!(
                "hops must be 1 or 2, got {}",
                self.hops
            )));
        }
        for (name, v) in [
            ("mismatch", self.mismatch),
            ("dropout", self.dropout),
            ("yes_no", self.yes_no),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn passages_per_question(&self) -> usize {
        self.hops as usize + self.distractors
    }
}

/// A generated corpus, its questions, and the synonym lexicon.
#[derive(Debug, Clone)]
pub struct SynthSuite {
    pub corpus: Corpus,
    pub records: Vec<PassageRecord>,
    pub questions: Vec<Question>,
    pub lexicon: Lexicon,
}

impl SynthSuite {
    pub fn split(&self, split: Split) -> Vec<Question> {
        self.questions
            .iter()
            .filter(|q| q.split == split)
            .cloned()
            .collect()
    }

    /// Indexes over the suite's corpus, with the lexicon-aware embedder.
    pub fn retriever(&self, depth: usize) -> Result<Retriever> {
        let config = RetrievalConfig {
            depth,
            embedder: Embedder::from_tag(
                "hash-bow-lexicon",
                SUITE_EMBED_DIM,
                Some(self.lexicon.clone()),
            )?,
            ..RetrievalConfig::default()
        };
        Retriever::new(Arc::new(self.corpus.clone()), &config)
    }

    /// Writes `corpus.jsonl`, `train.jsonl`, `dev.jsonl`, and `lexicon.tsv`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus.save(&dir.join("corpus.jsonl"))?;
        save_questions(&dir.join("train.jsonl"), &self.split(Split::Train))?;
        save_questions(&dir.join("dev.jsonl"), &self.split(Split::Dev))?;
        let path = dir.join("lexicon.tsv");
        let mut buf = Vec::new();
        self.lexicon.write(&mut buf).expect("in-memory write");
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    }
}

/// Embedding width for suite retrievers; wide enough that hash collisions
/// rarely outweigh a shared term.
pub const SUITE_EMBED_DIM: usize = 1024;

const RELATIONS: &[&str] = &[
    "architect",
    "founder",
    "director",
    "composer",
    "editor",
    "mentor",
    "patron",
    "designer",
    "captain",
    "curator",
    "sponsor",
    "producer",
];
const ATTRIBUTES: &[&str] = &[
    "birthplace",
    "hometown",
    "emblem",
    "motto",
    "instrument",
    "mascot",
    "harbor",
    "river",
    "color",
    "symbol",
    "anthem",
    "crest",
];
const KINDS: &[&str] = &[
    "city", "band", "ship", "temple", "studio", "guild", "castle", "festival", "journal", "garden",
];
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st",
    "tr", "gl",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "k"];
const RESERVED: &[&str] = &[
    "a",
    "an",
    "the",
    "is",
    "was",
    "of",
    "in",
    "and",
    "its",
    "for",
    "known",
    "it",
    "with",
    "what",
    "who",
    "whose",
    "once",
    "rival",
    "much",
    "like",
    "north",
    "noted",
    "see",
    "also",
    "critics",
    "often",
    "compared",
    "celebrated",
    "traveller",
    "traditions",
    "collections",
    "praised",
];

struct WordGen {
    used: HashSet<String>,
}

impl WordGen {
    fn new() -> Self {
        let mut used: HashSet<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for list in [RELATIONS, ATTRIBUTES, KINDS] {
            used.extend(list.iter().map(|s| s.to_string()));
        }
        WordGen { used }
    }

    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
            }
            w.push_str(CODAS.choose(rng).unwrap());
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Builds passage text while tracking character offsets for anchors.
struct TextBuilder {
    text: String,
    chars: usize,
    anchors: Vec<AnchorRecord>,
}

impl TextBuilder {
    fn new() -> Self {
        TextBuilder {
            text: String::new(),
            chars: 0,
            anchors: Vec::new(),
        }
    }

    fn push(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self.chars += s.chars().count();
        self
    }

    fn mention(&mut self, s: &str, target: Option<&str>) -> &mut Self {
        let start = self.chars;
        self.push(s);
        if let Some(t) = target {
            self.anchors.push(AnchorRecord {
                span: [start, self.chars],
                target: t.to_string(),
            });
        }
        self
    }
}

struct Pools {
    descriptors: Vec<String>,
    synonyms: Vec<String>,
    given: Vec<String>,
    values: Vec<String>,
}

#[derive(Clone)]
struct Entity {
    id: String,
    name: String,
}

fn entity(rng: &mut ChaCha8Rng, words: &mut WordGen, pools: &Pools, id: String) -> Entity {
    let given = pools.given.choose(rng).unwrap();
    let surname = words.word(rng);
    Entity {
        id,
        name: format!("{} {}", capitalize(given), capitalize(&surname)),
    }
}

fn record(e: &Entity, b: TextBuilder) -> PassageRecord {
    PassageRecord {
        id: e.id.clone(),
        title: e.name.clone(),
        text: b.text,
        anchors: b.anchors,
        article_id: None,
        position: None,
    }
}

/// Generate a suite. The result is a pure function of `(spec, seed)`.
pub fn synthesize_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthSuite> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = WordGen::new();
    let pools = Pools {
        descriptors: words.words(&mut rng, 2000),
        synonyms: words.words(&mut rng, 2000),
        given: words.words(&mut rng, 1500),
        values: words.words(&mut rng, 120),
    };
    let lexicon = Lexicon(
        pools
            .synonyms
            .iter()
            .cloned()
            .zip(pools.descriptors.iter().cloned())
            .chain(
                [RESERVED, RELATIONS, ATTRIBUTES]
                    .concat()
                    .into_iter()
                    .map(|w| (w.to_string(), String::new())),
            )
            .collect::<BTreeMap<_, _>>(),
    );

    let total = spec.questions + spec.dev_questions;
    let mut records = Vec::with_capacity(total * spec.passages_per_question());
    let mut questions = Vec::with_capacity(total);
    for g in 0..total {
        let split = if g < spec.questions {
            Split::Train
        } else {
            Split::Dev
        };
        let (recs, q) = generate_group(spec, g, split, &mut rng, &mut words, &pools);
        records.extend(recs);
        questions.push(q);
    }
    let (corpus, _) = Corpus::from_records(records.clone())?;
    Ok(SynthSuite {
        corpus,
        records,
        questions,
        lexicon,
    })
}

fn generate_group(
    spec: &SynthSpec,
    g: usize,
    split: Split,
    rng: &mut ChaCha8Rng,
    words: &mut WordGen,
    pools: &Pools,
) -> (Vec<PassageRecord>, Question) {
    let rel1 = *RELATIONS.choose(rng).unwrap();
    let rel2 = *ATTRIBUTES.choose(rng).unwrap();
    let kind = *KINDS.choose(rng).unwrap();
    let desc: Vec<usize> = rand::seq::index::sample(rng, pools.descriptors.len(), 3).into_vec();
    let (d1, d2, d3) = (
        &pools.descriptors[desc[0]],
        &pools.descriptors[desc[1]],
        &pools.descriptors[desc[2]],
    );
    let answer = pools.values.choose(rng).unwrap().clone();
    let mismatch = rng.gen_bool(spec.mismatch);
    let drop_link = rng.gen_bool(spec.dropout);
    let yes_no = rng.gen_bool(spec.yes_no);
    let asked_value = if rng.gen_bool(0.5) {
        answer.clone()
    } else {
        pools.values.choose(rng).unwrap().clone()
    };

    let prefix = format!("g{g:04}");
    let a = entity(rng, words, pools, format!("{prefix}-a"));
    let b = entity(rng, words, pools, format!("{prefix}-b"));
    let ds: Vec<Entity> = (0..spec.distractors)
        .map(|j| entity(rng, words, pools, format!("{prefix}-d{j:02}")))
        .collect();
    let x = ds.first().cloned();

    let mut out = Vec::new();
    let two_hop = spec.hops == 2;

    let mut ab = TextBuilder::new();
    ab.mention(&a.name, None).push(&format!(
        " is a {d1} {d2} {kind} known for its {d3} traditions. "
    ));
    if two_hop {
        ab.push(&format!("Its {rel1} was "))
            .mention(&b.name, (!drop_link).then_some(b.id.as_str()))
            .push(".");
    } else {
        ab.push(&format!("The {rel2} of "))
            .mention(&a.name, None)
            .push(&format!(" is {answer}."));
    }
    if let Some(x) = &x {
        ab.push(" Critics often compared it with ")
            .mention(&x.name, Some(&x.id))
            .push(".");
    }
    out.push(record(&a, ab));

    if two_hop {
        let mut bb = TextBuilder::new();
        bb.mention(&b.name, None)
            .push(&format!(" was a celebrated traveller. The {rel2} of "))
            .mention(&b.name, None)
            .push(&format!(" is {answer}."));
        out.push(record(&b, bb));
    }

    for (j, d) in ds.iter().enumerate() {
        let mut tb = TextBuilder::new();
        let other = |rng: &mut ChaCha8Rng| -> Option<&Entity> {
            if ds.len() < 2 {
                return None;
            }
            let k = rng.gen_range(0..ds.len() - 1);
            Some(if k >= j { &ds[k + 1] } else { &ds[k] })
        };
        match j {
            0 => {
                let dx = pools.descriptors.choose(rng).unwrap();
                let kx = KINDS.choose(rng).unwrap();
                let dy = pools.descriptors.choose(rng).unwrap();
                tb.mention(&d.name, None)
                    .push(&format!(" is a {dx} {kx} noted for its {dy} collections."));
            }
            1 => {
                tb.mention(&d.name, None).push(&format!(
                    " is a {kind} whose {rel1} once praised the {rel2} of a rival {kind}"
                ));
                if let Some(x) = &x {
                    tb.push(", much like ").mention(&x.name, None);
                }
                tb.push(".");
            }
            2 => {
                // shares the subject's given name and first descriptor
                let given = a.name.split(' ').next().unwrap_or_default();
                let sur = capitalize(&words.word(rng));
                let name = format!("{given} {sur}");
                let k2 = KINDS.choose(rng).unwrap();
                let target = other(rng);
                tb.mention(&name, None)
                    .push(&format!(" is a {d1} {k2}. The {rel1} of "))
                    .mention(&name, None)
                    .push(" was ");
                match target {
                    Some(t) => tb.mention(&t.name, Some(&t.id)),
                    None => tb.push("unknown"),
                };
                tb.push(".");
                let mut r = record(d, tb);
                r.title = name;
                out.push(r);
                continue;
            }
            3 => {
                let k3 = KINDS.choose(rng).unwrap();
                let val = pools.values.choose(rng).unwrap();
                tb.mention(&d.name, None)
                    .push(&format!(" is a {k3} in the north. The {rel2} of "))
                    .mention(&d.name, None)
                    .push(&format!(" is {val}."));
            }
            _ => {
                let dr1 = pools.descriptors.choose(rng).unwrap();
                let dr2 = pools.descriptors.choose(rng).unwrap();
                let kr = KINDS.choose(rng).unwrap();
                let rr = RELATIONS.choose(rng).unwrap();
                tb.mention(&d.name, None).push(&format!(
                    " is a {dr1} {kr} known for its {dr2} traditions. The {rr} of it was "
                ));
                match other(rng) {
                    Some(t) => tb.mention(&t.name, Some(&t.id)),
                    None => tb.push("unknown"),
                };
                tb.push(".");
            }
        }
        out.push(record(d, tb));
    }

    let subject = if mismatch {
        format!(
            "the {} {} {} {kind}",
            pools.synonyms[desc[0]], pools.synonyms[desc[1]], pools.synonyms[desc[2]]
        )
    } else {
        a.name.clone()
    };
    let chain = if two_hop {
        format!("the {rel2} of the {rel1} of {subject}")
    } else {
        format!("the {rel2} of {subject}")
    };
    let (text, gold_answer) = if yes_no {
        let ans = if asked_value == answer {
            Answer::Yes
        } else {
            Answer::No
        };
        (format!("Is {chain} {asked_value}?"), ans)
    } else {
        (format!("What is {chain}?"), Answer::Text(answer))
    };
    let mut gold = vec![a.id.clone()];
    if two_hop {
        gold.push(b.id.clone());
    }
    let q = Question {
        id: format!("q{g:04}"),
        text,
        gold_evidence: gold,
        gold_answer,
        split,
    };
    (out, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn spec(
        questions: usize,
        hops: u8,
        distractors: usize,
        mismatch: f64,
        dropout: f64,
    ) -> SynthSpec {
        SynthSpec {
            questions,
            dev_questions: 0,
            hops,
            distractors,
            mismatch,
            dropout,
            yes_no: 0.0,
        }
    }

    /// Breadth-first search over the anchor graph.
    fn reachable(corpus: &Corpus, from: &str, to: &str) -> bool {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([from.to_string()]);
        while let Some(id) = queue.pop_front() {
            if id == to {
                return true;
            }
            if !seen.insert(id.clone()) {
                continue;
            }
            for a in corpus.links(&id) {
                queue.push_back(a.target.clone());
            }
        }
        false
    }

    #[test]
    fn single_two_hop_instance() {
        let s = synthesize_corpus(&spec(1, 2, 5, 0.0, 0.0), 7).unwrap();
        assert_eq!(s.corpus.len(), 7);
        assert_eq!(s.questions.len(), 1);
        let q = &s.questions[0];
        assert_eq!(q.gold_evidence.len(), 2);
        let (a, b) = (&q.gold_evidence[0], &q.gold_evidence[1]);
        assert!(s.corpus.links(a).iter().any(|l| &l.target == b));
        assert!(reachable(&s.corpus, a, b));
    }

    #[test]
    fn full_dropout_removes_gold_links() {
        let s = synthesize_corpus(&spec(20, 2, 5, 0.0, 1.0), 3).unwrap();
        for q in &s.questions {
            let (a, b) = (&q.gold_evidence[0], &q.gold_evidence[1]);
            assert!(!s.corpus.links(a).iter().any(|l| &l.target == b));
            assert!(!s.corpus.links(b).iter().any(|l| &l.target == a));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let sp = spec(5, 2, 6, 0.3, 0.3);
        let x = synthesize_corpus(&sp, 11).unwrap();
        let y = synthesize_corpus(&sp, 11).unwrap();
        let (mut bx, mut by) = (Vec::new(), Vec::new());
        x.corpus.write_jsonl(&mut bx).unwrap();
        y.corpus.write_jsonl(&mut by).unwrap();
        assert_eq!(bx, by);
        assert_eq!(x.questions, y.questions);
        let z = synthesize_corpus(&sp, 12).unwrap();
        assert_ne!(x.questions, z.questions);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(synthesize_corpus(&spec(1, 3, 1, 0.0, 0.0), 0).is_err());
        assert!(synthesize_corpus(&spec(1, 2, 1, 1.5, 0.0), 0).is_err());
        assert!(synthesize_corpus(&spec(1, 2, 1, 0.0, -0.1), 0).is_err());
        assert!(synthesize_corpus(&spec(1, 2, 1, f64::NAN, 0.0), 0).is_err());
    }

    #[test]
    fn mismatched_questions_avoid_corpus_vocabulary_for_subject() {
        let s = synthesize_corpus(&spec(10, 2, 5, 1.0, 0.0), 5).unwrap();
        for q in &s.questions {
            let oov: Vec<String> = crate::text::tokenize(&q.text)
                .into_iter()
                .filter(|t| s.corpus.df(t) == 0 && t != "what")
                .collect();
            assert_eq!(oov.len(), 3, "{}", q.text);
            assert!(oov.iter().all(|t| s.lexicon.0.contains_key(t)));
        }
    }

    #[test]
    fn single_hop_has_one_gold_with_answer() {
        let s = synthesize_corpus(&spec(3, 1, 4, 0.0, 0.0), 1).unwrap();
        for q in &s.questions {
            assert_eq!(q.gold_evidence.len(), 1);
            let p = s.corpus.get(&q.gold_evidence[0]).unwrap();
            assert!(p.content.contains(q.gold_answer.as_text()));
        }
    }
}
