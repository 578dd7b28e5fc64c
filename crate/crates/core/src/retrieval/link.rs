use std::fmt;

use super::{Hit, RankedList};
use crate::corpus::{Anchor, Corpus};
use crate::error::{Error, Result};

/// Textual reference to one anchor: `<source id>#<start>-<end>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnchorRef {
    pub source: String,
    pub span: (usize, usize),
}

impl AnchorRef {
    pub fn new(source: &str, anchor: &Anchor) -> Self {
        AnchorRef {
            source: source.to_string(),
            span: anchor.span,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::UnresolvedAnchor(s.to_string());
        let (source, span) = s.rsplit_once('#').ok_or_else(bad)?;
        let (a, b) = span.split_once('-').ok_or_else(bad)?;
        Ok(AnchorRef {
            source: source.to_string(),
            span: (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?),
        })
    }
}

impl fmt::Display for AnchorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}-{}", self.source, self.span.0, self.span.1)
    }
}

/// Follow an anchor of `source`: a single-entry list holding its target.
pub fn link_search(corpus: &Corpus, source: &str, anchor: &Anchor) -> Result<RankedList> {
    let present = corpus.links(source).iter().any(|a| a == anchor);
    if !present {
        return Err(Error::UnresolvedAnchor(format!(
            "{source}#{}-{}",
            anchor.span.0, anchor.span.1
        )));
    }
    let target = corpus
        .index_of(&anchor.target)
        .ok_or_else(|| Error::UnknownPassage(anchor.target.clone()))?;
    Ok(RankedList {
        hits: vec![Hit {
            passage: target,
            score: 1.0,
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn corpus() -> Corpus {
        let src = r#"{"id":"P2","title":"Pitof","text":"directed Catwoman and Catwoman","anchors":[{"span":[9,17],"target":"P3"},{"span":[22,30],"target":"P3"}]}
{"id":"P3","title":"Catwoman (video game)","text":"a game"}
{"id":"P4","title":"Other","text":"nothing"}
"#;
        parse_corpus(src.as_bytes()).unwrap().0
    }

    #[test]
    fn follows_anchor_to_target() {
        let c = corpus();
        let a = &c.links("P2")[0];
        let list = link_search(&c, "P2", a).unwrap();
        assert_eq!(list.ids(&c), vec!["P3"]);
        assert_eq!(list.hits[0].score, 1.0);
    }

    #[test]
    fn two_anchors_same_target() {
        let c = corpus();
        for a in c.links("P2") {
            assert_eq!(link_search(&c, "P2", a).unwrap().ids(&c), vec!["P3"]);
        }
    }

    #[test]
    fn foreign_anchor_rejected() {
        let c = corpus();
        let a = c.links("P2")[0].clone();
        assert!(link_search(&c, "P4", &a).is_err());
    }

    #[test]
    fn reference_round_trip() {
        let r = AnchorRef {
            source: "doc#1".into(),
            span: (3, 9),
        };
        assert_eq!(r.to_string(), "doc#1#3-9");
        assert_eq!(AnchorRef::parse(&r.to_string()).unwrap(), r);
        assert!(AnchorRef::parse("nohash").is_err());
    }
}
