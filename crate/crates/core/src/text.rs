//! Tokenization shared by indexing, features, and answer metrics.
//!
//! Text is processed cluster by cluster: a base character plus any trailing
//! combining marks is NFKC-normalized and lowercased, and maximal runs of
//! alphanumeric output characters become terms. Every term remembers the
//! character (not byte) range of the original text it came from, which is
//! what answer spans and anchor spans are expressed in.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// A term together with its `[start, end)` character range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub term: String,
    pub start: usize,
    pub end: usize,
}

pub fn token_spans(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut current: Option<TokenSpan> = None;
    let mut i = 0;
    let mut cluster = String::new();
    while i < chars.len() {
        let start = i;
        i += 1;
        while i < chars.len() && is_combining_mark(chars[i]) {
            i += 1;
        }
        let end = i;
        cluster.clear();
        cluster.extend(&chars[start..end]);
        for c in cluster.nfkc().flat_map(char::to_lowercase) {
            if c.is_alphanumeric() {
                match current.as_mut() {
                    Some(tok) => {
                        tok.term.push(c);
                        tok.end = end;
                    }
                    None => {
                        current = Some(TokenSpan {
                            term: c.to_string(),
                            start,
                            end,
                        })
                    }
                }
            } else if let Some(tok) = current.take() {
                out.push(tok);
            }
        }
    }
    out.extend(current);
    out
}

/// Lowercased, NFKC-normalized terms split on non-alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|t| t.term).collect()
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by character offsets. Out-of-range bounds are clamped.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let mut indices = s
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(s.len()));
    let mut byte_start = s.len();
    let mut byte_end = s.len();
    for (ci, b) in (&mut indices).enumerate() {
        if ci == start {
            byte_start = b;
        }
        if ci == end {
            byte_end = b;
            break;
        }
    }
    if byte_end < byte_start {
        byte_end = byte_start;
    }
    &s[byte_start..byte_end]
}

/// 64-bit FNV-1a, used wherever a stable hash of a term is needed.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_possessive() {
        assert_eq!(tokenize("Pitof's Catwoman"), vec!["pitof", "s", "catwoman"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn collapses_punctuation_and_space() {
        assert_eq!(tokenize("Video–Game  2004"), vec!["video", "game", "2004"]);
    }

    #[test]
    fn nfkc_folds_compatibility_forms() {
        assert_eq!(tokenize("ﬁne Ｃat"), vec!["fine", "cat"]);
        assert_eq!(tokenize("Cafe\u{301} noir"), vec!["café", "noir"]);
    }

    #[test]
    fn spans_are_char_offsets() {
        let spans = token_spans("Élan, vital");
        assert_eq!(spans[0].start, 0);
        assert_eq!(spans[0].end, 4);
        assert_eq!(spans[1].start, 6);
        assert_eq!(char_slice("Élan, vital", 6, 11), "vital");
    }

    #[test]
    fn char_slice_clamps() {
        assert_eq!(char_slice("abc", 1, 10), "bc");
        assert_eq!(char_slice("abc", 5, 6), "");
    }
}
