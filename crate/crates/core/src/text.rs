//! Text utilities shared across the pipeline: the counting tokenizer,
//! sentence segmentation and stable content hashing.
//!
//! The tokenizer is deliberately model-independent. A token is either a
//! maximal run of alphanumeric characters or a single punctuation
//! character; whitespace separates tokens and is never a token itself.

use std::ops::Range;

use sha2::{Digest, Sha256};

/// Tokens of `text` under the counting tokenizer, with their byte ranges.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            spans.push(s..i);
        }
        if !c.is_whitespace() {
            spans.push(i..i + c.len_utf8());
        }
    }
    if let Some(s) = word_start {
        spans.push(s..text.len());
    }
    spans
}

pub fn count_tokens(text: &str) -> usize {
    token_spans(text).len()
}

/// Lowercased alphanumeric tokens; punctuation is dropped.
pub fn word_tokens(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| &text[r])
        .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
        .map(str::to_lowercase)
        .collect()
}

/// Truncate `text` so that it holds at most `max_tokens` tokens.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let spans = token_spans(text);
    if spans.len() <= max_tokens {
        return text;
    }
    if max_tokens == 0 {
        return "";
    }
    &text[..spans[max_tokens - 1].end]
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// Byte ranges of the sentences in `text`, trimmed of surrounding
/// whitespace.
///
/// A sentence ends after `.`, `!` or `?` (plus any closing quotes or
/// brackets) when followed by whitespace and then a character that is not
/// a lowercase letter, or by the end of the text.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && is_closer(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let at_end = k == chars.len();
            let boundary = at_end || (k > j && !chars[k].1.is_lowercase());
            if boundary {
                push_trimmed(text, start..end, &mut out);
                start = end;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(text, start..text.len(), &mut out);
    out
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail < slice.len() {
        out.push(range.start + lead..range.end - trail);
    }
}

pub fn sentences(text: &str) -> Vec<&str> {
    sentence_spans(text).into_iter().map(|r| &text[r]).collect()
}

pub fn first_sentence(text: &str) -> &str {
    sentence_spans(text)
        .into_iter()
        .next()
        .map_or("", |r| &text[r])
}

/// Case-fold and collapse internal whitespace.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Whether `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_phrase(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

pub(crate) const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "had",
    "has", "have", "he", "her", "his", "how", "in", "is", "it", "its", "of", "on", "or", "she",
    "that", "the", "their", "this", "to", "was", "were", "what", "when", "where", "which", "who",
    "whom", "whose", "why", "with",
];

pub fn is_stopword(w: &str) -> bool {
    STOPWORDS.binary_search(&w).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        let t: Vec<_> = token_spans("Hello, world!")
            .into_iter()
            .map(|r| &"Hello, world!"[r])
            .collect();
        assert_eq!(t, ["Hello", ",", "world", "!"]);
        assert_eq!(count_tokens("  "), 0);
        assert_eq!(count_tokens("Gualala’s price: $580,000"), 9);
    }

    #[test]
    fn stopwords_sorted() {
        let mut s = STOPWORDS.to_vec();
        s.sort_unstable();
        assert_eq!(s, STOPWORDS);
    }

    #[test]
    fn sentence_segmentation() {
        let text = "A. B. C.";
        assert_eq!(sentences(text), ["A.", "B.", "C."]);
        let text = "He said \"stop.\" Then left. e.g. lowercase stays";
        assert_eq!(sentences(text), ["He said \"stop.\"", "Then left. e.g. lowercase stays"]);
        assert_eq!(sentences("no terminal"), ["no terminal"]);
        assert!(sentences("   ").is_empty());
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_tokens("one two, three", 3), "one two,");
        assert_eq!(truncate_tokens("one", 3), "one");
    }

    #[test]
    fn phrase_containment() {
        let h = word_tokens("Drug sales for Eli Lilly's Mounjaro");
        assert!(contains_phrase(&h, &word_tokens("eli lilly")));
        assert!(!contains_phrase(&h, &word_tokens("lilly eli")));
        assert!(!contains_phrase(&h, &[]));
    }

    #[test]
    fn key_normalization() {
        assert_eq!(normalize_key("  Eli   LILLY "), "eli lilly");
    }
}
