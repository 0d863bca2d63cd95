//! Deterministic text primitives shared by the metrics and the heuristics.
//!
//! All offsets are Unicode scalar-value (char) indices into the original
//! text, matching the SQuAD convention.

mod normalize;
mod sentences;
mod tfidf;
mod tokenize;

pub use normalize::normalize_answer;
pub use sentences::{split_sentences, split_sentences_with, SentenceSpan};
pub use tfidf::{cosine, SparseVector, TfidfModel};
pub use tokenize::{tokenize, Token};

/// Number of chars in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring of `text` between char offsets `start..end`, or `None` when the
/// range falls outside the text.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}
