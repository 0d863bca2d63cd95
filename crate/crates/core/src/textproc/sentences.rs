use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    pub start_char: usize,
    pub end_char: usize,
}

impl SentenceSpan {
    pub fn contains(&self, char_offset: usize) -> bool {
        self.start_char <= char_offset && char_offset < self.end_char
    }
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 8] = ['"', '\'', ')', ']', '”', '’', '»', '}'];
const OPENERS: [char; 8] = ['"', '\'', '(', '[', '“', '‘', '«', '{'];

/// Rule-based sentence segmentation with the builtin abbreviation list.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    split_sentences_with(text, Lexicon::builtin())
}

/// A boundary sits after a run of `.`/`!`/`?` (plus closing quotes or
/// brackets) that is followed by whitespace and then, past any opening
/// quotes, an uppercase letter or a digit. A period ending a listed
/// abbreviation or a capital initial ("J.", "J.R.R.") is not a boundary.
///
/// Spans cover every non-whitespace char exactly once and never start or
/// end on whitespace.
pub fn split_sentences_with(text: &str, lexicon: &Lexicon) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();

    let Some(mut start) = chars.iter().position(|c| !c.is_whitespace()) else {
        return spans;
    };

    let mut i = start;
    while i < n {
        if !TERMINATORS.contains(&chars[i]) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && (TERMINATORS.contains(&chars[j]) || CLOSERS.contains(&chars[j])) {
            j += 1;
        }
        let term_end = j;
        if j >= n || !chars[j].is_whitespace() {
            i = j.max(i + 1);
            continue;
        }
        let mut k = j;
        while k < n && chars[k].is_whitespace() {
            k += 1;
        }
        let mut m = k;
        while m < n && OPENERS.contains(&chars[m]) {
            m += 1;
        }
        let starts_sentence = m < n && (chars[m].is_uppercase() || chars[m].is_numeric());
        let last_terminator = chars[..term_end]
            .iter()
            .rposition(|c| TERMINATORS.contains(c))
            .unwrap_or(i);
        let abbreviated =
            chars[last_terminator] == '.' && ends_with_abbreviation(&chars[..=last_terminator], lexicon);

        if starts_sentence && !abbreviated {
            spans.push(SentenceSpan {
                index: spans.len(),
                start_char: start,
                end_char: term_end,
            });
            start = k;
        }
        i = k;
    }

    if let Some(last) = chars.iter().rposition(|c| !c.is_whitespace()) {
        if last >= start {
            spans.push(SentenceSpan {
                index: spans.len(),
                start_char: start,
                end_char: last + 1,
            });
        }
    }
    spans
}

/// Whether the whitespace-delimited word ending at the final `.` of
/// `prefix` is a known abbreviation or a run of single-letter initials.
fn ends_with_abbreviation(prefix: &[char], lexicon: &Lexicon) -> bool {
    let word_start = prefix
        .iter()
        .rposition(|c| c.is_whitespace())
        .map_or(0, |p| p + 1);
    let word: String = prefix[word_start..]
        .iter()
        .skip_while(|c| OPENERS.contains(c))
        .collect();
    let lower = word.to_lowercase();
    if lexicon.is_abbreviation(&lower) {
        return true;
    }
    // initials: capital '.' (capital '.')*
    let body = &word[..word.len() - 1];
    !body.is_empty()
        && body
            .split('.')
            .all(|part| part.chars().count() == 1 && part.chars().all(char::is_uppercase))
}
