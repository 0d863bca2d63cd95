use serde::{Deserialize, Serialize};

/// A maximal run of letters or digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub lower: String,
    pub start_char: usize,
    pub end_char: usize,
}

/// Split `text` into maximal alphanumeric runs; everything else is a
/// separator and is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (start_char, start_byte)

    let mut flush = |start: (usize, usize), end_char: usize, end_byte: usize| {
        let piece = &text[start.1..end_byte];
        tokens.push(Token {
            text: piece.to_string(),
            lower: piece.to_lowercase(),
            start_char: start.0,
            end_char,
        });
    };

    let mut n_chars = 0;
    for (ci, (bi, ch)) in text.char_indices().enumerate() {
        n_chars = ci + 1;
        if ch.is_alphanumeric() {
            if current.is_none() {
                current = Some((ci, bi));
            }
        } else if let Some(start) = current.take() {
            flush(start, ci, bi);
        }
    }
    if let Some(start) = current.take() {
        flush(start, n_chars, text.len());
    }
    tokens
}
