//! Rule-based stand-in for a trained NER and parser.
//!
//! Entities are maximal runs of capitalized tokens separated only by
//! whitespace, with a sentence-initial token dropped from the run, labeled
//! FB-OTHER. Digit tokens become DATE when they look like a year and
//! CARDINAL otherwise. The question subject is the first run of tokens after
//! the wh-word that are neither stopwords nor listed verbs.

use crate::corpus::{EntitySpan, QaSample, SampleAnnotation, SubjectSpan};
use crate::lexicon::{is_wh_word, EntityLabel, Lexicon};
use crate::textproc::{char_slice, split_sentences_with, tokenize, Token};

fn is_capitalized(tok: &Token) -> bool {
    tok.text.chars().next().is_some_and(char::is_uppercase)
}

fn is_digits(tok: &Token) -> bool {
    tok.text.chars().all(|c| c.is_ascii_digit())
}

fn looks_like_year(tok: &Token) -> bool {
    tok.text.len() == 4 && tok.text.parse::<u32>().is_ok_and(|y| (1000..=2100).contains(&y))
}

fn whitespace_between(text: &str, a: &Token, b: &Token) -> bool {
    char_slice(text, a.end_char, b.start_char)
        .is_some_and(|gap| gap.chars().all(char::is_whitespace))
}

pub fn entities(text: &str, lexicon: &Lexicon) -> Vec<EntitySpan> {
    let tokens = tokenize(text);
    let sentences = split_sentences_with(text, lexicon);
    let mut initial = vec![false; tokens.len()];
    let mut s = 0;
    let mut prev_sentence = usize::MAX;
    for (i, tok) in tokens.iter().enumerate() {
        while s + 1 < sentences.len() && tok.start_char >= sentences[s].end_char {
            s += 1;
        }
        if s != prev_sentence {
            initial[i] = true;
            prev_sentence = s;
        }
    }

    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if is_digits(tok) {
            let label = if looks_like_year(tok) {
                EntityLabel::Date
            } else {
                EntityLabel::Cardinal
            };
            out.push(EntitySpan {
                start_char: tok.start_char,
                end_char: tok.end_char,
                label,
            });
            i += 1;
            continue;
        }
        if !is_capitalized(tok) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < tokens.len()
            && is_capitalized(&tokens[j])
            && !initial[j]
            && whitespace_between(text, &tokens[j - 1], &tokens[j])
        {
            j += 1;
        }
        let first = if initial[i] { i + 1 } else { i };
        if first < j {
            out.push(EntitySpan {
                start_char: tokens[first].start_char,
                end_char: tokens[j - 1].end_char,
                label: EntityLabel::FbOther,
            });
        }
        i = j;
    }
    out
}

pub fn subject(question: &str, lexicon: &Lexicon) -> Option<SubjectSpan> {
    let tokens = tokenize(question);
    let after_wh = tokens
        .iter()
        .position(|t| is_wh_word(&t.lower))
        .map_or(0, |p| p + 1);
    let content = |t: &Token| !lexicon.is_stopword(&t.lower) && !lexicon.is_verb(&t.lower);
    let start = (after_wh..tokens.len()).find(|&i| content(&tokens[i]))?;
    let end = (start..tokens.len())
        .take_while(|&i| content(&tokens[i]))
        .last()
        .unwrap_or(start);
    let (s, e) = (tokens[start].start_char, tokens[end].end_char);
    Some(SubjectSpan {
        text: char_slice(question, s, e)?.to_string(),
        start_char: s,
    })
}

pub fn annotate(sample: &QaSample, lexicon: &Lexicon) -> SampleAnnotation {
    SampleAnnotation {
        context_entities: entities(&sample.context, lexicon),
        question_entities: entities(&sample.question, lexicon),
        subject: subject(&sample.question, lexicon),
    }
}
