//! Per-sample bias attributes.
//!
//! Each heuristic maps a sample to a finite, non-negative scalar. Positional
//! heuristics use the first-listed gold answer.

pub mod fallback;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationSet, Dataset, QaSample, SampleAnnotation};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::textproc::{cosine, split_sentences_with, tokenize, TfidfModel};
use crate::TOOLKIT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicId {
    WordDist,
    SimWord,
    AnsPos,
    CosSim,
    AnsLen,
    SimEnts,
    SubjPos,
}

impl HeuristicId {
    pub const ALL: [HeuristicId; 7] = [
        HeuristicId::WordDist,
        HeuristicId::SimWord,
        HeuristicId::AnsPos,
        HeuristicId::CosSim,
        HeuristicId::AnsLen,
        HeuristicId::SimEnts,
        HeuristicId::SubjPos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeuristicId::WordDist => "word-dist",
            HeuristicId::SimWord => "sim-word",
            HeuristicId::AnsPos => "ans-pos",
            HeuristicId::CosSim => "cos-sim",
            HeuristicId::AnsLen => "ans-len",
            HeuristicId::SimEnts => "sim-ents",
            HeuristicId::SubjPos => "subj-pos",
        }
    }

    pub fn needs_tfidf(self) -> bool {
        self == HeuristicId::CosSim
    }

    pub fn needs_annotations(self) -> bool {
        matches!(self, HeuristicId::SimEnts | HeuristicId::SubjPos)
    }
}

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeuristicId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeuristicId::ALL
            .iter()
            .copied()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown heuristic `{s}`")))
    }
}

/// Inputs some heuristics need beyond the sample itself.
#[derive(Clone, Copy)]
pub struct HeuristicDeps<'a> {
    pub lexicon: &'a Lexicon,
    pub tfidf: Option<&'a TfidfModel>,
    pub annotations: Option<&'a AnnotationSet>,
    /// Use the rule-based annotator where no sidecar entry exists.
    pub fallback_annotator: bool,
}

impl Default for HeuristicDeps<'_> {
    fn default() -> Self {
        HeuristicDeps {
            lexicon: Lexicon::builtin(),
            tfidf: None,
            annotations: None,
            fallback_annotator: false,
        }
    }
}

fn attr_err(sample: &QaSample, message: impl Into<String>) -> Error {
    Error::Attribute {
        id: sample.id.clone(),
        message: message.into(),
    }
}

/// Minimum number of tokens strictly between a non-stopword question word
/// occurring in the context and the canonical answer span.
pub fn attr_word_dist(sample: &QaSample, lexicon: &Lexicon) -> Result<f64> {
    let context = tokenize(&sample.context);
    let answer = sample.canonical_answer();
    let (a_start, a_end) = (answer.start_char, answer.end_char());
    let inside: Vec<usize> = context
        .iter()
        .enumerate()
        .filter(|(_, t)| t.start_char < a_end && t.end_char > a_start)
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return Err(attr_err(sample, "answer span covers no context token"));
    };

    let question_words: HashSet<String> = tokenize(&sample.question)
        .into_iter()
        .map(|t| t.lower)
        .filter(|w| !lexicon.is_stopword(w))
        .collect();

    let best = context
        .iter()
        .enumerate()
        .filter(|(_, t)| question_words.contains(&t.lower))
        .map(|(i, _)| {
            if i < first {
                first - i - 1
            } else if i > last {
                i - last - 1
            } else {
                0
            }
        })
        .min()
        .unwrap_or(context.len());
    Ok(best as f64)
}

/// Size of the intersection of question and context word sets.
pub fn attr_sim_word(sample: &QaSample) -> f64 {
    let question: HashSet<String> = tokenize(&sample.question).into_iter().map(|t| t.lower).collect();
    let context: HashSet<String> = tokenize(&sample.context).into_iter().map(|t| t.lower).collect();
    question.intersection(&context).count() as f64
}

/// 0-based index of the sentence holding the canonical answer.
pub fn attr_ans_pos(sample: &QaSample, lexicon: &Lexicon) -> Result<f64> {
    let answer = sample.canonical_answer();
    let lead = answer.text.chars().take_while(|c| c.is_whitespace()).count();
    let offset = answer.start_char + lead;
    split_sentences_with(&sample.context, lexicon)
        .iter()
        .find(|s| s.contains(offset))
        .map(|s| s.index as f64)
        .ok_or_else(|| attr_err(sample, format!("answer offset {offset} lies outside every sentence")))
}

/// TF-IDF cosine between question and canonical answer text.
pub fn attr_cos_sim(sample: &QaSample, model: &TfidfModel) -> f64 {
    cosine(
        &model.vectorize(&sample.question),
        &model.vectorize(&sample.canonical_answer().text),
    )
}

/// Token count of the canonical answer.
pub fn attr_ans_len(sample: &QaSample) -> f64 {
    tokenize(&sample.canonical_answer().text).len() as f64
}

fn annotation_for<'a>(
    sample: &QaSample,
    deps: &'a HeuristicDeps<'_>,
    owned: &'a mut Option<SampleAnnotation>,
) -> Result<&'a SampleAnnotation> {
    if let Some(found) = deps.annotations.and_then(|a| a.get(&sample.id)) {
        return Ok(found);
    }
    if deps.fallback_annotator {
        return Ok(owned.insert(fallback::annotate(sample, deps.lexicon)));
    }
    Err(attr_err(sample, "no annotation and no fallback annotator configured"))
}

/// Number of context entities whose label matches the question type.
pub fn attr_sim_ents(sample: &QaSample, deps: &HeuristicDeps<'_>) -> Result<f64> {
    let mut owned = None;
    let annotation = annotation_for(sample, deps, &mut owned)?;
    let question: Vec<String> = tokenize(&sample.question).into_iter().map(|t| t.lower).collect();
    let question: Vec<&str> = question.iter().map(String::as_str).collect();
    let count = match deps.lexicon.entity_mapping().labels_for(&question) {
        Some(labels) => annotation
            .context_entities
            .iter()
            .filter(|e| labels.contains(&e.label))
            .count(),
        None => annotation.context_entities.len(),
    };
    Ok(count as f64)
}

/// Start offsets of non-overlapping, case-insensitive occurrences of
/// `needle` in `haystack`, scanning left to right.
fn find_case_insensitive(haystack: &str, needle: &str) -> Vec<usize> {
    let fold = |s: &str| -> Vec<char> {
        s.chars().map(|c| c.to_lowercase().next().unwrap_or(c)).collect()
    };
    let (hay, pat) = (fold(haystack), fold(needle));
    let mut hits = Vec::new();
    if pat.is_empty() {
        return hits;
    }
    let mut i = 0;
    while i + pat.len() <= hay.len() {
        if hay[i..i + pat.len()] == pat[..] {
            hits.push(i);
            i += pat.len();
        } else {
            i += 1;
        }
    }
    hits
}

/// 0 when the answer precedes every occurrence of the question subject (or
/// the subject is absent), 1 after one occurrence, 2 after several.
pub fn attr_subj_pos(sample: &QaSample, deps: &HeuristicDeps<'_>) -> Result<f64> {
    let mut owned = None;
    let annotation = annotation_for(sample, deps, &mut owned)?;
    let subject = match &annotation.subject {
        Some(s) => s.text.clone(),
        None if deps.fallback_annotator => match fallback::subject(&sample.question, deps.lexicon) {
            Some(s) => s.text,
            None => return Ok(0.0),
        },
        None => return Err(attr_err(sample, "annotation has no question subject")),
    };
    let answer_start = sample.canonical_answer().start_char;
    let before = find_case_insensitive(&sample.context, &subject)
        .into_iter()
        .filter(|&p| p < answer_start)
        .count();
    Ok(before.min(2) as f64)
}

pub fn attribute(sample: &QaSample, heuristic: HeuristicId, deps: &HeuristicDeps<'_>) -> Result<f64> {
    let value = match heuristic {
        HeuristicId::WordDist => attr_word_dist(sample, deps.lexicon)?,
        HeuristicId::SimWord => attr_sim_word(sample),
        HeuristicId::AnsPos => attr_ans_pos(sample, deps.lexicon)?,
        HeuristicId::CosSim => {
            let model = deps
                .tfidf
                .ok_or_else(|| Error::Config("cos-sim requires a fitted TF-IDF model".into()))?;
            attr_cos_sim(sample, model)
        }
        HeuristicId::AnsLen => attr_ans_len(sample),
        HeuristicId::SimEnts => attr_sim_ents(sample, deps)?,
        HeuristicId::SubjPos => attr_subj_pos(sample, deps)?,
    };
    debug_assert!(value.is_finite() && value >= 0.0);
    Ok(value)
}

/// Shipped thresholds per heuristic, used by `--threshold auto`.
pub const DEFAULT_THRESHOLDS: &str = include_str!("../../data/default_thresholds.json");

/// The shipped threshold for `heuristic`; `ans-pos` has none.
pub fn default_threshold(heuristic: HeuristicId) -> Option<f64> {
    let table: IndexMap<HeuristicId, f64> =
        serde_json::from_str(DEFAULT_THRESHOLDS).expect("shipped threshold table parses");
    table.get(&heuristic).copied()
}

/// Fits the TF-IDF model on the unique contexts of `dataset`.
pub fn fit_tfidf_on(dataset: &Dataset) -> Result<TfidfModel> {
    let contexts: Vec<&str> = dataset.samples.iter().map(|s| s.context.as_str()).collect();
    TfidfModel::fit(&contexts)
}

/// Attribute values of one heuristic over a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    pub heuristic: HeuristicId,
    pub dataset_name: String,
    pub toolkit_version: String,
    pub config_digest: String,
    pub values: IndexMap<String, f64>,
}

impl AttributeTable {
    pub fn get(&self, id: &str) -> Result<f64> {
        self.values.get(id).copied().ok_or_else(|| Error::Attribute {
            id: id.to_string(),
            message: format!("no {} value in attribute table", self.heuristic),
        })
    }

    /// Fails unless every dataset sample has a value.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        for s in &dataset.samples {
            self.get(&s.id)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(source: &str, text: &str) -> Result<Self> {
        let table: AttributeTable = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            byte: 0,
            message: e.to_string(),
        })?;
        if let Some((id, v)) = table.values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite attribute {v} for `{id}`")));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values.values().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

/// Computes `heuristic` for every sample. Work is spread over the current
/// rayon pool; the table keeps dataset order and, when several samples
/// fail, the error of the earliest one is returned.
pub fn compute_attributes(
    dataset: &Dataset,
    heuristic: HeuristicId,
    deps: &HeuristicDeps<'_>,
) -> Result<AttributeTable> {
    if heuristic.needs_tfidf() && deps.tfidf.is_none() {
        return Err(Error::Config(format!("{heuristic} requires a fitted TF-IDF model")));
    }
    if heuristic.needs_annotations() && deps.annotations.is_none() && !deps.fallback_annotator {
        return Err(Error::Config(format!(
            "{heuristic} requires an annotation sidecar or the fallback annotator"
        )));
    }
    let results: Vec<Result<f64>> = dataset
        .samples
        .par_iter()
        .map(|s| attribute(s, heuristic, deps))
        .collect();
    let mut values = IndexMap::with_capacity(dataset.len());
    for (sample, value) in dataset.samples.iter().zip(results) {
        values.insert(sample.id.clone(), value?);
    }
    Ok(AttributeTable {
        heuristic,
        dataset_name: dataset.name.clone(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config_digest: deps.lexicon.digest().to_string(),
        values,
    })
}
