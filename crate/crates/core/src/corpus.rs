//! SQuAD-style datasets, prediction files and annotation sidecars.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::EntityLabel;
use crate::textproc::char_len;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    #[serde(rename = "answer_start")]
    pub start_char: usize,
}

impl AnswerSpan {
    pub fn end_char(&self) -> usize {
        self.start_char + char_len(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSample {
    pub id: String,
    pub title: Option<String>,
    pub context: String,
    pub question: String,
    pub answers: Vec<AnswerSpan>,
}

impl QaSample {
    /// The first-listed gold answer; positional heuristics use this one.
    pub fn canonical_answer(&self) -> &AnswerSpan {
        &self.answers[0]
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<QaSample>,
}

/// A loaded value together with the non-fatal issues found while loading.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Loaded<T> {
    fn new(value: T, warnings: Vec<String>) -> Self {
        for w in &warnings {
            warn!("{w}");
        }
        Loaded { value, warnings }
    }
}

// SQuAD v1.1 wire format.
#[derive(Serialize, Deserialize)]
struct SquadFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    data: Vec<SquadArticle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct SquadArticle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Serialize, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Serialize, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<AnswerSpan>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        byte: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn find_all(haystack: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    haystack
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

/// Checks the declared offset of `answer`; when it is wrong, relocates the
/// text if it occurs exactly once in the context.
fn check_offset(
    id: &str,
    context: &[char],
    answer: &mut AnswerSpan,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let needle: Vec<char> = answer.text.chars().collect();
    if needle.is_empty() {
        return Err(Error::Validation(format!("sample `{id}`: empty answer text")));
    }
    let end = answer.start_char + needle.len();
    if end <= context.len() && context[answer.start_char..end] == needle[..] {
        return Ok(());
    }
    match find_all(context, &needle)[..] {
        [found] => {
            warnings.push(format!(
                "sample `{id}`: answer {:?} declared at {} found at {}; offset repaired",
                answer.text, answer.start_char, found
            ));
            answer.start_char = found;
            Ok(())
        }
        [] => Err(Error::Validation(format!(
            "sample `{id}`: answer {:?} at offset {} does not match and does not occur in the context",
            answer.text, answer.start_char
        ))),
        ref many => Err(Error::Validation(format!(
            "sample `{id}`: answer {:?} at offset {} does not match and occurs {} times in the context",
            answer.text,
            answer.start_char,
            many.len()
        ))),
    }
}

impl Dataset {
    /// Parses SQuAD v1.1 JSON text. `source` names the input in messages.
    pub fn from_squad_json(name: &str, source: &str, text: &str) -> Result<Loaded<Dataset>> {
        let file: SquadFile = parse_json(source, text)?;
        let mut warnings = Vec::new();
        let mut seen = HashSet::new();
        let mut samples = Vec::new();
        for article in file.data {
            for paragraph in article.paragraphs {
                let context_chars: Vec<char> = paragraph.context.chars().collect();
                for qa in paragraph.qas {
                    if !seen.insert(qa.id.clone()) {
                        return Err(Error::Validation(format!("duplicate sample id `{}`", qa.id)));
                    }
                    if qa.answers.is_empty() {
                        return Err(Error::Validation(format!(
                            "sample `{}` has no gold answers",
                            qa.id
                        )));
                    }
                    let mut answers = qa.answers;
                    for answer in &mut answers {
                        check_offset(&qa.id, &context_chars, answer, &mut warnings)?;
                    }
                    samples.push(QaSample {
                        id: qa.id,
                        title: article.title.clone(),
                        context: paragraph.context.clone(),
                        question: qa.question,
                        answers,
                    });
                }
            }
        }
        Ok(Loaded::new(
            Dataset {
                name: name.to_string(),
                samples,
            },
            warnings,
        ))
    }

    /// SQuAD v1.1 JSON. Consecutive samples sharing a title form one
    /// article and consecutive samples sharing a context one paragraph, so
    /// reloading yields the same samples in the same order.
    pub fn to_squad_json(&self, provenance: Option<serde_json::Value>) -> Result<String> {
        let mut data: Vec<SquadArticle> = Vec::new();
        for s in &self.samples {
            let same_article = data.last().is_some_and(|a| a.title == s.title);
            if !same_article {
                data.push(SquadArticle {
                    title: s.title.clone(),
                    paragraphs: Vec::new(),
                });
            }
            let article = data.last_mut().expect("article pushed above");
            let same_paragraph = article.paragraphs.last().is_some_and(|p| p.context == s.context);
            if !same_paragraph {
                article.paragraphs.push(SquadParagraph {
                    context: s.context.clone(),
                    qas: Vec::new(),
                });
            }
            article
                .paragraphs
                .last_mut()
                .expect("paragraph pushed above")
                .qas
                .push(SquadQa {
                    id: s.id.clone(),
                    question: s.question.clone(),
                    answers: s.answers.clone(),
                });
        }
        let file = SquadFile {
            version: Some("1.1".into()),
            data,
            provenance,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn write(&self, path: &Path, provenance: Option<serde_json::Value>) -> Result<()> {
        let json = self.to_squad_json(provenance)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QaSample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

/// Loads a SQuAD v1.1 file; the dataset is named after the file stem.
pub fn load_dataset(path: &Path) -> Result<Loaded<Dataset>> {
    let text = read(path)?;
    Dataset::from_squad_json(&stem(path), &path.display().to_string(), &text)
}

/// Predicted answer strings of one model, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionSet {
    pub model_name: String,
    pub predictions: IndexMap<String, String>,
}

impl PredictionSet {
    pub fn new(model_name: impl Into<String>) -> Self {
        PredictionSet {
            model_name: model_name.into(),
            predictions: IndexMap::new(),
        }
    }

    pub fn get(&self, id: &str) -> Result<&str> {
        self.predictions
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingPrediction(id.to_string()))
    }

    pub fn insert(&mut self, id: impl Into<String>, answer: impl Into<String>) {
        self.predictions.insert(id.into(), answer.into());
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Fails on the first dataset id without a prediction.
    pub fn check_complete(&self, dataset: &Dataset) -> Result<()> {
        match dataset.samples.iter().find(|s| !self.predictions.contains_key(&s.id)) {
            Some(s) => Err(Error::MissingPrediction(s.id.clone())),
            None => Ok(()),
        }
    }

    pub fn from_json(model_name: &str, source: &str, text: &str) -> Result<Loaded<PredictionSet>> {
        let mut warnings = Vec::new();
        let predictions: IndexMap<String, String> = if text.trim().is_empty() {
            IndexMap::new()
        } else {
            parse_json(source, text)?
        };
        if predictions.is_empty() {
            warnings.push(format!("{source}: prediction file is empty"));
        }
        Ok(Loaded::new(
            PredictionSet {
                model_name: model_name.to_string(),
                predictions,
            },
            warnings,
        ))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.predictions)?)
    }
}

/// Loads a flat `{id: answer}` prediction file; the model is named after the
/// file stem.
pub fn load_predictions(path: &Path) -> Result<Loaded<PredictionSet>> {
    let text = read(path)?;
    PredictionSet::from_json(&stem(path), &path.display().to_string(), &text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start_char: usize,
    pub end_char: usize,
    pub label: EntityLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSpan {
    pub text: String,
    pub start_char: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleAnnotation {
    #[serde(default)]
    pub context_entities: Vec<EntitySpan>,
    #[serde(default)]
    pub question_entities: Vec<EntitySpan>,
    #[serde(default)]
    pub subject: Option<SubjectSpan>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub annotations: BTreeMap<String, SampleAnnotation>,
}

/// Key reserved for producer metadata in sidecar files; never a sample id.
pub const ANNOTATION_META_KEY: &str = "_meta";

#[derive(Deserialize)]
struct RawEntity {
    start_char: usize,
    end_char: usize,
    label: String,
}

#[derive(Deserialize)]
struct RawAnnotation {
    #[serde(default)]
    context_entities: Vec<RawEntity>,
    #[serde(default)]
    question_entities: Vec<RawEntity>,
    #[serde(default)]
    subject: Option<SubjectSpan>,
}

fn convert_entities(
    id: &str,
    field: &str,
    raw: Vec<RawEntity>,
    bound: Option<usize>,
    warnings: &mut Vec<String>,
) -> Result<Vec<EntitySpan>> {
    raw.into_iter()
        .map(|e| {
            let out_of_bounds = e.start_char >= e.end_char || bound.is_some_and(|b| e.end_char > b);
            if out_of_bounds {
                return Err(Error::Validation(format!(
                    "annotation for `{id}`: {field} span [{}, {}) out of bounds{}",
                    e.start_char,
                    e.end_char,
                    bound.map(|b| format!(" (text length {b})")).unwrap_or_default()
                )));
            }
            let label = e.label.parse().unwrap_or_else(|_| {
                warnings.push(format!(
                    "annotation for `{id}`: unknown label `{}` mapped to FB-OTHER",
                    e.label
                ));
                EntityLabel::FbOther
            });
            Ok(EntitySpan {
                start_char: e.start_char,
                end_char: e.end_char,
                label,
            })
        })
        .collect()
}

impl AnnotationSet {
    pub fn get(&self, id: &str) -> Option<&SampleAnnotation> {
        self.annotations.get(id)
    }

    /// Parses a sidecar; with `dataset` given, spans are checked against
    /// the bounds of the sample's context and question.
    pub fn from_json(
        source: &str,
        text: &str,
        dataset: Option<&Dataset>,
    ) -> Result<Loaded<AnnotationSet>> {
        let raw: BTreeMap<String, serde_json::Value> = parse_json(source, text)?;
        let bounds: Option<std::collections::HashMap<&str, (usize, usize)>> = dataset.map(|d| {
            d.samples
                .iter()
                .map(|s| (s.id.as_str(), (char_len(&s.context), char_len(&s.question))))
                .collect()
        });
        let mut warnings = Vec::new();
        let mut annotations = BTreeMap::new();
        for (id, value) in raw {
            if id == ANNOTATION_META_KEY {
                continue;
            }
            let entry: RawAnnotation = serde_json::from_value(value).map_err(|e| {
                Error::Validation(format!("annotation for `{id}` is malformed: {e}"))
            })?;
            let (ctx_len, q_len) = match &bounds {
                Some(b) => match b.get(id.as_str()) {
                    Some(&(c, q)) => (Some(c), Some(q)),
                    None => {
                        warnings.push(format!("annotation for unknown sample `{id}` ignored"));
                        continue;
                    }
                },
                None => (None, None),
            };
            let context_entities =
                convert_entities(&id, "context entity", entry.context_entities, ctx_len, &mut warnings)?;
            let question_entities =
                convert_entities(&id, "question entity", entry.question_entities, q_len, &mut warnings)?;
            if let (Some(subject), Some(q)) = (&entry.subject, q_len) {
                let end = subject.start_char + char_len(&subject.text);
                if end > q {
                    return Err(Error::Validation(format!(
                        "annotation for `{id}`: subject span [{}, {end}) out of bounds (question length {q})",
                        subject.start_char
                    )));
                }
            }
            annotations.insert(
                id,
                SampleAnnotation {
                    context_entities,
                    question_entities,
                    subject: entry.subject,
                },
            );
        }
        Ok(Loaded::new(AnnotationSet { annotations }, warnings))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.annotations)?)
    }
}

pub fn load_annotations(path: &Path, dataset: Option<&Dataset>) -> Result<Loaded<AnnotationSet>> {
    let text = read(path)?;
    AnnotationSet::from_json(&path.display().to_string(), &text, dataset)
}
