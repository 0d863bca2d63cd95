//! Word lists and label mappings shared by the text primitives and the
//! heuristics.
//!
//! Every list that can change an attribute value is folded into
//! [`Lexicon::digest`], which is stamped onto attribute tables and
//! measurements so that stale artifacts can be detected.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");
pub const VERBS: &str = include_str!("../data/verbs.txt");
pub const ENTITY_MAPPING: &str = include_str!("../data/entity_mapping.json");

/// Closed named-entity label vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "PERSON")]
    Person,
    #[serde(rename = "GPE")]
    Gpe,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "FAC")]
    Fac,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "DATE")]
    Date,
    #[serde(rename = "TIME")]
    Time,
    #[serde(rename = "CARDINAL")]
    Cardinal,
    #[serde(rename = "QUANTITY")]
    Quantity,
    #[serde(rename = "MONEY")]
    Money,
    #[serde(rename = "PERCENT")]
    Percent,
    #[serde(rename = "EVENT")]
    Event,
    #[serde(rename = "NORP")]
    Norp,
    #[serde(rename = "PRODUCT")]
    Product,
    #[serde(rename = "WORK_OF_ART")]
    WorkOfArt,
    #[serde(rename = "LANGUAGE")]
    Language,
    #[serde(rename = "LAW")]
    Law,
    #[serde(rename = "ORDINAL")]
    Ordinal,
    #[serde(rename = "FB-OTHER")]
    FbOther,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 19] = [
        EntityLabel::Person,
        EntityLabel::Gpe,
        EntityLabel::Loc,
        EntityLabel::Fac,
        EntityLabel::Org,
        EntityLabel::Date,
        EntityLabel::Time,
        EntityLabel::Cardinal,
        EntityLabel::Quantity,
        EntityLabel::Money,
        EntityLabel::Percent,
        EntityLabel::Event,
        EntityLabel::Norp,
        EntityLabel::Product,
        EntityLabel::WorkOfArt,
        EntityLabel::Language,
        EntityLabel::Law,
        EntityLabel::Ordinal,
        EntityLabel::FbOther,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::Person => "PERSON",
            EntityLabel::Gpe => "GPE",
            EntityLabel::Loc => "LOC",
            EntityLabel::Fac => "FAC",
            EntityLabel::Org => "ORG",
            EntityLabel::Date => "DATE",
            EntityLabel::Time => "TIME",
            EntityLabel::Cardinal => "CARDINAL",
            EntityLabel::Quantity => "QUANTITY",
            EntityLabel::Money => "MONEY",
            EntityLabel::Percent => "PERCENT",
            EntityLabel::Event => "EVENT",
            EntityLabel::Norp => "NORP",
            EntityLabel::Product => "PRODUCT",
            EntityLabel::WorkOfArt => "WORK_OF_ART",
            EntityLabel::Language => "LANGUAGE",
            EntityLabel::Law => "LAW",
            EntityLabel::Ordinal => "ORDINAL",
            EntityLabel::FbOther => "FB-OTHER",
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown entity label `{s}`")))
    }
}

/// Question-type to entity-label mapping used by `sim-ents`.
///
/// Keys are lowercased wh-phrases of one or more words ("who", "how many").
/// The longest phrase matching at the leading wh-word wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMapping {
    entries: BTreeMap<String, BTreeSet<EntityLabel>>,
}

impl EntityMapping {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("entity mapping: {e}")))?;
        let mut entries = BTreeMap::new();
        for (phrase, labels) in raw {
            let key = phrase
                .split_whitespace()
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
                .join(" ");
            if key.is_empty() {
                return Err(Error::Config("entity mapping: empty question phrase".into()));
            }
            let labels = labels
                .iter()
                .map(|l| {
                    l.parse::<EntityLabel>()
                        .map_err(|_| Error::Config(format!("entity mapping: unknown label `{l}`")))
                })
                .collect::<Result<BTreeSet<_>>>()?;
            entries.insert(key, labels);
        }
        Ok(EntityMapping { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Labels for a question given its lowercased tokens, starting the match
    /// at the first token that begins any mapped phrase or is a wh-word.
    /// `None` means the question type is unmapped.
    pub fn labels_for(&self, question_tokens: &[&str]) -> Option<&BTreeSet<EntityLabel>> {
        let start = question_tokens.iter().position(|t| is_wh_word(t))?;
        let rest = &question_tokens[start..];
        self.entries
            .iter()
            .filter(|(phrase, _)| {
                let words: Vec<&str> = phrase.split(' ').collect();
                rest.len() >= words.len() && rest[..words.len()] == words[..]
            })
            .max_by_key(|(phrase, _)| phrase.split(' ').count())
            .map(|(_, labels)| labels)
    }

    fn canonical(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| {
                let labels: Vec<&str> = v.iter().map(|l| l.as_str()).collect();
                format!("{k}={}", labels.join(","))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub const WH_WORDS: [&str; 9] = [
    "who", "whom", "whose", "what", "which", "where", "when", "why", "how",
];

pub fn is_wh_word(token: &str) -> bool {
    WH_WORDS.contains(&token)
}

/// All word lists consulted by the tokenizer-level heuristics.
#[derive(Debug, Clone)]
pub struct Lexicon {
    stopwords: HashSet<String>,
    abbreviations: HashSet<String>,
    verbs: HashSet<String>,
    entity_mapping: EntityMapping,
    digest: String,
}

fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

impl Lexicon {
    pub fn new(
        stopwords: &str,
        abbreviations: &str,
        verbs: &str,
        entity_mapping: EntityMapping,
    ) -> Self {
        let stop = parse_list(stopwords);
        let abbr = parse_list(abbreviations);
        let verb = parse_list(verbs);

        let mut hasher = Sha256::new();
        for (name, list) in [("stopwords", &stop), ("abbreviations", &abbr), ("verbs", &verb)] {
            let mut sorted = list.clone();
            sorted.sort();
            sorted.dedup();
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
            hasher.update(sorted.join("\n").as_bytes());
            hasher.update(b"\n\n");
        }
        hasher.update(b"entity_mapping\n");
        hasher.update(entity_mapping.canonical().as_bytes());
        let digest = format!("sha256:{}", hex::encode(hasher.finalize()));

        Lexicon {
            stopwords: stop.into_iter().collect(),
            abbreviations: abbr.into_iter().collect(),
            verbs: verb.into_iter().collect(),
            entity_mapping,
            digest,
        }
    }

    /// The lists shipped with the crate.
    pub fn builtin() -> &'static Lexicon {
        static BUILTIN: OnceLock<Lexicon> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let mapping = EntityMapping::from_json(ENTITY_MAPPING)
                .expect("bundled entity mapping is valid");
            Lexicon::new(STOPWORDS, ABBREVIATIONS, VERBS, mapping)
        })
    }

    /// Builtin lists with a replacement entity mapping.
    pub fn with_entity_mapping(mapping: EntityMapping) -> Self {
        Lexicon::new(STOPWORDS, ABBREVIATIONS, VERBS, mapping)
    }

    pub fn is_stopword(&self, lower: &str) -> bool {
        self.stopwords.contains(lower)
    }

    pub fn is_abbreviation(&self, lower_with_period: &str) -> bool {
        self.abbreviations.contains(lower_with_period)
    }

    pub fn is_verb(&self, lower: &str) -> bool {
        self.verbs.contains(lower)
    }

    pub fn entity_mapping(&self) -> &EntityMapping {
        &self.entity_mapping
    }

    /// Content digest of every list above, `sha256:<hex>`.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lists_load() {
        let lex = Lexicon::builtin();
        assert!(lex.is_stopword("the"));
        assert!(lex.is_stopword("where"));
        assert!(!lex.is_stopword("tower"));
        assert!(lex.is_abbreviation("dr."));
        assert!(lex.is_verb("did"));
        assert!(lex.digest().starts_with("sha256:"));
    }

    #[test]
    fn mapping_prefers_longest_phrase() {
        let m = Lexicon::builtin().entity_mapping();
        let labels = m.labels_for(&["how", "many", "people"]).unwrap();
        assert!(labels.contains(&EntityLabel::Cardinal));
        assert!(m.labels_for(&["how", "did", "it"]).is_none());
        let who = m.labels_for(&["who", "founded", "apple"]).unwrap();
        assert_eq!(who.iter().copied().collect::<Vec<_>>(), vec![EntityLabel::Person]);
        // leading wh-word need not be the first token
        let when = m.labels_for(&["in", "when", "was"]).unwrap();
        assert!(when.contains(&EntityLabel::Date));
        assert!(m.labels_for(&["why", "did"]).is_none());
    }

    #[test]
    fn digest_tracks_mapping_changes() {
        let alt = EntityMapping::from_json(r#"{"who": ["ORG"]}"#).unwrap();
        let lex = Lexicon::with_entity_mapping(alt);
        assert_ne!(lex.digest(), Lexicon::builtin().digest());
    }

    #[test]
    fn mapping_rejects_unknown_labels() {
        assert!(matches!(
            EntityMapping::from_json(r#"{"who": ["PER"]}"#),
            Err(Error::Config(_))
        ));
    }
}
