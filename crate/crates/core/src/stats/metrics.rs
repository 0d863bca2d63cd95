use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::{normalize_answer, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "EM")]
    ExactMatch,
    #[serde(rename = "F1")]
    F1,
}

impl Metric {
    pub fn score(self, prediction: &str, golds: &[&str]) -> Result<f64> {
        match self {
            Metric::ExactMatch => exact_match(prediction, golds),
            Metric::F1 => f1_score(prediction, golds),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::ExactMatch => "EM",
            Metric::F1 => "F1",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" | "exact-match" | "exact_match" => Ok(Metric::ExactMatch),
            "f1" => Ok(Metric::F1),
            _ => Err(Error::Config(format!("unknown metric `{s}` (expected em or f1)"))),
        }
    }
}

fn require_golds(golds: &[&str]) -> Result<()> {
    if golds.is_empty() {
        Err(Error::Statistics("metric requires at least one gold answer".into()))
    } else {
        Ok(())
    }
}

/// 1.0 when the normalized prediction equals any normalized gold.
pub fn exact_match(prediction: &str, golds: &[&str]) -> Result<f64> {
    require_golds(golds)?;
    let pred = normalize_answer(prediction);
    Ok(if golds.iter().any(|g| normalize_answer(g) == pred) {
        1.0
    } else {
        0.0
    })
}

fn answer_tokens(text: &str) -> Vec<String> {
    tokenize(&normalize_answer(text)).into_iter().map(|t| t.lower).collect()
}

fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-multiset F1 against the best-matching gold.
pub fn f1_score(prediction: &str, golds: &[&str]) -> Result<f64> {
    require_golds(golds)?;
    let pred = answer_tokens(prediction);
    Ok(golds
        .iter()
        .map(|g| token_f1(&pred, &answer_tokens(g)))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match("the normans.", &["Normans"]).unwrap(), 1.0);
        assert_eq!(exact_match("French Normans", &["Normans"]).unwrap(), 0.0);
        assert_eq!(exact_match("Normans", &["Normans"]).unwrap(), 1.0);
        assert_eq!(exact_match("", &["the"]).unwrap(), 1.0);
        assert_eq!(exact_match("", &["x"]).unwrap(), 0.0);
        assert!(exact_match("x", &[]).is_err());
    }

    #[test]
    fn f1_cases() {
        assert!((f1_score("Barack Obama", &["Obama"]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1_score("Obama", &["Obama"]).unwrap(), 1.0);
        assert_eq!(f1_score("Paris", &["London"]).unwrap(), 0.0);
        assert_eq!(f1_score("", &["the"]).unwrap(), 1.0);
        assert_eq!(f1_score("", &["x"]).unwrap(), 0.0);
        assert!(f1_score("x", &[]).is_err());
    }

    #[test]
    fn metric_names() {
        assert_eq!("em".parse::<Metric>().unwrap(), Metric::ExactMatch);
        assert_eq!("F1".parse::<Metric>().unwrap(), Metric::F1);
        assert!("bleu".parse::<Metric>().is_err());
        assert_eq!(serde_json::to_string(&Metric::ExactMatch).unwrap(), "\"EM\"");
    }

    proptest! {
        #[test]
        fn em_implies_f1_one(p in "[a-cA-C .,]{0,12}", g in prop::collection::vec("[a-cA-C .,]{0,12}", 1..4)) {
            let golds: Vec<&str> = g.iter().map(String::as_str).collect();
            let em = exact_match(&p, &golds).unwrap();
            let f1 = f1_score(&p, &golds).unwrap();
            prop_assert!((0.0..=1.0).contains(&f1));
            if em == 1.0 {
                prop_assert_eq!(f1, 1.0);
            }
        }
    }
}
