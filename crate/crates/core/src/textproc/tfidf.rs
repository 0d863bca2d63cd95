use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::error::{Error, Result};

/// Smoothed-idf TF-IDF model over lowercased tokens.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1` where `N` counts unique
/// documents. Term ids follow first appearance in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    document_count: usize,
}

/// Unit-length sparse vector; entries sorted by term id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(contexts: &[S]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut vocabulary: HashMap<String, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        let mut document_count = 0;

        for doc in contexts {
            let doc = doc.as_ref();
            if !seen.insert(doc) {
                continue;
            }
            document_count += 1;
            let mut in_doc = HashSet::new();
            for tok in tokenize(doc) {
                let next_id = vocabulary.len();
                let id = *vocabulary.entry(tok.lower).or_insert_with(|| {
                    df.push(0);
                    next_id
                });
                if in_doc.insert(id) {
                    df[id] += 1;
                }
            }
        }
        if document_count == 0 {
            return Err(Error::Validation("cannot fit TF-IDF on an empty corpus".into()));
        }

        let n = document_count as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Ok(TfidfModel {
            vocabulary,
            idf,
            document_count,
        })
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_id(term).map(|id| self.idf[id])
    }

    /// Raw term frequency times idf, L2-normalized. Unknown terms are
    /// skipped.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for tok in tokenize(text) {
            if let Some(id) = self.term_id(&tok.lower) {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(id, tf)| (id, tf as f64 * self.idf[id]))
            .collect();
        entries.sort_by_key(|(id, _)| *id);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut entries {
                *w /= norm;
            }
        }
        SparseVector { entries }
    }
}

/// Dot product of two unit vectors, clamped to `[0, 1]`; 0 when either is
/// empty.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    let (x, y) = (&a.entries, &b.entries);
    while i < x.len() && j < y.len() {
        match x[i].0.cmp(&y[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += x[i].1 * y[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot.clamp(0.0, 1.0)
}
