//! Resampling baseline and split export.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Dataset, QaSample};
use crate::error::{Error, Result};
use crate::heuristics::{AttributeTable, HeuristicId};
use crate::stats::{rng, split};
use crate::TOOLKIT_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Duplicate {
    pub id: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub heuristic: HeuristicId,
    pub threshold: f64,
    /// 1 or 2. Ties report group 1.
    pub underrepresented_group: u8,
    pub group_sizes: (usize, usize),
    pub n_added: usize,
    pub seed: u64,
    pub duplicates: Vec<Duplicate>,
}

/// Supersamples the smaller side of the split, drawing uniformly with
/// replacement, until both sides are equally large. Duplicates get the id
/// suffix `#dupK` and are appended after the original samples.
pub fn resample(
    dataset: &Dataset,
    attrs: &AttributeTable,
    threshold: f64,
    seed: u64,
) -> Result<(Dataset, ResamplePlan)> {
    let (g1, g2) = split(dataset, attrs, threshold)?;
    let (group, smaller, larger) = if g1.len() <= g2.len() {
        (1, &g1, &g2)
    } else {
        (2, &g2, &g1)
    };
    let n_added = larger.len() - smaller.len();
    if n_added == 0 {
        log::warn!("groups already balanced at threshold {threshold}; output is a copy");
    }

    let mut taken: HashSet<String> = dataset.samples.iter().map(|s| s.id.clone()).collect();
    let mut counters: HashMap<&str, usize> = HashMap::new();
    let mut rng = rng::stream(seed, rng::tags::RESAMPLE, 0);
    let mut samples = dataset.samples.clone();
    let mut duplicates = Vec::with_capacity(n_added);
    for _ in 0..n_added {
        let source: &QaSample = smaller[rng.random_range(0..smaller.len())];
        let counter = counters.entry(source.id.as_str()).or_insert(0);
        let id = loop {
            *counter += 1;
            let candidate = format!("{}#dup{}", source.id, counter);
            if taken.insert(candidate.clone()) {
                break candidate;
            }
        };
        samples.push(QaSample {
            id: id.clone(),
            ..source.clone()
        });
        duplicates.push(Duplicate {
            id,
            source: source.id.clone(),
        });
    }

    let plan = ResamplePlan {
        heuristic: attrs.heuristic,
        threshold,
        underrepresented_group: group,
        group_sizes: (g1.len(), g2.len()),
        n_added,
        seed,
        duplicates,
    };
    Ok((
        Dataset {
            name: dataset.name.clone(),
            samples,
        },
        plan,
    ))
}

/// Attribute table for a resampled dataset: duplicates inherit the value of
/// their source sample.
pub fn extend_attributes(attrs: &AttributeTable, plan: &ResamplePlan) -> Result<AttributeTable> {
    let mut out = attrs.clone();
    for d in &plan.duplicates {
        let v = attrs.get(&d.source)?;
        out.values.insert(d.id.clone(), v);
    }
    Ok(out)
}

/// Writes the two groups of the split as standalone SQuAD files named
/// `<dataset>.group1.json` and `<dataset>.group2.json`.
pub fn export_splits(
    dataset: &Dataset,
    attrs: &AttributeTable,
    threshold: f64,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let (g1, g2) = split(dataset, attrs, threshold)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(2);
    for (index, group) in [(1, g1), (2, g2)] {
        let part = Dataset {
            name: format!("{}.group{index}", dataset.name),
            samples: group.into_iter().cloned().collect(),
        };
        let provenance = json!({
            "source_dataset": dataset.name,
            "heuristic": attrs.heuristic,
            "threshold": threshold,
            "group": index,
            "rule": if index == 1 { "attribute <= threshold" } else { "attribute > threshold" },
            "samples": part.len(),
            "config_digest": attrs.config_digest,
            "toolkit_version": TOOLKIT_VERSION,
        });
        let path = out_dir.join(format!("{}.json", part.name));
        part.write(&path, Some(provenance))?;
        paths.push(path);
    }
    let second = paths.pop().expect("two paths");
    let first = paths.pop().expect("two paths");
    Ok((first, second))
}
