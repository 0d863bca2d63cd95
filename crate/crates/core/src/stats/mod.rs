//! Metrics, the bootstrapped two-group bias estimator, threshold search and
//! the human-annotator baseline.

mod bootstrap;
mod human;
mod metrics;
pub mod rng;
mod search;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, PredictionSet, QaSample};
use crate::error::{Error, Result};
use crate::heuristics::{AttributeTable, HeuristicId};
use crate::TOOLKIT_VERSION;

pub use bootstrap::{bootstrap_scores, quantile, quantiles, BootstrapConfig, QUANTILE_METHOD};
pub use human::{human_bias, human_bias_per_annotator, HumanConfig, HUMAN_ANNOTATORS};
pub use metrics::{exact_match, f1_score, Metric};
pub use search::{candidate_grid, threshold_search, Candidate, SearchOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub dataset_name: String,
    pub config_digest: String,
    pub toolkit_version: String,
    pub quantile_method: String,
    pub rng: String,
}

impl Provenance {
    pub fn new(model_name: &str, dataset_name: &str, config_digest: &str) -> Self {
        Provenance {
            model_name: model_name.to_string(),
            dataset_name: dataset_name.to_string(),
            config_digest: config_digest.to_string(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            quantile_method: QUANTILE_METHOD.to_string(),
            rng: rng::RNG_DESCRIPTION.to_string(),
        }
    }
}

/// One run of the estimator: split sizes, bootstrap quantile intervals of
/// both groups and the quantile gap between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMeasurement {
    pub heuristic: HeuristicId,
    pub threshold: f64,
    pub metric: Metric,
    pub n1: usize,
    pub n2: usize,
    pub e1_lo: f64,
    pub e1_hi: f64,
    pub e2_lo: f64,
    pub e2_hi: f64,
    pub bias: f64,
    pub mean1: f64,
    pub mean2: f64,
    /// 1 or 2; ties go to group 1.
    pub worse_split: u8,
    pub worse_split_mean: f64,
    pub config: BootstrapConfig,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `max(0, e1_lo - e2_hi, e2_lo - e1_hi)`.
pub fn quantile_gap(e1_lo: f64, e1_hi: f64, e2_lo: f64, e2_hi: f64) -> f64 {
    0f64.max(e1_lo - e2_hi).max(e2_lo - e1_hi)
}

impl BiasMeasurement {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(source: &str, text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            byte: 0,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Recomputes the gap from the stored quantiles.
    pub fn rederived_bias(&self) -> f64 {
        quantile_gap(self.e1_lo, self.e1_hi, self.e2_lo, self.e2_hi)
    }

    /// Whether two measurements are comparable cell by cell.
    pub fn same_setup(&self, other: &BiasMeasurement) -> bool {
        self.heuristic == other.heuristic
            && self.threshold == other.threshold
            && self.metric == other.metric
            && self.config == other.config
    }
}

/// Labels of a measurement that do not come from the scores.
#[derive(Debug, Clone)]
pub struct MeasureLabels {
    pub heuristic: HeuristicId,
    pub threshold: f64,
    pub metric: Metric,
    pub provenance: Provenance,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The estimator on precomputed per-sample scores of the two groups.
/// Group 1 uses stream tag 1, group 2 stream tag 2.
pub fn measure_scores(
    scores1: &[f64],
    scores2: &[f64],
    cfg: &BootstrapConfig,
    labels: MeasureLabels,
) -> Result<BiasMeasurement> {
    cfg.validate()?;
    if scores1.is_empty() || scores2.is_empty() {
        return Err(Error::EmptyGroup(format!(
            "{} threshold {} leaves a group empty ({} / {})",
            labels.heuristic,
            labels.threshold,
            scores1.len(),
            scores2.len()
        )));
    }
    let (t1, t2) = rayon::join(
        || bootstrap_scores(scores1, cfg, rng::tags::GROUP_1),
        || bootstrap_scores(scores2, cfg, rng::tags::GROUP_2),
    );
    let (e1_lo, e1_hi) = quantiles(&t1?, cfg.q_lo, cfg.q_hi)?;
    let (e2_lo, e2_hi) = quantiles(&t2?, cfg.q_lo, cfg.q_hi)?;
    let (mean1, mean2) = (mean(scores1), mean(scores2));
    let (worse_split, worse_split_mean) = if mean1 <= mean2 { (1, mean1) } else { (2, mean2) };

    let mut warnings = Vec::new();
    for (group, n) in [(1, scores1.len()), (2, scores2.len())] {
        if n < cfg.sample_size {
            warnings.push(format!(
                "group {group} has {n} samples, fewer than the bootstrap sample size {}",
                cfg.sample_size
            ));
        }
    }

    Ok(BiasMeasurement {
        heuristic: labels.heuristic,
        threshold: labels.threshold,
        metric: labels.metric,
        n1: scores1.len(),
        n2: scores2.len(),
        e1_lo,
        e1_hi,
        e2_lo,
        e2_hi,
        bias: quantile_gap(e1_lo, e1_hi, e2_lo, e2_hi),
        mean1,
        mean2,
        worse_split,
        worse_split_mean,
        config: *cfg,
        provenance: labels.provenance,
        warnings,
    })
}

/// Samples with attribute `<= threshold` and `> threshold`, in dataset
/// order. Fails when either side is empty.
pub fn split<'a>(
    dataset: &'a Dataset,
    attrs: &AttributeTable,
    threshold: f64,
) -> Result<(Vec<&'a QaSample>, Vec<&'a QaSample>)> {
    let mut low = Vec::new();
    let mut high = Vec::new();
    for s in &dataset.samples {
        if attrs.get(&s.id)? <= threshold {
            low.push(s);
        } else {
            high.push(s);
        }
    }
    if low.is_empty() || high.is_empty() {
        return Err(Error::EmptyGroup(format!(
            "{} threshold {threshold} splits {} into {} / {} samples; pick a threshold inside the attribute range",
            attrs.heuristic,
            dataset.name,
            low.len(),
            high.len()
        )));
    }
    Ok((low, high))
}

/// Per-sample metric values of `samples` in order.
pub fn score_samples(samples: &[&QaSample], preds: &PredictionSet, metric: Metric) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| metric.score(preds.get(&s.id)?, &s.gold_texts()))
        .collect()
}

/// Bootstrap trial values of one group.
pub fn bootstrap_eval(
    group: &[&QaSample],
    preds: &PredictionSet,
    metric: Metric,
    cfg: &BootstrapConfig,
    stream_tag: u32,
) -> Result<Vec<f64>> {
    let scores = score_samples(group, preds, metric)?;
    bootstrap_scores(&scores, cfg, stream_tag)
}

pub fn measure_bias(
    dataset: &Dataset,
    attrs: &AttributeTable,
    threshold: f64,
    preds: &PredictionSet,
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<BiasMeasurement> {
    cfg.validate()?;
    preds.check_complete(dataset)?;
    let (g1, g2) = split(dataset, attrs, threshold)?;
    let s1 = score_samples(&g1, preds, metric)?;
    let s2 = score_samples(&g2, preds, metric)?;
    measure_scores(
        &s1,
        &s2,
        cfg,
        MeasureLabels {
            heuristic: attrs.heuristic,
            threshold,
            metric,
            provenance: Provenance::new(&preds.model_name, &dataset.name, &attrs.config_digest),
        },
    )
}

/// Mean metric over the whole dataset, no resampling.
pub fn evaluate_full(dataset: &Dataset, preds: &PredictionSet, metric: Metric) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Statistics(format!("dataset {} is empty", dataset.name)));
    }
    let all: Vec<&QaSample> = dataset.samples.iter().collect();
    Ok(mean(&score_samples(&all, preds, metric)?))
}
