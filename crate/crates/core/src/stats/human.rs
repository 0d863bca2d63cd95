use super::{measure_scores, BiasMeasurement, BootstrapConfig, MeasureLabels, Metric, Provenance};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::heuristics::AttributeTable;

/// Annotator positions tried by the human baseline.
pub const HUMAN_ANNOTATORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanConfig {
    /// Minimum share of samples that must carry two or more gold answers.
    pub min_multi_answer_fraction: f64,
}

impl Default for HumanConfig {
    fn default() -> Self {
        HumanConfig {
            min_multi_answer_fraction: 0.5,
        }
    }
}

/// The estimator with annotator `a`'s answer as the prediction and the
/// remaining answers as golds, for each `a < HUMAN_ANNOTATORS`. Samples
/// without an answer at position `a`, or without any other answer, are
/// left out of both groups for that annotator.
pub fn human_bias_per_annotator(
    dataset: &Dataset,
    attrs: &AttributeTable,
    threshold: f64,
    metric: Metric,
    cfg: &BootstrapConfig,
    human: &HumanConfig,
) -> Result<Vec<Result<BiasMeasurement>>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Statistics("human baseline on an empty dataset".into()));
    }
    let multi = dataset.samples.iter().filter(|s| s.answers.len() >= 2).count();
    let fraction = multi as f64 / dataset.len() as f64;
    if multi == 0 || fraction < human.min_multi_answer_fraction {
        return Err(Error::Statistics(format!(
            "human baseline needs at least {:.0}% of samples with several gold answers; {} has {:.1}%",
            human.min_multi_answer_fraction * 100.0,
            dataset.name,
            fraction * 100.0
        )));
    }

    let per_annotator = (0..HUMAN_ANNOTATORS)
        .map(|a| {
            let (mut low, mut high) = (Vec::new(), Vec::new());
            for s in &dataset.samples {
                if s.answers.len() <= a || s.answers.len() < 2 {
                    continue;
                }
                let golds: Vec<&str> = s
                    .answers
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != a)
                    .map(|(_, g)| g.text.as_str())
                    .collect();
                let score = metric.score(&s.answers[a].text, &golds)?;
                if attrs.get(&s.id)? <= threshold {
                    low.push(score);
                } else {
                    high.push(score);
                }
            }
            measure_scores(
                &low,
                &high,
                cfg,
                MeasureLabels {
                    heuristic: attrs.heuristic,
                    threshold,
                    metric,
                    provenance: Provenance::new(
                        &format!("human-annotator-{a}"),
                        &dataset.name,
                        &attrs.config_digest,
                    ),
                },
            )
        })
        .collect();
    Ok(per_annotator)
}

/// The smallest per-annotator bias; ties go to the lower annotator index.
pub fn human_bias(
    dataset: &Dataset,
    attrs: &AttributeTable,
    threshold: f64,
    metric: Metric,
    cfg: &BootstrapConfig,
    human: &HumanConfig,
) -> Result<BiasMeasurement> {
    let mut best: Option<BiasMeasurement> = None;
    let mut first_error = None;
    for result in human_bias_per_annotator(dataset, attrs, threshold, metric, cfg, human)? {
        match result {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.bias < b.bias) {
                    best = Some(m);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_error.expect("three annotators were tried"))
}
