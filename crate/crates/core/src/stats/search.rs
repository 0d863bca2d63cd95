use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{measure_scores, score_samples, BiasMeasurement, BootstrapConfig, MeasureLabels, Metric, Provenance};
use crate::corpus::{Dataset, PredictionSet, QaSample};
use crate::error::{Error, Result};
use crate::heuristics::AttributeTable;

/// Candidate thresholds inside `[min, max]`: steps of 0.1 over `[0, 1]`,
/// then whole numbers above 1.
pub fn candidate_grid(min: f64, max: f64) -> Vec<f64> {
    let fine = (0..=10).map(|k| k as f64 / 10.0);
    let coarse_top = if max.is_finite() { max.floor().max(1.0) as i64 } else { 1 };
    let coarse = (2..=coarse_top).map(|k| k as f64);
    fine.chain(coarse).filter(|&t| t >= min && t <= max).collect()
}

/// One grid point of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub threshold: f64,
    pub n1: usize,
    pub n2: usize,
    /// Measured only when both groups reach the bootstrap sample size.
    pub bias: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_threshold: f64,
    pub best: BiasMeasurement,
    pub candidates: Vec<Candidate>,
}

/// Grid search for the threshold with the largest bias.
///
/// A candidate is valid when both groups hold at least twice the bootstrap
/// sample size. When exactly one candidate on the whole grid measures a
/// positive bias and its smaller group still reaches the sample size, it is
/// valid as well. Ties go to the smaller threshold.
pub fn threshold_search(
    dataset: &Dataset,
    attrs: &AttributeTable,
    preds: &PredictionSet,
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    preds.check_complete(dataset)?;
    attrs.check_covers(dataset)?;
    let (min, max) = attrs
        .min_max()
        .ok_or_else(|| Error::Statistics("attribute table is empty".into()))?;
    if min == max {
        return Err(Error::Statistics(format!(
            "{} is constant ({min}) on {}; nothing to split",
            attrs.heuristic, dataset.name
        )));
    }

    let all: Vec<&QaSample> = dataset.samples.iter().collect();
    let scores = score_samples(&all, preds, metric)?;
    let values: Vec<f64> = dataset
        .samples
        .iter()
        .map(|s| attrs.get(&s.id))
        .collect::<Result<_>>()?;
    let provenance = Provenance::new(&preds.model_name, &dataset.name, &attrs.config_digest);

    let evaluated: Vec<(Candidate, Option<BiasMeasurement>)> = candidate_grid(min, max)
        .into_par_iter()
        .map(|threshold| {
            let (mut low, mut high) = (Vec::new(), Vec::new());
            for (&v, &s) in values.iter().zip(&scores) {
                if v <= threshold {
                    low.push(s);
                } else {
                    high.push(s);
                }
            }
            let mut candidate = Candidate {
                threshold,
                n1: low.len(),
                n2: high.len(),
                bias: None,
                valid: false,
            };
            if low.len().min(high.len()) < cfg.sample_size {
                return Ok((candidate, None));
            }
            let m = measure_scores(
                &low,
                &high,
                cfg,
                MeasureLabels {
                    heuristic: attrs.heuristic,
                    threshold,
                    metric,
                    provenance: provenance.clone(),
                },
            )?;
            candidate.bias = Some(m.bias);
            Ok((candidate, Some(m)))
        })
        .collect::<Result<_>>()?;

    let significant: Vec<usize> = evaluated
        .iter()
        .enumerate()
        .filter(|(_, (c, _))| c.bias.is_some_and(|b| b > 0.0))
        .map(|(i, _)| i)
        .collect();
    let lone_significant = match significant[..] {
        [only] => Some(only),
        _ => None,
    };

    let mut candidates = Vec::with_capacity(evaluated.len());
    let mut best: Option<BiasMeasurement> = None;
    for (i, (mut candidate, measurement)) in evaluated.into_iter().enumerate() {
        let strict = candidate.n1.min(candidate.n2) >= 2 * cfg.sample_size;
        candidate.valid = measurement.is_some() && (strict || lone_significant == Some(i));
        if candidate.valid {
            let m = measurement.expect("valid candidates are measured");
            if best.as_ref().is_none_or(|b| m.bias > b.bias) {
                best = Some(m);
            }
        }
        candidates.push(candidate);
    }

    let best = best.ok_or_else(|| {
        Error::Statistics(format!(
            "no valid threshold for {} on {} ({} samples): every split leaves a group below {} samples; try a smaller --sample-size",
            attrs.heuristic,
            dataset.name,
            dataset.len(),
            2 * cfg.sample_size
        ))
    })?;
    Ok(SearchOutcome {
        best_threshold: best.threshold,
        best,
        candidates,
    })
}
