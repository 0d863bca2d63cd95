//! Synthetic datasets with a planted accuracy gap, and a Monte-Carlo
//! estimate of the bias the estimator should report on them.
//!
//! Samples of group `g` carry the planted attribute `a_g` and are answered
//! correctly with probability `p_g`. The planted attribute is labeled
//! `ans-len`, and answers are generated with `round(a_g)` tokens so that
//! recomputing `ans-len` on the text reproduces the table whenever the
//! planted values are positive integers.

use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerSpan, Dataset, PredictionSet, QaSample};
use crate::error::{Error, Result};
use crate::heuristics::{AttributeTable, HeuristicId};
use crate::lexicon::Lexicon;
use crate::stats::{rng, BootstrapConfig};
use crate::TOOLKIT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantSpec {
    pub n1: usize,
    pub n2: usize,
    pub p1: f64,
    pub p2: f64,
    pub a1: f64,
    pub a2: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            n1: 5000,
            n2: 5000,
            p1: 0.9,
            p2: 0.5,
            a1: 2.0,
            a2: 6.0,
            threshold: 4.0,
            seed: 0,
        }
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Config("planted groups need at least one sample each".into()));
        }
        for p in [self.p1, self.p2] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("correctness probability {p} outside [0, 1]")));
            }
        }
        if !(self.a1 <= self.threshold && self.threshold < self.a2) {
            return Err(Error::Config(format!(
                "planted attributes must satisfy a1 <= threshold < a2 (got {}, {}, {})",
                self.a1, self.threshold, self.a2
            )));
        }
        if !(self.a1 >= 0.0 && self.a2.is_finite()) {
            return Err(Error::Config("planted attributes must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: PlantSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            byte: 0,
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

const NAMES: [&str; 24] = [
    "Adler", "Brandt", "Castell", "Dorn", "Ellery", "Fenwick", "Garrow", "Hale", "Ingram", "Jessop",
    "Kestrel", "Lindqvist", "Marlow", "Norcross", "Oakes", "Pryor", "Quill", "Ravel", "Stroud",
    "Thorne", "Upton", "Vance", "Whitlock", "Yardley",
];

const FILLER: [&str; 40] = [
    "river", "harbor", "council", "market", "archive", "bridge", "festival", "garden", "library",
    "museum", "railway", "charter", "valley", "tower", "province", "treaty", "academy", "orchard",
    "quarry", "citadel", "mill", "canal", "monastery", "observatory", "theatre", "guild", "senate",
    "lighthouse", "harvest", "manuscript", "expedition", "colony", "dynasty", "cathedral",
    "fortress", "estate", "parish", "workshop", "vineyard", "foundry",
];

const VERBS: [&str; 12] = [
    "built", "founded", "described", "visited", "recorded", "restored", "named", "governed",
    "mapped", "funded", "praised", "opened",
];

const ANSWER_WORDS: [&str; 24] = [
    "amber", "basalt", "cobalt", "dune", "ember", "fjord", "granite", "heron", "indigo", "juniper",
    "kelp", "lagoon", "marble", "nectar", "opal", "pewter", "quartz", "russet", "saffron",
    "tundra", "umber", "vellum", "willow", "zephyr",
];

/// Tokens used for wrong predictions; disjoint from every list above.
const WRONG_WORDS: [&str; 4] = ["zilch", "nada", "naught", "nothing"];

const WH: [&str; 6] = ["Who", "What", "Where", "When", "Which", "How many"];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn planted_len(a: f64) -> usize {
    (a.round() as usize).clamp(1, 64)
}

fn sample_text(rng: &mut ChaCha8Rng, answer_len: usize) -> (String, String, String, usize) {
    let sentences = rng.random_range(1..=5);
    let answer_sentence = rng.random_range(0..sentences);
    let answer: Vec<String> = (0..answer_len)
        .map(|_| {
            let w = *ANSWER_WORDS.choose(rng).expect("non-empty");
            if rng.random_bool(0.5) {
                capitalize(w)
            } else {
                w.to_string()
            }
        })
        .collect();
    let answer_words = answer.clone();
    let answer = answer.join(" ");

    let mut context = String::new();
    let mut answer_start = 0;
    let mut answer_sentence_words = Vec::new();
    let mut lead_in = Vec::new();
    for s in 0..sentences {
        if s > 0 {
            context.push(' ');
        }
        let name = *NAMES.choose(rng).expect("non-empty");
        let before = rng.random_range(1..=6);
        let after = rng.random_range(0..=3);
        let words: Vec<&str> = (0..before + after).map(|_| *FILLER.choose(rng).expect("non-empty")).collect();
        if s == answer_sentence {
            let verb = *VERBS.choose(rng).expect("non-empty");
            context.push_str(&format!("{name} {verb} the {}", words[..before].join(" ")));
            context.push(' ');
            answer_start = context.chars().count();
            context.push_str(&answer);
            for w in &words[before..] {
                context.push(' ');
                context.push_str(w);
            }
            lead_in = words[..before].to_vec();
            answer_sentence_words = words;
            answer_sentence_words.push(name);
            answer_sentence_words.push(verb);
        } else {
            context.push_str(&format!("{name} {}", words.join(" ")));
        }
        context.push('.');
    }

    let wh = *WH.choose(rng).expect("non-empty");
    let cue = rng.random_range(1..=3);
    let mut cues: Vec<&str> = if rng.random_bool(0.5) {
        let len = rng.random_range(1..=lead_in.len().min(2));
        let at = rng.random_range(0..=lead_in.len() - len);
        lead_in[at..at + len].to_vec()
    } else {
        answer_sentence_words.choose_multiple(rng, cue).copied().collect()
    };
    if rng.random_bool(0.3) {
        cues.push(*FILLER.choose(rng).expect("non-empty"));
    }
    let leaked;
    if rng.random_bool(0.3) {
        leaked = answer_words.choose(rng).expect("non-empty").to_lowercase();
        cues.push(&leaked);
    }
    let question = format!("{wh} did the {}?", cues.join(" "));
    (context, question, answer, answer_start)
}

/// Synthetic dataset and its planted attribute table. Group membership is
/// shuffled through the dataset; ids read `synth-g<group>-<index>`.
pub fn gen_dataset(spec: &PlantSpec) -> Result<(Dataset, AttributeTable)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::tags::SYNTH_DATASET, 0);
    let mut groups: Vec<u8> = std::iter::repeat_n(1, spec.n1)
        .chain(std::iter::repeat_n(2, spec.n2))
        .collect();
    groups.shuffle(&mut rng);

    let mut counters = [0usize; 2];
    let mut samples = Vec::with_capacity(groups.len());
    let mut values = IndexMap::with_capacity(groups.len());
    for g in groups {
        let (a, counter) = if g == 1 {
            (spec.a1, &mut counters[0])
        } else {
            (spec.a2, &mut counters[1])
        };
        let id = format!("synth-g{g}-{:06}", *counter);
        *counter += 1;
        let (context, question, answer, start) = sample_text(&mut rng, planted_len(a));
        samples.push(QaSample {
            id: id.clone(),
            title: Some(format!("synthetic-{}", samples.len() / 50)),
            context,
            question,
            answers: vec![AnswerSpan {
                text: answer,
                start_char: start,
            }],
        });
        values.insert(id, a);
    }
    let name = format!("synth-seed{}", spec.seed);
    let table = AttributeTable {
        heuristic: HeuristicId::AnsLen,
        dataset_name: name.clone(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config_digest: Lexicon::builtin().digest().to_string(),
        values,
    };
    Ok((Dataset { name, samples }, table))
}

fn group_of(id: &str) -> Result<u8> {
    match id.strip_prefix("synth-g").and_then(|rest| rest.chars().next()) {
        Some('1') => Ok(1),
        Some('2') => Ok(2),
        _ => Err(Error::Validation(format!("`{id}` is not a synthetic sample id"))),
    }
}

/// Gold answer with probability `p_g`, otherwise a string sharing no
/// normalized token with any gold answer.
pub fn gen_predictions(dataset: &Dataset, spec: &PlantSpec) -> Result<PredictionSet> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::tags::SYNTH_PREDICTIONS, 0);
    let mut preds = PredictionSet::new(format!("planted-p{}-p{}", spec.p1, spec.p2));
    for s in &dataset.samples {
        let p = if group_of(&s.id)? == 1 { spec.p1 } else { spec.p2 };
        let answer = if rng.random_bool(p) {
            s.canonical_answer().text.clone()
        } else {
            let n = rng.random_range(1..=3);
            (0..n)
                .map(|_| *WRONG_WORDS.choose(&mut rng).expect("non-empty"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        preds.insert(s.id.clone(), answer);
    }
    Ok(preds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub sd: f64,
    pub replications: usize,
}

fn order_statistic(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos as usize;
    let w = pos - i as f64;
    if i + 1 < sorted.len() {
        (1.0 - w) * sorted[i] + w * sorted[i + 1]
    } else {
        sorted[i]
    }
}

/// Monte-Carlo distribution of the bias statistic without building a
/// dataset: each replication draws the empirical group accuracies as
/// binomials over the group sizes, then every bootstrap trial mean as a
/// binomial over the sample size at that accuracy.
pub fn expected_bias(spec: &PlantSpec, cfg: &BootstrapConfig, replications: usize) -> Result<OracleEstimate> {
    spec.validate()?;
    cfg.validate()?;
    if replications < 100 {
        return Err(Error::Config("the oracle needs at least 100 replications".into()));
    }
    let interval = |rng: &mut ChaCha8Rng, n: usize, p: f64| -> (f64, f64) {
        let correct = Binomial::new(n as u64, p).expect("p validated").sample(rng);
        let accuracy = correct as f64 / n as f64;
        let trial = Binomial::new(cfg.sample_size as u64, accuracy).expect("accuracy in [0, 1]");
        let mut means: Vec<f64> = (0..cfg.trials)
            .map(|_| trial.sample(rng) as f64 / cfg.sample_size as f64)
            .collect();
        means.sort_by(f64::total_cmp);
        (order_statistic(&means, cfg.q_lo), order_statistic(&means, cfg.q_hi))
    };
    let values: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(cfg.seed, rng::tags::ORACLE, r as u32);
            let (lo1, hi1) = interval(&mut rng, spec.n1, spec.p1);
            let (lo2, hi2) = interval(&mut rng, spec.n2, spec.p2);
            (lo1 - hi2).max(lo2 - hi1).max(0.0)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / replications as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (replications - 1) as f64;
    Ok(OracleEstimate {
        mean,
        sd: var.sqrt(),
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{compute_attributes, HeuristicDeps};
    use crate::stats::{exact_match, f1_score, measure_bias, split, Metric};

    fn spec(n1: usize, n2: usize, p1: f64, p2: f64, seed: u64) -> PlantSpec {
        PlantSpec {
            n1,
            n2,
            p1,
            p2,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn small_dataset_shape() {
        let s = spec(10, 10, 1.0, 1.0, 3);
        let (ds, table) = gen_dataset(&s).unwrap();
        assert_eq!(ds.len(), 20);
        let mut distinct: Vec<f64> = table.values.values().copied().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct, [2.0, 6.0]);
        let (g1, g2) = split(&ds, &table, s.threshold).unwrap();
        assert_eq!((g1.len(), g2.len()), (10, 10));
        assert!(g1.iter().all(|x| x.id.starts_with("synth-g1-")));
        assert_eq!(gen_dataset(&s).unwrap().0, ds);
    }

    #[test]
    fn generated_text_is_consistent() {
        let s = spec(200, 200, 0.5, 0.5, 9);
        let (ds, table) = gen_dataset(&s).unwrap();
        // reload through the validating reader: offsets must match exactly
        let json = ds.to_squad_json(None).unwrap();
        let back = Dataset::from_squad_json(&ds.name, "synth", &json).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.value, ds);
        let recomputed = compute_attributes(&ds, HeuristicId::AnsLen, &HeuristicDeps::default()).unwrap();
        assert_eq!(recomputed.values, table.values);
    }

    #[test]
    fn every_heuristic_varies() {
        let (ds, _) = gen_dataset(&spec(300, 300, 0.5, 0.5, 2)).unwrap();
        let tfidf = crate::heuristics::fit_tfidf_on(&ds).unwrap();
        let deps = HeuristicDeps {
            tfidf: Some(&tfidf),
            fallback_annotator: true,
            ..Default::default()
        };
        for h in HeuristicId::ALL {
            let table = compute_attributes(&ds, h, &deps).unwrap();
            let (min, max) = table.min_max().unwrap();
            assert!(min < max, "{h} is constant");
        }
    }

    #[test]
    fn perfect_and_hopeless_predictors() {
        let s = spec(30, 30, 1.0, 1.0, 1);
        let (ds, _) = gen_dataset(&s).unwrap();
        let preds = gen_predictions(&ds, &s).unwrap();
        for x in &ds.samples {
            assert_eq!(preds.get(&x.id).unwrap(), x.answers[0].text);
        }
        let s = spec(30, 30, 0.0, 1.0, 1);
        let preds = gen_predictions(&ds, &s).unwrap();
        for x in ds.samples.iter().filter(|x| x.id.starts_with("synth-g1")) {
            let p = preds.get(&x.id).unwrap();
            assert_eq!(exact_match(p, &x.gold_texts()).unwrap(), 0.0);
            assert_eq!(f1_score(p, &x.gold_texts()).unwrap(), 0.0);
        }
    }

    #[test]
    fn empirical_accuracy_concentrates() {
        let s = spec(5000, 10, 0.9, 0.5, 4);
        let (ds, _) = gen_dataset(&s).unwrap();
        let preds = gen_predictions(&ds, &s).unwrap();
        let g1: Vec<&QaSample> = ds.samples.iter().filter(|x| x.id.starts_with("synth-g1")).collect();
        let em = g1
            .iter()
            .map(|x| exact_match(preds.get(&x.id).unwrap(), &x.gold_texts()).unwrap())
            .sum::<f64>()
            / g1.len() as f64;
        assert!((0.88..=0.92).contains(&em), "{em}");
    }

    #[test]
    fn oracle_symmetric_case_is_near_zero() {
        let est = expected_bias(&spec(5000, 5000, 0.7, 0.7, 0), &BootstrapConfig::default(), 400).unwrap();
        assert!(est.mean <= 0.005, "{est:?}");
    }

    #[test]
    fn oracle_planted_case_matches_normal_approximation() {
        let est = expected_bias(&spec(5000, 5000, 0.9, 0.5, 0), &BootstrapConfig::default(), 1000).unwrap();
        let z = 1.959_963_984_540_054;
        let closed = 0.4 - z * ((0.9f64 * 0.1 / 800.0).sqrt() + (0.25f64 / 800.0).sqrt());
        assert!((closed - 0.3446).abs() < 1e-3);
        assert!((est.mean - closed).abs() < 0.01, "{est:?} vs {closed}");
        assert!((est.mean - 0.344).abs() < 0.01);
        assert!(est.sd > 0.0 && est.sd < 0.02);
    }

    #[test]
    fn oracle_wider_band_is_larger() {
        let s = spec(5000, 5000, 0.9, 0.5, 0);
        let narrow = expected_bias(&s, &BootstrapConfig::default(), 300).unwrap();
        let wide_cfg = BootstrapConfig {
            q_lo: 0.25,
            q_hi: 0.75,
            ..Default::default()
        };
        let wide = expected_bias(&s, &wide_cfg, 300).unwrap();
        assert!(wide.mean > narrow.mean);
    }

    #[test]
    fn oracle_vanishes_as_groups_grow() {
        for n in [1000, 5000, 20000] {
            let est = expected_bias(&spec(n, n, 0.6, 0.6, 0), &BootstrapConfig::default(), 200).unwrap();
            assert!(est.mean <= 0.005, "n={n}: {est:?}");
        }
    }

    #[test]
    fn oracle_rejects_few_replications() {
        assert!(expected_bias(&PlantSpec::default(), &BootstrapConfig::default(), 50).is_err());
    }

    #[test]
    fn materialized_agrees_with_oracle() {
        for (i, (p1, p2)) in [(0.9, 0.5), (0.75, 0.6), (0.55, 0.8)].into_iter().enumerate() {
            let s = spec(4000, 4000, p1, p2, 20 + i as u64);
            let (ds, table) = gen_dataset(&s).unwrap();
            let preds = gen_predictions(&ds, &s).unwrap();
            let cfg = BootstrapConfig::with_seed(i as u64);
            let m = measure_bias(&ds, &table, s.threshold, &preds, Metric::ExactMatch, &cfg).unwrap();
            let est = expected_bias(&s, &cfg, 300).unwrap();
            assert!(
                (m.bias - est.mean).abs() <= 3.0 * est.sd,
                "spec {s:?}: measured {} vs oracle {est:?}",
                m.bias
            );
        }
    }

    #[test]
    fn spec_validation() {
        assert!(PlantSpec { a1: 5.0, ..Default::default() }.validate().is_err());
        assert!(PlantSpec { p1: 1.5, ..Default::default() }.validate().is_err());
        assert!(PlantSpec { n2: 0, ..Default::default() }.validate().is_err());
        let parsed: PlantSpec = serde_json::from_str(r#"{"n1": 10, "p2": 0.2}"#).unwrap();
        assert_eq!((parsed.n1, parsed.n2, parsed.p2), (10, 5000, 0.2));
    }
}
