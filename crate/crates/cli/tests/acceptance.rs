//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails. Criterion 6 needs real data; point
//! `QABIAS_SQUAD_DEV` at the SQuAD 1.1 dev file and
//! `QABIAS_SQUAD_PREDICTIONS` at a BERT-base prediction file to run it.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use indexmap::IndexMap;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use qabias_core::corpus::{AnswerSpan, Dataset, PredictionSet, QaSample};
use qabias_core::debias::resample;
use qabias_core::heuristics::{compute_attributes, default_threshold, fit_tfidf_on, AttributeTable, HeuristicDeps, HeuristicId};
use qabias_core::stats::{
    exact_match, f1_score, human_bias, measure_bias, split, threshold_search, BootstrapConfig, HumanConfig, Metric,
};
use qabias_core::synth::{expected_bias, gen_dataset, gen_predictions, PlantSpec};
use qabias_core::TOOLKIT_VERSION;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn qabias() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qabias"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = qabias().args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("qabias {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn plant(n: usize, p1: f64, p2: f64, seed: u64) -> PlantSpec {
    PlantSpec {
        n1: n,
        n2: n,
        p1,
        p2,
        seed,
        ..Default::default()
    }
}

fn planted_bias(spec: &PlantSpec, cfg: &BootstrapConfig) -> f64 {
    let (ds, table) = gen_dataset(spec).unwrap();
    let preds = gen_predictions(&ds, spec).unwrap();
    measure_bias(&ds, &table, spec.threshold, &preds, Metric::ExactMatch, cfg).unwrap().bias
}

fn c1_null() -> Verdict {
    let start = Instant::now();
    let biases: Vec<f64> = (0..200u64)
        .map(|seed| planted_bias(&plant(5000, 0.7, 0.7, seed), &BootstrapConfig::with_seed(seed)))
        .collect();
    let zero = biases.iter().filter(|b| **b == 0.0).count() as f64 / biases.len() as f64;
    let max = biases.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        zero >= 0.95 && max <= 0.02 && secs < 60.0,
        format!("zero in {:.1}% of 200 seeds, max {max:.4}, {secs:.1}s", zero * 100.0),
    )
}

fn c2_planted() -> Verdict {
    let start = Instant::now();
    let spec = plant(5000, 0.9, 0.5, 0);
    let cfg = BootstrapConfig::default();
    let measured = planted_bias(&spec, &cfg);
    let oracle = expected_bias(&spec, &cfg, 1000).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let within = (measured - oracle.mean).abs() <= 3.0 * oracle.sd;
    let near = (oracle.mean - 0.344).abs() < 0.01;
    verdict(
        within && near && secs < 60.0,
        format!(
            "measured {measured:.4}, oracle {:.4} +- {:.4} (1000 reps), {secs:.1}s",
            oracle.mean, oracle.sd
        ),
    )
}

fn c3_monotone() -> Verdict {
    let gaps = [0.0, 0.1, 0.2, 0.4];
    let mut broken = Vec::new();
    for seed in 0..10u64 {
        let series: Vec<f64> = gaps
            .iter()
            .map(|g| planted_bias(&plant(5000, 0.5 + g, 0.5, seed), &BootstrapConfig::with_seed(seed)))
            .collect();
        if series.windows(2).any(|w| w[1] < w[0]) {
            broken.push(format!("seed {seed}: {series:?}"));
        }
    }
    verdict(
        broken.is_empty(),
        if broken.is_empty() {
            "non-decreasing for all 10 seeds".into()
        } else {
            broken.join("; ")
        },
    )
}

/// Hand-computed; cross-checked against the reference SQuAD scoring rules.
const GOLDEN: [(&str, &[&str], f64, f64); 20] = [
    ("Paris", &["Paris"], 1.0, 1.0),
    ("the Paris", &["Paris"], 1.0, 1.0),
    ("paris!", &["Paris"], 1.0, 1.0),
    ("The Eiffel Tower.", &["eiffel tower"], 1.0, 1.0),
    ("Eiffel", &["Eiffel Tower"], 0.0, 2.0 / 3.0),
    ("Eiffel Tower in Paris", &["Eiffel Tower"], 0.0, 2.0 / 3.0),
    ("London", &["Paris"], 0.0, 0.0),
    ("", &["Paris"], 0.0, 0.0),
    ("", &[""], 1.0, 1.0),
    ("a an the", &["the"], 1.0, 1.0),
    ("Rome", &["Paris", "Rome"], 1.0, 1.0),
    ("New York City", &["New York", "York City area"], 0.0, 0.8),
    ("1,000 men", &["1000 men"], 1.0, 1.0),
    ("U.S. Army", &["US Army"], 1.0, 1.0),
    ("red red blue", &["red blue blue"], 0.0, 2.0 / 3.0),
    ("  Paris   France ", &["Paris France"], 1.0, 1.0),
    ("the cat sat", &["a dog sat"], 0.0, 0.5),
    ("theater", &["the ater"], 0.0, 0.0),
    ("Anthem", &["an them"], 0.0, 0.0),
    ("1889", &["in 1889", "1889."], 1.0, 1.0),
];

fn c4_metrics() -> Verdict {
    let mut wrong = Vec::new();
    for (pred, golds, em, f1) in GOLDEN {
        let got_em = exact_match(pred, golds).unwrap();
        let got_f1 = f1_score(pred, golds).unwrap();
        if (got_em - em).abs() > 1e-9 || (got_f1 - f1).abs() > 1e-9 {
            wrong.push(format!("{pred:?} vs {golds:?}: EM {got_em} F1 {got_f1}"));
        }
    }
    verdict(
        wrong.is_empty(),
        if wrong.is_empty() {
            "20/20 pairs match to 1e-9".into()
        } else {
            wrong.join("; ")
        },
    )
}

/// 2,000 synthetic samples; attributes mix fractions in [0, 1) with whole
/// numbers up to 12, and correctness drops for larger attributes.
fn mixed_instance(seed: u64) -> (Dataset, AttributeTable, PredictionSet) {
    let (ds, mut table) = gen_dataset(&plant(1000, 1.0, 1.0, seed)).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut preds = PredictionSet::new("mixed");
    for s in &ds.samples {
        let a = if rng.random_bool(0.4) {
            (rng.random_range(0..100) as f64) / 100.0
        } else {
            rng.random_range(0..=12) as f64
        };
        table.values.insert(s.id.clone(), a);
        let p = if a <= 5.0 { 0.85 } else { 0.6 };
        let answer = if rng.random_bool(p) { s.answers[0].text.as_str() } else { "zilch" };
        preds.insert(s.id.clone(), answer);
    }
    table.heuristic = HeuristicId::WordDist;
    (ds, table, preds)
}

fn brute_force(ds: &Dataset, table: &AttributeTable, preds: &PredictionSet, cfg: &BootstrapConfig) -> Option<(f64, f64)> {
    let grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let (min, max) = table
        .values
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let mut thresholds: Vec<f64> = grid.to_vec();
    let mut k = 2.0;
    while k <= max.floor() {
        thresholds.push(k);
        k += 1.0;
    }
    thresholds.retain(|t| *t >= min && *t <= max);
    let mut measured = Vec::new();
    for t in thresholds {
        let low = table.values.values().filter(|v| **v <= t).count();
        let small = low.min(table.values.len() - low);
        if small < cfg.sample_size {
            continue;
        }
        let bias = measure_bias(ds, table, t, preds, Metric::ExactMatch, cfg).unwrap().bias;
        measured.push((t, bias, small >= 2 * cfg.sample_size));
    }
    let positive: Vec<&(f64, f64, bool)> = measured.iter().filter(|m| m.1 > 0.0).collect();
    let lone = if positive.len() == 1 { Some(positive[0].0) } else { None };
    let mut best: Option<(f64, f64)> = None;
    for (t, bias, big) in &measured {
        if !(*big || lone == Some(*t)) {
            continue;
        }
        if best.is_none_or(|(_, b)| *bias > b) {
            best = Some((*t, *bias));
        }
    }
    best
}

fn c5_search() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let (ds, table, preds) = mixed_instance(seed);
        let cfg = BootstrapConfig {
            sample_size: 200,
            ..BootstrapConfig::with_seed(seed)
        };
        let expected = brute_force(&ds, &table, &preds, &cfg);
        let got = threshold_search(&ds, &table, &preds, Metric::ExactMatch, &cfg)
            .ok()
            .map(|o| (o.best_threshold, o.best.bias));
        let same = match (expected, got) {
            (Some((t1, b1)), Some((t2, b2))) => t1 == t2 && (b1 - b2).abs() <= 1e-9,
            _ => false,
        };
        ok &= same;
        notes.push(format!("seed {seed}: search {got:?} brute {expected:?}"));
    }
    verdict(ok, format!("2,000 samples, sample size 200; {}", notes.join("; ")))
}

fn c6_published() -> Verdict {
    let defaults = [
        (HeuristicId::WordDist, 7.0),
        (HeuristicId::SimWord, 3.0),
        (HeuristicId::AnsLen, 4.0),
        (HeuristicId::CosSim, 0.1),
    ];
    let shipped_ok = defaults.iter().all(|(h, t)| default_threshold(*h) == Some(*t));
    if !shipped_ok {
        return Verdict::Fail("shipped default thresholds differ from 7 / 3 / 4 / 0.1".into());
    }
    let (Ok(dev), Ok(pred)) = (std::env::var("QABIAS_SQUAD_DEV"), std::env::var("QABIAS_SQUAD_PREDICTIONS")) else {
        return Verdict::Skip(
            "shipped defaults verified; set QABIAS_SQUAD_DEV and QABIAS_SQUAD_PREDICTIONS for the reproduction".into(),
        );
    };
    let ds = qabias_core::corpus::load_dataset(Path::new(&dev)).unwrap().value;
    let preds = qabias_core::corpus::load_predictions(Path::new(&pred)).unwrap().value;
    let tfidf = fit_tfidf_on(&ds).unwrap();
    let deps = HeuristicDeps {
        tfidf: Some(&tfidf),
        ..Default::default()
    };
    let published = [
        (HeuristicId::WordDist, 1651.0),
        (HeuristicId::SimWord, 3281.0),
        (HeuristicId::AnsLen, 3124.0),
        (HeuristicId::CosSim, 954.0),
    ];
    let cfg = BootstrapConfig::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for ((h, default), (_, size)) in defaults.iter().zip(published) {
        let table = compute_attributes(&ds, *h, &deps).unwrap();
        let searched = threshold_search(&ds, &table, &preds, Metric::ExactMatch, &cfg).unwrap();
        let step = if *default < 1.0 { 0.1 } else { 1.0 };
        let near = (searched.best_threshold - default).abs() <= step + 1e-9;
        let at_default = measure_bias(&ds, &table, *default, &preds, Metric::ExactMatch, &cfg).unwrap();
        let worse = if at_default.worse_split == 1 { at_default.n1 } else { at_default.n2 } as f64;
        let sized = (worse - size).abs() <= 0.15 * size;
        ok &= near && sized;
        notes.push(format!("{h}: optimum {} worse group {worse}", searched.best_threshold));
    }
    verdict(ok, notes.join("; "))
}

fn c7_resam() -> Verdict {
    let spec = PlantSpec {
        n1: 300,
        n2: 1000,
        ..Default::default()
    };
    let (ds, table) = gen_dataset(&spec).unwrap();
    let mut problems = Vec::new();
    for seed in [0u64, 7] {
        let (out, plan) = resample(&ds, &table, spec.threshold, seed).unwrap();
        let extended = qabias_core::debias::extend_attributes(&table, &plan).unwrap();
        let (g1, g2) = split(&out, &extended, spec.threshold).unwrap();
        if g1.len() != g2.len() {
            problems.push(format!("seed {seed}: sizes {} / {}", g1.len(), g2.len()));
        }
        if out.samples[..ds.len()] != ds.samples[..] {
            problems.push(format!("seed {seed}: original samples changed"));
        }
        for added in &out.samples[ds.len()..] {
            let source = plan.duplicates.iter().find(|d| d.id == added.id).and_then(|d| ds.get(&d.source));
            let same = source.is_some_and(|s| {
                s.context == added.context && s.question == added.question && s.answers == added.answers
            });
            if !same {
                problems.push(format!("seed {seed}: {} is not a duplicate", added.id));
                break;
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("d.json"), ds.to_squad_json(None).unwrap()).unwrap();
    std::fs::write(d.join("a.json"), table.to_json().unwrap()).unwrap();
    let mut outputs = Vec::new();
    for name in ["r1.json", "r2.json"] {
        let out = d.join(name);
        if let Err(e) = run_cli(&[
            "resample",
            "--dataset",
            p(&d.join("d.json")),
            "--attributes",
            p(&d.join("a.json")),
            "--threshold",
            "4",
            "--seed",
            "11",
            "--out",
            p(&out),
        ]) {
            return Verdict::Fail(e);
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    if outputs[0] != outputs[1] {
        problems.push("CLI reruns differ".into());
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "300/1000 split balanced to 1000/1000 with duplicates only; reruns byte-identical".into()
        } else {
            problems.join("; ")
        },
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn c8_workers() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), r#"{"n1": 3000, "n2": 3000, "p1": 0.8, "p2": 0.7}"#).unwrap();
    let syn = d.join("syn");
    if let Err(e) = run_cli(&["synth", "--spec", p(&d.join("spec.json")), "--out", p(&syn), "--replications", "100"]) {
        return Verdict::Fail(e);
    }
    let mut differing = Vec::new();
    for seed in 0..5 {
        let seed = seed.to_string();
        let mut files = Vec::new();
        for workers in ["1", "8"] {
            let out = d.join(format!("m-{seed}-{workers}.json"));
            if let Err(e) = run_cli(&[
                "measure",
                "--dataset",
                p(&syn.join("dataset.json")),
                "--predictions",
                p(&syn.join("predictions.json")),
                "--attributes",
                p(&syn.join("attributes.json")),
                "--threshold",
                "auto",
                "--seed",
                &seed,
                "--workers",
                workers,
                "--out",
                p(&out),
            ]) {
                return Verdict::Fail(e);
            }
            files.push(std::fs::read(&out).unwrap());
        }
        if files[0] != files[1] {
            differing.push(seed);
        }
    }
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            "5 seeds byte-identical with 1 and 8 workers".into()
        } else {
            format!("differing seeds: {differing:?}")
        },
    )
}

fn qa(id: String, answers: &[&str]) -> QaSample {
    let context = format!("Some say {}.", answers.join(" or "));
    let mut offset = "Some say ".len();
    let spans = answers
        .iter()
        .map(|a| {
            let span = AnswerSpan {
                text: a.to_string(),
                start_char: offset,
            };
            offset += a.len() + " or ".len();
            span
        })
        .collect();
    QaSample {
        id,
        title: None,
        context,
        question: "Which city?".into(),
        answers: spans,
    }
}

/// Annotator 0 disagrees only in group 2; some samples have two answers and
/// a few have one.
fn human_fixture() -> (Dataset, AttributeTable) {
    let mut samples = Vec::new();
    let mut values = IndexMap::new();
    for i in 0..120 {
        let (g, answers): (f64, &[&str]) = match i % 6 {
            0 | 1 => (0.0, &["Paris", "Paris", "Paris"]),
            2 => (0.0, &["Lyon", "Lyon"]),
            3 => (1.0, &["Milan", "Rome", "Rome"]),
            4 => (1.0, &["Rome", "Rome"]),
            _ => (1.0, &["Rome"]),
        };
        let id = format!("h{i}");
        samples.push(qa(id.clone(), answers));
        values.insert(id, g);
    }
    let table = AttributeTable {
        heuristic: HeuristicId::SubjPos,
        dataset_name: "human".into(),
        toolkit_version: TOOLKIT_VERSION.into(),
        config_digest: "fixture".into(),
        values,
    };
    (
        Dataset {
            name: "human".into(),
            samples,
        },
        table,
    )
}

/// One annotator's answers as a prediction file over the samples it covers,
/// with the remaining answers as gold.
fn as_model(ds: &Dataset, table: &AttributeTable, a: usize) -> (Dataset, AttributeTable, PredictionSet) {
    let mut samples = Vec::new();
    let mut values = IndexMap::new();
    let mut preds = PredictionSet::new(format!("annotator-{a}"));
    for s in &ds.samples {
        if s.answers.len() < 2 || s.answers.len() <= a {
            continue;
        }
        let mut golds = s.answers.clone();
        let own = golds.remove(a);
        preds.insert(s.id.clone(), own.text);
        values.insert(s.id.clone(), table.values[&s.id]);
        samples.push(QaSample {
            answers: golds,
            ..s.clone()
        });
    }
    (
        Dataset {
            name: ds.name.clone(),
            samples,
        },
        AttributeTable {
            values,
            ..table.clone()
        },
        preds,
    )
}

fn c9_human() -> Verdict {
    let (ds, table) = human_fixture();
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let cfg = BootstrapConfig {
            sample_size: 20,
            ..BootstrapConfig::with_seed(seed)
        };
        for metric in [Metric::ExactMatch, Metric::F1] {
            let brute: Vec<f64> = (0..3)
                .map(|a| {
                    let (d, t, preds) = as_model(&ds, &table, a);
                    measure_bias(&d, &t, 0.0, &preds, metric, &cfg).unwrap().bias
                })
                .collect();
            let min = brute.iter().copied().fold(f64::INFINITY, f64::min);
            let argmin = brute.iter().position(|b| *b == min).unwrap();
            let got = human_bias(&ds, &table, 0.0, metric, &cfg, &HumanConfig::default()).unwrap();
            let same = got.bias.to_bits() == min.to_bits()
                && got.provenance.model_name == format!("human-annotator-{argmin}");
            ok &= same;
            if seed == 0 {
                notes.push(format!("{metric} per-annotator {brute:?} -> {}", got.bias));
            }
        }
    }
    verdict(ok, format!("3 seeds x 2 metrics exact; {}", notes.join("; ")))
}

fn c10_end_to_end() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d: PathBuf = dir.path().to_path_buf();
    std::fs::write(d.join("spec.json"), r#"{"n1": 5285, "n2": 5285, "p1": 0.85, "p2": 0.6}"#).unwrap();
    let syn = d.join("syn");
    let attrs = d.join("attrs");
    let measurements = d.join("measurements");
    let steps = || -> Result<(), String> {
        run_cli(&["synth", "--spec", p(&d.join("spec.json")), "--out", p(&syn), "--replications", "100"])?;
        run_cli(&[
            "attributes",
            "--dataset",
            p(&syn.join("dataset.json")),
            "--heuristic",
            "all",
            "--fallback-annotator",
            "--out",
            p(&attrs),
        ])?;
        for h in HeuristicId::ALL {
            run_cli(&[
                "measure",
                "--dataset",
                p(&syn.join("dataset.json")),
                "--predictions",
                p(&syn.join("predictions.json")),
                "--attributes",
                p(&attrs.join(format!("{h}.json"))),
                "--search",
                "--out",
                p(&measurements.join(format!("{h}.json"))),
            ])?;
        }
        run_cli(&["report", "--measurements", p(&measurements), "--out", p(&d.join("report"))])?;
        let svg = std::fs::read_to_string(d.join("report/chart.svg")).map_err(|e| e.to_string())?;
        roxmltree::Document::parse(&svg).map_err(|e| e.to_string())?;
        Ok(())
    };
    let result = steps();
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => verdict(
            secs < 300.0,
            format!("10,570 samples, 7 heuristics searched, report + SVG in {secs:.1}s"),
        ),
        Err(e) => Verdict::Fail(format!("after {secs:.1}s: {e}")),
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1 estimator null soundness", c1_null),
        ("C2 planted-bias recovery", c2_planted),
        ("C3 monotone recovery", c3_monotone),
        ("C4 metric conformance", c4_metrics),
        ("C5 threshold search equals brute force", c5_search),
        ("C6 published thresholds and group sizes", c6_published),
        ("C7 ReSam correctness", c7_resam),
        ("C8 determinism under parallelism", c8_workers),
        ("C9 human baseline", c9_human),
        ("C10 end-to-end desk-scale run", c10_end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let line = match check() {
            Verdict::Pass(d) => format!("[PASS] {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                format!("[FAIL] {name}: {d}")
            }
            Verdict::Skip(d) => format!("[SKIP] {name}: {d}"),
        };
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
