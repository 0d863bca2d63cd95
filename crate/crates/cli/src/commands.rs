use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use indexmap::IndexMap;
use log::{info, warn};
use serde_json::json;

use qabias_core::corpus::{load_annotations, load_dataset, load_predictions, AnnotationSet, Dataset, PredictionSet};
use qabias_core::debias::{export_splits, extend_attributes, resample};
use qabias_core::heuristics::{
    compute_attributes, default_threshold, fit_tfidf_on, AttributeTable, HeuristicDeps, HeuristicId,
};
use qabias_core::lexicon::{EntityMapping, Lexicon};
use qabias_core::report::{
    cross_bias_matrix, render_chart, render_matrix, render_matrix_chart, render_report, ReportFormat, ScoreTable,
};
use qabias_core::stats::{
    evaluate_full, human_bias_per_annotator, measure_bias, threshold_search, BiasMeasurement, HumanConfig,
};
use qabias_core::synth::{expected_bias, gen_dataset, gen_predictions, PlantSpec};
use qabias_core::{Error, TOOLKIT_VERSION};

use crate::manifest::{manifest_path, RunManifest};
use crate::{
    AttributesArgs, Cli, Command, CrossBiasArgs, EvaluateArgs, GlobalOpts, MeasureArgs, ReportArgs, SplitArgs,
    SynthArgs, ThresholdArg,
};

const FORMATS: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Markdown, ReportFormat::Csv];

pub fn install_workers(workers: Option<usize>) -> Result<()> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--workers must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("could not start the worker pool")?;
    Ok(())
}

/// What a command read and wrote, for its manifest.
struct Record {
    out: PathBuf,
    out_is_dir: bool,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config_digest: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let started_at = now();
    let g = &cli.global;
    let record = match &cli.command {
        Command::Attributes(a) => attributes(a)?,
        Command::Measure(a) => measure(g, a)?,
        Command::Resample(a) => cmd_resample(g, a)?,
        Command::Human(a) => human(g, a)?,
        Command::CrossBias(a) => cross_bias(a)?,
        Command::Synth(a) => synth(g, a)?,
        Command::Report(a) => report(a)?,
        Command::Evaluate(a) => evaluate(g, a)?,
        Command::ExportSplits(a) => cmd_export_splits(a)?,
        Command::Replay(a) => return replay(&a.manifest),
    };
    let command = serde_json::to_value(&cli.command)?;
    let name = command
        .as_object()
        .and_then(|o| o.keys().next().cloned())
        .unwrap_or_default();
    let manifest = RunManifest {
        command: name,
        argv,
        cwd: std::env::current_dir().context("cannot read the working directory")?,
        inputs: record.inputs,
        outputs: record.outputs,
        config: json!({ "global": g, "command": command }),
        seed: g.seed,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config_digest: record.config_digest,
        started_at,
        finished_at: now(),
    };
    let path = manifest_path(&record.out, record.out_is_dir);
    write_text(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let manifest = RunManifest::load(path)?;
    let cli = <Cli as clap::Parser>::try_parse_from(&manifest.argv)
        .map_err(|e| Error::Config(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!(Error::Config("a manifest cannot replay another replay".into()));
    }
    std::env::set_current_dir(&manifest.cwd).map_err(|e| Error::io(&manifest.cwd, e))?;
    info!("replaying `{}` from {}", manifest.command, path.display());
    run(cli, manifest.argv)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn dataset(path: &Path) -> Result<Dataset> {
    Ok(load_dataset(path)?.value)
}

fn attributes_for(path: &Path, dataset: &Dataset) -> Result<AttributeTable> {
    let table = AttributeTable::load(path)?;
    table.check_covers(dataset)?;
    Ok(table)
}

fn resolve_threshold(t: ThresholdArg, heuristic: HeuristicId) -> Result<f64> {
    match t {
        ThresholdArg::Value(v) => Ok(v),
        ThresholdArg::Auto => default_threshold(heuristic)
            .ok_or_else(|| Error::Config(format!("no shipped threshold for `{heuristic}`; pass a number")).into()),
    }
}

fn attributes(a: &AttributesArgs) -> Result<Record> {
    let heuristics: Vec<HeuristicId> = if a.heuristic == "all" {
        HeuristicId::ALL.to_vec()
    } else {
        vec![a.heuristic.parse()?]
    };
    let ds = dataset(&a.dataset)?;
    let mut inputs = vec![a.dataset.clone()];

    let custom;
    let lexicon: &Lexicon = match &a.entity_mapping {
        Some(path) => {
            inputs.push(path.clone());
            custom = Lexicon::with_entity_mapping(EntityMapping::load(path)?);
            &custom
        }
        None => Lexicon::builtin(),
    };
    let annotations: Option<AnnotationSet> = match &a.annotations {
        Some(path) => {
            inputs.push(path.clone());
            Some(load_annotations(path, Some(&ds))?.value)
        }
        None => None,
    };
    let tfidf = if heuristics.iter().any(|h| h.needs_tfidf()) {
        Some(fit_tfidf_on(&ds)?)
    } else {
        None
    };
    let deps = HeuristicDeps {
        lexicon,
        tfidf: tfidf.as_ref(),
        annotations: annotations.as_ref(),
        fallback_annotator: a.fallback_annotator,
    };

    let out_is_dir = heuristics.len() > 1;
    let mut outputs = Vec::new();
    for h in heuristics {
        let table = compute_attributes(&ds, h, &deps)?;
        let path = if out_is_dir {
            ensure_dir(&a.out)?;
            a.out.join(format!("{h}.json"))
        } else {
            a.out.clone()
        };
        write_text(&path, &(table.to_json()? + "\n"))?;
        info!("{h}: {} values -> {}", table.values.len(), path.display());
        outputs.push(path);
    }
    Ok(Record {
        out: a.out.clone(),
        out_is_dir,
        inputs,
        outputs,
        config_digest: lexicon.digest().to_string(),
    })
}

fn predictions(path: &Path, model_name: Option<&str>) -> Result<PredictionSet> {
    let mut preds = load_predictions(path)?.value;
    if let Some(name) = model_name {
        preds.model_name = name.to_string();
    }
    Ok(preds)
}

fn measure(g: &GlobalOpts, a: &MeasureArgs) -> Result<Record> {
    let ds = dataset(&a.dataset)?;
    let attrs = attributes_for(&a.attributes, &ds)?;
    let preds = predictions(&a.predictions, a.model_name.as_deref())?;
    let cfg = g.bootstrap();
    let mut outputs = vec![a.out.clone()];
    let measurement = if a.search {
        let outcome = threshold_search(&ds, &attrs, &preds, g.metric, &cfg)
            .context("threshold search failed")?;
        let trace = json!({
            "heuristic": attrs.heuristic,
            "metric": g.metric,
            "best_threshold": outcome.best_threshold,
            "candidates": outcome.candidates,
        });
        let trace_path = sibling(&a.out, "trace.json");
        write_text(&trace_path, &(serde_json::to_string_pretty(&trace)? + "\n"))?;
        outputs.push(trace_path);
        outcome.best
    } else {
        let t = resolve_threshold(a.threshold.expect("clap requires a threshold"), attrs.heuristic)?;
        measure_bias(&ds, &attrs, t, &preds, g.metric, &cfg)?
    };
    for w in &measurement.warnings {
        warn!("{w}");
    }
    write_text(&a.out, &(measurement.to_json()? + "\n"))?;
    info!(
        "{} {} at {}: bias {:.3}",
        measurement.provenance.model_name, measurement.heuristic, measurement.threshold, measurement.bias
    );
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: false,
        inputs: vec![a.dataset.clone(), a.predictions.clone(), a.attributes.clone()],
        outputs,
        config_digest: attrs.config_digest,
    })
}

fn cmd_resample(g: &GlobalOpts, a: &SplitArgs) -> Result<Record> {
    let ds = dataset(&a.dataset)?;
    let attrs = attributes_for(&a.attributes, &ds)?;
    let t = resolve_threshold(a.threshold, attrs.heuristic)?;
    let (resampled, plan) = resample(&ds, &attrs, t, g.seed)?;
    let provenance = json!({
        "heuristic": plan.heuristic,
        "threshold": plan.threshold,
        "underrepresented_group": plan.underrepresented_group,
        "group_sizes": plan.group_sizes,
        "n_added": plan.n_added,
        "seed": plan.seed,
        "toolkit_version": TOOLKIT_VERSION,
    });
    write_text(&a.out, &(resampled.to_squad_json(Some(provenance))? + "\n"))?;
    let plan_path = sibling(&a.out, "plan.json");
    write_text(&plan_path, &(serde_json::to_string_pretty(&plan)? + "\n"))?;
    let attrs_path = sibling(&a.out, "attributes.json");
    write_text(&attrs_path, &(extend_attributes(&attrs, &plan)?.to_json()? + "\n"))?;
    info!("added {} duplicates to group {}", plan.n_added, plan.underrepresented_group);
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: false,
        inputs: vec![a.dataset.clone(), a.attributes.clone()],
        outputs: vec![a.out.clone(), plan_path, attrs_path],
        config_digest: attrs.config_digest,
    })
}

fn human(g: &GlobalOpts, a: &SplitArgs) -> Result<Record> {
    let ds = dataset(&a.dataset)?;
    let attrs = attributes_for(&a.attributes, &ds)?;
    let t = resolve_threshold(a.threshold, attrs.heuristic)?;
    let per = human_bias_per_annotator(&ds, &attrs, t, g.metric, &g.bootstrap(), &HumanConfig::default())?;
    let mut best: Option<&BiasMeasurement> = None;
    let mut summary = Vec::new();
    for (i, r) in per.iter().enumerate() {
        match r {
            Ok(m) => {
                summary.push(json!({ "annotator": i, "bias": m.bias, "n1": m.n1, "n2": m.n2 }));
                if best.is_none_or(|b| m.bias < b.bias) {
                    best = Some(m);
                }
            }
            Err(e) => {
                warn!("annotator {i} skipped: {e}");
                summary.push(json!({ "annotator": i, "error": e.to_string() }));
            }
        }
    }
    let best = best.ok_or_else(|| Error::Statistics("no annotator could be measured".into()))?;
    write_text(&a.out, &(best.to_json()? + "\n"))?;
    let per_path = sibling(&a.out, "annotators.json");
    write_text(&per_path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: false,
        inputs: vec![a.dataset.clone(), a.attributes.clone()],
        outputs: vec![a.out.clone(), per_path],
        config_digest: attrs.config_digest,
    })
}

fn cmd_export_splits(a: &SplitArgs) -> Result<Record> {
    let ds = dataset(&a.dataset)?;
    let attrs = attributes_for(&a.attributes, &ds)?;
    let t = resolve_threshold(a.threshold, attrs.heuristic)?;
    let (p1, p2) = export_splits(&ds, &attrs, t, &a.out)?;
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: true,
        inputs: vec![a.dataset.clone(), a.attributes.clone()],
        outputs: vec![p1, p2],
        config_digest: attrs.config_digest,
    })
}

/// Files that sit next to measurements but are not measurements.
fn is_sidecar(name: &str) -> bool {
    [".manifest.json", ".trace.json", ".annotators.json", ".plan.json"]
        .iter()
        .any(|s| name.ends_with(s))
        || name == "manifest.json"
}

/// Measurement files from a mix of files and directories, in sorted order.
fn collect_measurements(paths: &[PathBuf]) -> Result<(Vec<BiasMeasurement>, Vec<PathBuf>)> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            for entry in std::fs::read_dir(p).map_err(|e| Error::io(p, e))? {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                if name.ends_with(".json") && !is_sidecar(&name) && path.is_file() {
                    found.push(path);
                }
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!(Error::Validation("no measurement files found".into()));
    }
    let measurements = files.iter().map(|f| BiasMeasurement::load(f)).collect::<qabias_core::Result<Vec<_>>>()?;
    Ok((measurements, files))
}

fn report(a: &ReportArgs) -> Result<Record> {
    let (measurements, inputs) = collect_measurements(&a.measurements)?;
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    for f in FORMATS {
        let path = a.out.join(format!("report.{}", f.extension()));
        write_text(&path, &render_report(&measurements, f)?)?;
        outputs.push(path);
    }
    let chart = a.out.join("chart.svg");
    write_text(&chart, &render_chart(&measurements)?)?;
    outputs.push(chart);
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: true,
        inputs,
        outputs,
        config_digest: measurements[0].provenance.config_digest.clone(),
    })
}

fn cross_bias(a: &CrossBiasArgs) -> Result<Record> {
    let (baseline, mut inputs) = collect_measurements(std::slice::from_ref(&a.baseline))?;
    let mut variants = IndexMap::new();
    for spec in &a.variant {
        let (name, dir) = match spec.split_once('=') {
            Some((n, d)) => (n.to_string(), PathBuf::from(d)),
            None => {
                let dir = PathBuf::from(spec);
                let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| spec.clone());
                (name, dir)
            }
        };
        let (ms, files) = collect_measurements(&[dir])?;
        inputs.extend(files);
        if variants.insert(name.clone(), ms).is_some() {
            bail!(Error::Config(format!("variant `{name}` given twice")));
        }
    }
    let matrix = cross_bias_matrix(&baseline, &variants)?;
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    for f in FORMATS {
        let path = a.out.join(format!("matrix.{}", f.extension()));
        write_text(&path, &render_matrix(&matrix, f)?)?;
        outputs.push(path);
    }
    let chart = a.out.join("matrix.svg");
    write_text(&chart, &render_matrix_chart(&matrix)?)?;
    outputs.push(chart);
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: true,
        inputs,
        outputs,
        config_digest: baseline[0].provenance.config_digest.clone(),
    })
}

fn synth(g: &GlobalOpts, a: &SynthArgs) -> Result<Record> {
    let spec = match &a.spec {
        Some(p) => PlantSpec::load(p)?,
        None => PlantSpec::default(),
    };
    let (ds, table) = gen_dataset(&spec)?;
    let preds = gen_predictions(&ds, &spec)?;
    let cfg = g.bootstrap();
    let oracle = expected_bias(&spec, &cfg, a.replications)?;
    ensure_dir(&a.out)?;
    let files = [
        ("dataset.json", ds.to_squad_json(Some(json!({ "plant": spec })))?),
        ("attributes.json", table.to_json()?),
        ("predictions.json", preds.to_json()?),
        (
            "oracle.json",
            serde_json::to_string_pretty(&json!({ "spec": spec, "config": cfg, "expected_bias": oracle }))?,
        ),
    ];
    let mut outputs = Vec::new();
    for (name, text) in files {
        let path = a.out.join(name);
        write_text(&path, &(text + "\n"))?;
        outputs.push(path);
    }
    info!("expected bias {:.4} (sd {:.4})", oracle.mean, oracle.sd);
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: true,
        inputs: a.spec.iter().cloned().collect(),
        outputs,
        config_digest: table.config_digest,
    })
}

fn evaluate(g: &GlobalOpts, a: &EvaluateArgs) -> Result<Record> {
    let datasets: Vec<Dataset> = a.dataset.iter().map(|p| dataset(p)).collect::<Result<_>>()?;
    let mut inputs = a.dataset.clone();
    let mut models: IndexMap<String, PredictionSet> = IndexMap::new();
    for spec in &a.predictions {
        let (model, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--predictions expects MODEL=FILE, got `{spec}`")))?;
        let path = PathBuf::from(path);
        let loaded = predictions(&path, Some(model))?;
        inputs.push(path);
        let merged = models.entry(model.to_string()).or_insert_with(|| PredictionSet::new(model));
        for (id, answer) in loaded.predictions {
            merged.insert(id, answer);
        }
    }
    let mut table = ScoreTable::new(g.metric, datasets.iter().map(|d| d.name.clone()).collect());
    for (model, preds) in &models {
        let scores = datasets
            .iter()
            .map(|d| evaluate_full(d, preds, g.metric).with_context(|| format!("model `{model}` on `{}`", d.name)))
            .collect::<Result<Vec<f64>>>()?;
        table.push(model, scores)?;
    }
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    for f in FORMATS {
        let path = a.out.join(format!("scores.{}", f.extension()));
        write_text(&path, &table.render(f)?)?;
        outputs.push(path);
    }
    Ok(Record {
        out: a.out.clone(),
        out_is_dir: true,
        inputs,
        outputs,
        config_digest: Lexicon::builtin().digest().to_string(),
    })
}
