//! Tables, cross-bias matrices and SVG charts over stored measurements.
//!
//! Renderers never recompute statistics; every printed number is a stored
//! field formatted to 3 decimals (tables) or a 1-decimal percentage (charts).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::HeuristicId;
use crate::stats::{BiasMeasurement, Metric};

/// Caption attached to every rendered report and chart.
pub const LEGEND: &str = "Lower bars: score on the worse-performing split. Upper bars: Prediction bias, \
the gap between the bootstrapped 95% intervals of the two splits. The bias is a lower bound: \
the true performance gap is at least this large with probability 0.975 x 0.975.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}` (json, markdown, csv)"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }
}

fn shared_metric(measurements: &[BiasMeasurement]) -> Result<Option<Metric>> {
    let mut metric = None;
    for m in measurements {
        match metric {
            None => metric = Some(m.metric),
            Some(seen) if seen != m.metric => {
                return Err(Error::Validation(format!(
                    "cannot combine {seen} and {} measurements in one report",
                    m.metric
                )))
            }
            _ => {}
        }
    }
    Ok(metric)
}

/// Bias descending; ties by heuristic, then model name.
fn sorted(measurements: &[BiasMeasurement]) -> Vec<&BiasMeasurement> {
    let mut rows: Vec<&BiasMeasurement> = measurements.iter().collect();
    rows.sort_by(|a, b| {
        b.bias
            .total_cmp(&a.bias)
            .then(a.heuristic.cmp(&b.heuristic))
            .then(a.provenance.model_name.cmp(&b.provenance.model_name))
    });
    rows
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

const COLUMNS: [&str; 10] = [
    "model",
    "heuristic",
    "threshold",
    "n1",
    "n2",
    "interval1",
    "interval2",
    "bias",
    "worse_split",
    "worse_split_score",
];

fn row_cells(m: &BiasMeasurement) -> [String; 10] {
    [
        m.provenance.model_name.clone(),
        m.heuristic.to_string(),
        format!("{}", m.threshold),
        m.n1.to_string(),
        m.n2.to_string(),
        format!("[{:.3}, {:.3}]", m.e1_lo, m.e1_hi),
        format!("[{:.3}, {:.3}]", m.e2_lo, m.e2_hi),
        format!("{:.3}", m.bias),
        m.worse_split.to_string(),
        format!("{:.3}", m.worse_split_mean),
    ]
}

#[derive(Serialize)]
struct JsonReport<'a> {
    metric: Option<Metric>,
    legend: &'a str,
    measurements: Vec<&'a BiasMeasurement>,
}

/// One row per measurement, sorted by bias descending. The JSON form embeds
/// every measurement in full, provenance included.
pub fn render_report(measurements: &[BiasMeasurement], format: ReportFormat) -> Result<String> {
    let metric = shared_metric(measurements)?;
    let rows = sorted(measurements);
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(&JsonReport {
                metric,
                legend: LEGEND,
                measurements: rows,
            })?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str("metric,");
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for m in rows {
                let cells = row_cells(m);
                let _ = write!(out, "{}", m.metric);
                for c in &cells {
                    out.push(',');
                    out.push_str(&csv_field(c));
                }
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let metric = metric.map_or("-".to_string(), |m| m.to_string());
            let _ = writeln!(out, "# Prediction bias ({metric})\n");
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
            for m in rows {
                let cells: Vec<String> = row_cells(m).iter().map(|c| md_cell(c)).collect();
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            let _ = writeln!(out, "\n{LEGEND}");
        }
    }
    Ok(out)
}

/// Per-heuristic bias deltas (variant minus baseline) for each variant model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBiasMatrix {
    pub metric: Metric,
    pub rows: Vec<String>,
    pub cols: Vec<HeuristicId>,
    pub cells: Vec<Vec<f64>>,
    pub row_means: Vec<f64>,
}

pub fn cross_bias_matrix(
    baseline: &[BiasMeasurement],
    variants: &IndexMap<String, Vec<BiasMeasurement>>,
) -> Result<CrossBiasMatrix> {
    let metric = shared_metric(baseline)?
        .ok_or_else(|| Error::Validation("baseline has no measurements".into()))?;
    let mut by_heuristic: BTreeMap<HeuristicId, &BiasMeasurement> = BTreeMap::new();
    for m in baseline {
        if by_heuristic.insert(m.heuristic, m).is_some() {
            return Err(Error::Validation(format!(
                "baseline has more than one measurement for heuristic `{}`",
                m.heuristic
            )));
        }
    }
    let cols: Vec<HeuristicId> = by_heuristic.keys().copied().collect();
    let mut cells = Vec::with_capacity(variants.len());
    let mut row_means = Vec::with_capacity(variants.len());
    for (name, measurements) in variants {
        let mut row = Vec::with_capacity(cols.len());
        for h in &cols {
            let base = by_heuristic[h];
            let variant = measurements.iter().find(|m| m.same_setup(base)).ok_or_else(|| {
                Error::Validation(format!(
                    "variant `{name}` has no {} measurement for heuristic `{h}` at threshold {} with the baseline's bootstrap settings",
                    base.metric, base.threshold
                ))
            })?;
            row.push(variant.bias - base.bias);
        }
        row_means.push(row.iter().sum::<f64>() / row.len() as f64);
        cells.push(row);
    }
    Ok(CrossBiasMatrix {
        metric,
        rows: variants.keys().cloned().collect(),
        cols,
        cells,
        row_means,
    })
}

pub fn render_matrix(matrix: &CrossBiasMatrix, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    let header: Vec<String> = matrix.cols.iter().map(|h| h.to_string()).collect();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(matrix)?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            let _ = writeln!(out, "variant,{},mean", header.join(","));
            for (i, name) in matrix.rows.iter().enumerate() {
                out.push_str(&csv_field(name));
                for v in &matrix.cells[i] {
                    let _ = write!(out, ",{v:.3}");
                }
                let _ = writeln!(out, ",{:.3}", matrix.row_means[i]);
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "# Change of Prediction bias against baseline ({})\n", matrix.metric);
            let _ = writeln!(out, "| variant | {} | mean |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len() + 2));
            for (i, name) in matrix.rows.iter().enumerate() {
                let cells: Vec<String> = matrix.cells[i].iter().map(|v| format!("{v:+.3}")).collect();
                let _ = writeln!(
                    out,
                    "| {} | {} | {:+.3} |",
                    md_cell(name),
                    cells.join(" | "),
                    matrix.row_means[i]
                );
            }
        }
    }
    Ok(out)
}

/// Scores of several models on several evaluation datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub metric: Metric,
    pub datasets: Vec<String>,
    /// model name -> one score per dataset
    pub scores: IndexMap<String, Vec<f64>>,
}

impl ScoreTable {
    pub fn new(metric: Metric, datasets: Vec<String>) -> Self {
        ScoreTable {
            metric,
            datasets,
            scores: IndexMap::new(),
        }
    }

    pub fn push(&mut self, model: &str, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.datasets.len() {
            return Err(Error::Validation(format!(
                "model `{model}` has {} scores for {} datasets",
                scores.len(),
                self.datasets.len()
            )));
        }
        self.scores.insert(model.to_string(), scores);
        Ok(())
    }

    /// Rows are models; the first dataset is treated as the reference and
    /// the others also show their difference to it.
    pub fn render(&self, format: ReportFormat) -> Result<String> {
        let mut out = String::new();
        match format {
            ReportFormat::Json => {
                out = serde_json::to_string_pretty(self)?;
                out.push('\n');
            }
            ReportFormat::Csv => {
                let names: Vec<String> = self.datasets.iter().map(|d| csv_field(d)).collect();
                let _ = writeln!(out, "model,{}", names.join(","));
                for (model, scores) in &self.scores {
                    out.push_str(&csv_field(model));
                    for s in scores {
                        let _ = write!(out, ",{s:.3}");
                    }
                    out.push('\n');
                }
            }
            ReportFormat::Markdown => {
                let names: Vec<String> = self.datasets.iter().map(|d| md_cell(d)).collect();
                let _ = writeln!(out, "# Scores ({})\n", self.metric);
                let _ = writeln!(out, "| model | {} |", names.join(" | "));
                let _ = writeln!(out, "|{}", "---|".repeat(names.len() + 1));
                for (model, scores) in &self.scores {
                    let cells: Vec<String> = scores
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            if i == 0 {
                                format!("{s:.3}")
                            } else {
                                format!("{s:.3} ({:+.3})", s - scores[0])
                            }
                        })
                        .collect();
                    let _ = writeln!(out, "| {} | {} |", md_cell(model), cells.join(" | "));
                }
            }
        }
        Ok(out)
    }
}

// Chart layout. Colors cycle per model; the upper (bias) bar uses the full
// color, the lower (worse-split) bar a lighter tint of it.
const PALETTE: [(&str, &str); 6] = [
    ("#1f5f99", "#a9c6e3"),
    ("#b5472b", "#efbfae"),
    ("#2e7d4f", "#b2dcc1"),
    ("#7a4a9c", "#d3bfe3"),
    ("#9a7b12", "#e9d99c"),
    ("#4d4d4d", "#c8c8c8"),
];
const BAR_WIDTH: f64 = 22.0;
const BAR_GAP: f64 = 4.0;
const GROUP_GAP: f64 = 26.0;
const PLOT_HEIGHT: f64 = 300.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 40.0;
const RIGHT: f64 = 180.0;
const BOTTOM: f64 = 110.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Stacked bars per (heuristic, model): worse-split score below, bias on
/// top. Heuristic groups are ordered by their average bias, largest first.
pub fn render_chart(measurements: &[BiasMeasurement]) -> Result<String> {
    if measurements.is_empty() {
        return Err(Error::Validation("a chart needs at least one measurement".into()));
    }
    let metric = shared_metric(measurements)?.expect("non-empty");

    let mut models: Vec<&str> = Vec::new();
    let mut groups: IndexMap<HeuristicId, Vec<&BiasMeasurement>> = IndexMap::new();
    for m in measurements {
        if !models.contains(&m.provenance.model_name.as_str()) {
            models.push(&m.provenance.model_name);
        }
        groups.entry(m.heuristic).or_default().push(m);
    }
    let mut groups: Vec<(HeuristicId, Vec<&BiasMeasurement>, f64)> = groups
        .into_iter()
        .map(|(h, ms)| {
            let avg = ms.iter().map(|m| m.bias).sum::<f64>() / ms.len() as f64;
            (h, ms, avg)
        })
        .collect();
    groups.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let bars: usize = groups.iter().map(|g| g.1.len()).sum();
    let plot_width = bars as f64 * (BAR_WIDTH + BAR_GAP) + groups.len() as f64 * GROUP_GAP;
    let width = LEFT + plot_width + RIGHT;
    let height = TOP + PLOT_HEIGHT + BOTTOM;
    let base_y = TOP + PLOT_HEIGHT;
    let scale = |v: f64| v.clamp(0.0, 1.0) * PLOT_HEIGHT;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, "<title>Prediction bias ({metric})</title>");
    let _ = writeln!(svg, "<desc>{}</desc>", escape(LEGEND));
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##);

    for tick in 0..=10 {
        let v = tick as f64 / 10.0;
        let y = base_y - scale(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e4e4e4"/>"##,
            LEFT + plot_width
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            pct(v)
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{LEFT}" y1="{base_y}" x2="{:.1}" y2="{base_y}" stroke="#333333"/>"##,
        LEFT + plot_width
    );

    let mut x = LEFT + GROUP_GAP / 2.0;
    for (h, ms, _) in &groups {
        let start = x;
        let _ = writeln!(svg, r#"<g class="group" data-heuristic="{h}">"#);
        for m in ms {
            let model = models.iter().position(|n| *n == m.provenance.model_name).unwrap_or(0);
            let (strong, light) = PALETTE[model % PALETTE.len()];
            let lower = scale(m.worse_split_mean);
            let upper = scale(m.bias).min(PLOT_HEIGHT - lower);
            let name = escape(&m.provenance.model_name);
            let _ = writeln!(
                svg,
                r#"<rect class="worse-split" x="{x:.1}" y="{:.1}" width="{BAR_WIDTH}" height="{lower:.1}" fill="{light}"><title>{name} {h}: worse split {}</title></rect>"#,
                base_y - lower,
                pct(m.worse_split_mean)
            );
            let _ = writeln!(
                svg,
                r#"<rect class="bias" x="{x:.1}" y="{:.1}" width="{BAR_WIDTH}" height="{upper:.1}" fill="{strong}"><title>{name} {h}: bias {}</title></rect>"#,
                base_y - lower - upper,
                pct(m.bias)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="9">{}</text>"#,
                x + BAR_WIDTH / 2.0,
                base_y - lower - upper - 3.0,
                pct(m.bias)
            );
            x += BAR_WIDTH + BAR_GAP;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{h}</text>"#,
            (start + x - BAR_GAP) / 2.0,
            base_y + 18.0
        );
        svg.push_str("</g>\n");
        x += GROUP_GAP;
    }

    let lx = LEFT + plot_width + 16.0;
    for (i, model) in models.iter().enumerate() {
        let (strong, light) = PALETTE[i % PALETTE.len()];
        let y = TOP + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="7" height="12" fill="{light}"/><rect x="{:.1}" y="{y:.1}" width="7" height="12" fill="{strong}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 7.0,
            lx + 20.0,
            y + 10.0,
            escape(model)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{LEFT}" y="{:.1}">Lower bars: worse-split {metric}. Upper bars: Prediction bias (lower bound).</text>"#,
        base_y + 44.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_chart(measurements: &[BiasMeasurement], path: &Path) -> Result<()> {
    let svg = render_chart(measurements)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Heatmap of a cross-bias matrix: red cells raise bias, blue cells lower it.
pub fn render_matrix_chart(matrix: &CrossBiasMatrix) -> Result<String> {
    if matrix.rows.is_empty() || matrix.cols.is_empty() {
        return Err(Error::Validation("cannot chart an empty matrix".into()));
    }
    const CELL_W: f64 = 72.0;
    const CELL_H: f64 = 28.0;
    const LABEL_W: f64 = 160.0;
    let cols = matrix.cols.len() + 1;
    let width = LABEL_W + CELL_W * cols as f64 + 20.0;
    let height = TOP + CELL_H * matrix.rows.len() as f64 + 30.0;
    let max_abs = matrix
        .cells
        .iter()
        .flatten()
        .chain(&matrix.row_means)
        .fold(0f64, |acc, v| acc.max(v.abs()));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, "<title>Change of Prediction bias ({})</title>", matrix.metric);
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##);
    let headers = matrix.cols.iter().map(|h| h.to_string()).chain(["mean".to_string()]);
    for (j, name) in headers.enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{name}</text>"#,
            LABEL_W + CELL_W * (j as f64 + 0.5),
            TOP - 10.0
        );
    }
    for (i, row) in matrix.rows.iter().enumerate() {
        let y = TOP + CELL_H * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_W - 8.0,
            y + CELL_H / 2.0 + 4.0,
            escape(row)
        );
        let values = matrix.cells[i].iter().chain(std::iter::once(&matrix.row_means[i]));
        for (j, v) in values.enumerate() {
            let t = if max_abs > 0.0 { v.abs() / max_abs } else { 0.0 };
            let shade = (255.0 - 150.0 * t).round() as u8;
            let fill = if *v > 0.0 {
                format!("#ff{shade:02x}{shade:02x}")
            } else {
                format!("#{shade:02x}{shade:02x}ff")
            };
            let x = LABEL_W + CELL_W * j as f64;
            let _ = writeln!(
                svg,
                r##"<rect class="cell" x="{x:.1}" y="{y:.1}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{:+.1}%</text>"##,
                x + CELL_W / 2.0,
                y + CELL_H / 2.0 + 4.0,
                v * 100.0
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
