//! Deterministic CSV, JSON and SVG report emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use specforge_core::bert::ScanReport;
use specforge_core::dataset::DatasetManifest;
use specforge_core::fuzz::Status;
use specforge_core::metrics::{Metrics, RocPoint};
use specforge_core::ngram::DiversityStat;

use crate::error::Result;
use crate::io::{write_bytes, write_json};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionScan {
    pub function: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    pub report: ScanReport,
}

/// Everything a scan run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub window: usize,
    pub stride: usize,
    pub threshold: f64,
    pub functions: Vec<FunctionScan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

pub fn scan_csv(s: &ScanSummary) -> String {
    let mut out = String::from("function,score,verdict,label\n");
    for f in &s.functions {
        let label = f.label.map_or(String::new(), |l| (l as u8).to_string());
        writeln!(out, "{},{:.6},{},{}", csv_field(&f.function), f.report.score, f.report.flagged as u8, label).unwrap();
    }
    out
}

/// One row per record with one-hot status columns.
pub fn manifest_csv(m: &DatasetManifest) -> String {
    let mut out = String::from("id,candidate,compiled,verified,rejected,outcome\n");
    for r in &m.records {
        let hot = |s: bool| s as u8;
        let outcome = r.verdict.as_ref().map_or("", |v| v.outcome.as_str());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&r.id),
            hot(r.status == Status::Candidate),
            hot(r.status == Status::Compiled),
            hot(r.status == Status::Verified),
            hot(matches!(r.status, Status::Rejected { .. })),
            outcome
        )
        .unwrap();
    }
    out
}

pub fn diversity_csv(stats: &[DiversityStat]) -> String {
    let mut out = String::from("n,base,fuzzing,gan,total,fuzzing_factor,total_factor\n");
    for d in stats {
        writeln!(out, "{},{},{},{},{},{:.4},{:.4}", d.n, d.base, d.fuzzing, d.gan, d.total, d.fuzzing_factor, d.total_factor)
            .unwrap();
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;
const PLOT: f64 = SIZE - 2.0 * MARGIN;

/// Pixel position of a unit-square point.
pub fn plot_xy(x: f64, y: f64) -> (f64, f64) {
    (MARGIN + x * PLOT, SIZE - MARGIN - y * PLOT)
}

fn polyline(pts: impl Iterator<Item = (f64, f64)>, colour: &str) -> String {
    let coords: Vec<String> = pts
        .map(|(x, y)| {
            let (px, py) = plot_xy(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!("<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n", coords.join(" "))
}

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    writeln!(s, "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{PLOT}\" height=\"{PLOT}\" fill=\"white\" stroke=\"black\"/>").unwrap();
    writeln!(s, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>", SIZE / 2.0, xml(title)).unwrap();
    writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>", SIZE / 2.0, SIZE - 10.0, xml(x_label))
        .unwrap();
    writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>",
        SIZE / 2.0,
        SIZE / 2.0,
        xml(y_label)
    )
    .unwrap();
    s
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn roc_svg(roc: &[RocPoint], auc: Option<f64>) -> String {
    let title = match auc {
        Some(a) => format!("ROC (AUC {a:.4})"),
        None => "ROC (AUC undefined)".to_string(),
    };
    let mut s = frame(&title, "false positive rate", "true positive rate");
    s.push_str(&polyline([(0.0, 0.0), (1.0, 1.0)].into_iter(), "#bbbbbb"));
    let mut pts: Vec<(f64, f64)> = roc.iter().map(|p| (p.fpr, p.tpr)).collect();
    if pts.last().is_some_and(|&p| p != (1.0, 1.0)) {
        pts.push((1.0, 1.0));
    }
    s.push_str(&polyline(pts.into_iter(), "#1f77b4"));
    s.push_str("</svg>\n");
    s
}

/// Line plot of one or more series against step, each scaled to the joint
/// value range.
pub fn curve_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let mut s = frame(title, "step", "value");
    let vals = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (k, (name, v)) in series.iter().enumerate() {
        let n = v.len().max(2) - 1;
        let pts = v.iter().enumerate().map(|(i, &y)| (i as f64 / n as f64, if y.is_finite() { (y - lo) / span } else { 0.0 }));
        s.push_str(&polyline(pts, COLOURS[k % COLOURS.len()]));
        writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>", MARGIN + 6.0, MARGIN + 14.0 * (k + 1) as f64, COLOURS[k % COLOURS.len()], xml(name))
            .unwrap();
    }
    writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"10\">{lo:.4}</text>", SIZE - MARGIN + 12.0).unwrap();
    writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"10\">{hi:.4}</text>", MARGIN - 4.0).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Writes `scan.json`, `scan.csv` and, when metrics exist, `roc.svg`.
pub fn emit_scan(dir: &Path, s: &ScanSummary) -> Result<()> {
    write_json(&dir.join("scan.json"), s)?;
    write_bytes(&dir.join("scan.csv"), scan_csv(s).as_bytes())?;
    if let Some(m) = &s.metrics {
        write_json(&dir.join("metrics.json"), m)?;
        write_bytes(&dir.join("roc.svg"), roc_svg(&m.roc, m.auc).as_bytes())?;
    }
    Ok(())
}

/// Writes `manifest.json` and `manifest.csv`.
pub fn emit_manifest(dir: &Path, m: &DatasetManifest) -> Result<()> {
    write_json(&dir.join("manifest.json"), m)?;
    write_bytes(&dir.join("manifest.csv"), manifest_csv(m).as_bytes())
}

/// Writes `diversity.json` and `diversity.csv`.
pub fn emit_diversity(dir: &Path, stats: &[DiversityStat]) -> Result<()> {
    write_json(&dir.join("diversity.json"), &stats)?;
    write_bytes(&dir.join("diversity.csv"), diversity_csv(stats).as_bytes())
}

/// `step,<name>...` rows; columns shorter than the longest are left blank.
pub fn series_csv(columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("step");
    for (name, _) in columns {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    let rows = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for i in 0..rows {
        write!(out, "{i}").unwrap();
        for (_, v) in columns {
            match v.get(i) {
                Some(x) => write!(out, ",{x:.6}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `<name>.csv` and `<name>.svg` for a set of training curves.
pub fn emit_curves(dir: &Path, name: &str, title: &str, columns: &[(&str, &[f64])]) -> Result<()> {
    write_bytes(&dir.join(format!("{name}.csv")), series_csv(columns).as_bytes())?;
    write_bytes(&dir.join(format!("{name}.svg")), curve_svg(title, columns).as_bytes())
}
