//! Text, CSV and SVG renderings for the batch commands.

use std::fmt::Write;

use cgait_core::cnn::{ClassificationReport, ConfusionMatrix};
use cgait_core::explain::ExplanationMap;
use cgait_core::metrics::RunSummary;
use cgait_core::signal::Window;
use cgait_core::xmed::{DiscrepancyReport, Region};
use cgait_core::Severity;

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Per-class precision, recall, F1 and support followed by accuracy and the
/// two averages. Classes without support show `n/a`.
pub fn classification_table(r: &ClassificationReport) -> String {
    let mut out = String::new();
    writeln!(out, "{:<14}{:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1-score", "support").unwrap();
    for c in &r.per_class {
        writeln!(
            out,
            "{:<14}{:>10}{:>10}{:>10}{:>10}",
            c.class.label(),
            cell(c.precision),
            cell(c.recall),
            cell(c.f1),
            c.support
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "{:<14}{:>10}{:>10}{:>10.2}{:>10}", "Accuracy", "", "", r.accuracy, r.total).unwrap();
    for (name, a) in [("Macro Avg", &r.macro_avg), ("Weighted Avg", &r.weighted_avg)] {
        writeln!(
            out,
            "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
            name, a.precision, a.recall, a.f1, r.total
        )
        .unwrap();
    }
    out
}

/// Confusion matrix as CSV, rows are true classes.
pub fn confusion_csv(m: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\predicted");
    for c in Severity::ALL {
        write!(out, ",{}", c.label()).unwrap();
    }
    out.push('\n');
    for t in Severity::ALL {
        out.push_str(t.label());
        for p in Severity::ALL {
            write!(out, ",{}", m.counts[t.index()][p.index()]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn regions_cell(regions: &[Region]) -> String {
    regions
        .iter()
        .map(|r| format!("{}-{}", r.start, r.end))
        .collect::<Vec<_>>()
        .join(";")
}

pub struct XmedRow<'a> {
    pub window: &'a Window,
    pub window_index: usize,
    pub predicted: Severity,
    pub confidence: f64,
    pub report: &'a DiscrepancyReport,
}

pub const XMED_CSV_HEADER: &str =
    "subject_id,window_index,start_frame,label,predicted,correct,confidence,discrepancy_pct,alert,regions";

pub fn xmed_csv_row(r: &XmedRow) -> String {
    let label = r.window.label.map_or("", |l| l.label());
    let correct = r.window.label.map_or(String::new(), |l| (l == r.predicted).to_string());
    format!(
        "{},{},{},{},{},{},{:.6},{:.1},{},{}",
        r.window.source_id,
        r.window_index,
        r.window.start_frame,
        label,
        r.predicted.label(),
        correct,
        r.confidence,
        r.report.discrepancy_percentage,
        r.report.alert,
        regions_cell(&r.report.regions)
    )
}

pub const EXPLAIN_CSV_HEADER: &str = "t,force,gradcam,lrp,abs_diff,flagged";

/// One row per frame: signal, both maps, their difference and the flag.
pub fn explanation_csv(window: &Window, gradcam: &ExplanationMap, lrp: &ExplanationMap, report: &DiscrepancyReport) -> String {
    let mut out = String::with_capacity(48 * window.values().len());
    out.push_str(EXPLAIN_CSV_HEADER);
    out.push('\n');
    for (t, &x) in window.values().iter().enumerate() {
        writeln!(
            out,
            "{t},{x},{:.6},{:.6},{:.6},{}",
            gradcam.values[t],
            lrp.values[t],
            report.per_point_delta[t],
            u8::from(report.flagged[t])
        )
        .unwrap();
    }
    out
}

pub fn run_summary_csv(rows: &[RunSummary]) -> String {
    let mut out = String::from(RunSummary::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

const W: f64 = 900.0;
const PANEL_H: f64 = 140.0;
const PAD: f64 = 40.0;

fn polyline(values: &[f64], lo: f64, hi: f64, y0: f64, color: &str) -> String {
    let n = values.len().max(2) - 1;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pts = String::with_capacity(values.len() * 14);
    for (i, v) in values.iter().enumerate() {
        let x = PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
        let y = y0 + PANEL_H - PANEL_H * (v - lo) / span;
        write!(pts, "{x:.1},{y:.1} ").unwrap();
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n", pts.trim_end())
}

/// Signal, both explanation maps and the shaded discrepancy regions,
/// stacked in three panels sharing one time axis.
pub fn explanation_svg(title: &str, window: &Window, gradcam: &ExplanationMap, lrp: &ExplanationMap, report: &DiscrepancyReport) -> String {
    let n = window.values().len().max(1);
    let height = PAD * 2.0 + 3.0 * PANEL_H + 2.0 * 20.0;
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{height}\" viewBox=\"0 0 {W} {height}\">"
    )
    .unwrap();
    writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(s, "<text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>", escape(title)).unwrap();
    let top = |k: usize| PAD + k as f64 * (PANEL_H + 20.0);
    for r in &report.regions {
        let x0 = PAD + (W - 2.0 * PAD) * r.start as f64 / n as f64;
        let x1 = PAD + (W - 2.0 * PAD) * (r.end + 1) as f64 / n as f64;
        writeln!(
            s,
            "<rect x=\"{x0:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#f4a6a6\" fill-opacity=\"0.4\"/>",
            top(0),
            x1 - x0,
            3.0 * PANEL_H + 40.0
        )
        .unwrap();
    }
    let (lo, hi) = window
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let panels: [(&str, &[f64], f64, f64, &str); 3] = [
        ("force (N)", window.values(), lo.min(0.0), hi, "#222222"),
        ("Grad-CAM", &gradcam.values, 0.0, 1.0, "#1f77b4"),
        ("LRP", &lrp.values, 0.0, 1.0, "#d62728"),
    ];
    for (k, (name, values, lo, hi, color)) in panels.into_iter().enumerate() {
        let y = top(k);
        writeln!(
            s,
            "<rect x=\"{PAD}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#999999\"/>",
            W - 2.0 * PAD
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{name}</text>",
            PAD + 4.0,
            y + 12.0
        )
        .unwrap();
        s.push_str(&polyline(values, lo, hi, y, color));
    }
    writeln!(
        s,
        "<text x=\"{PAD}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">discrepancy {:.1}%{}</text>",
        height - 10.0,
        report.discrepancy_percentage,
        if report.alert { " (alert)" } else { "" }
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
