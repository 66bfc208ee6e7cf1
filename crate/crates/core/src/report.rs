//! Machine-readable outputs: the per-frame feature table, the count report
//! and an SVG chart of the feature curves.

use std::fmt::Write as _;

use crate::model::SequenceFeatures;
use crate::pipeline::CountReport;

/// Columns always present in the feature table.
pub const FEATURE_COLUMNS: [&str; 7] = ["t", "C", "N", "G", "C_norm", "N_norm", "G_norm"];

/// One row per frame. `R_label` is appended when the features carry labels,
/// `R_pred` when predictions are given.
pub fn features_csv(features: &SequenceFeatures, predicted: Option<&[f64]>) -> String {
    let norm = features.normalized();
    let mut header: Vec<&str> = FEATURE_COLUMNS.to_vec();
    if features.r.is_some() {
        header.push("R_label");
    }
    if predicted.is_some() {
        header.push("R_pred");
    }
    let mut out = header.join(",");
    out.push('\n');
    for t in 0..features.len() {
        let _ = write!(
            out,
            "{t},{:.6},{},{:.6},{:.6},{:.6},{:.6}",
            features.c[t],
            features.n_count[t].round() as i64,
            features.g[t],
            norm.c[t],
            norm.n_count[t],
            norm.g[t]
        );
        if let Some(r) = &features.r {
            let _ = write!(out, ",{:.6}", r[t]);
        }
        if let Some(p) = predicted {
            let _ = write!(out, ",{:.6}", p[t]);
        }
        out.push('\n');
    }
    out
}

pub const COUNT_HEADER: &str = "static,max,fused,fused_int";

/// Header plus one value row; `manual` adds the reference count column.
pub fn count_report(report: &CountReport, manual: Option<u64>) -> String {
    let mut out = String::from(COUNT_HEADER);
    if manual.is_some() {
        out.push_str(",manual");
    }
    let _ = write!(
        out,
        "\n{},{},{:.6},{}",
        report.static_count, report.max_count, report.fused.value_real, report.fused.value_int
    );
    if let Some(m) = manual {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    out
}

const SERIES_COLORS: [(&str, &str); 4] = [
    ("C", "#1f77b4"),
    ("N", "#d62728"),
    ("G", "#2ca02c"),
    ("R", "#9467bd"),
];

/// Line chart of the min-max scaled C, N, G (and R when available) against
/// frame index.
pub fn features_svg(features: &SequenceFeatures, r: Option<&[f64]>) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (50.0, 90.0, 20.0, 40.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = features.len();
    let x_at = |t: usize| {
        if n <= 1 {
            left + pw / 2.0
        } else {
            left + pw * t as f64 / (n - 1) as f64
        }
    };
    let y_at = |v: f64| top + ph * (1.0 - v);

    let norm = features.normalized();
    let r_norm = r.map(crate::model::minmax_normalize);
    let series: Vec<(&str, &str, &[f64])> = SERIES_COLORS
        .iter()
        .filter_map(|&(name, color)| {
            let data: Option<&[f64]> = match name {
                "C" => Some(&norm.c),
                "N" => Some(&norm.n_count),
                "G" => Some(&norm.g),
                _ => r_norm.as_deref(),
            };
            data.map(|d| (name, color, d))
        })
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in 0..n {
        let x = x_at(t);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">frame</text>"#,
        left + pw / 2.0,
        h - 6.0
    );
    for (v, label) in [(0.0, "0"), (1.0, "1")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
            left - 6.0,
            y_at(v) + 4.0
        );
    }
    for (i, (name, color, data)) in series.iter().enumerate() {
        let pts: Vec<String> = data
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.1},{:.1}", x_at(t), y_at(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            w - right + 10.0,
            w - right + 30.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, w - right + 36.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}
