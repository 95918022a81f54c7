use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::Manifest;
use super::pipeline::{Method, MethodTiming, OutputLayout, ScoreRow};
use crate::contour::{Calibration, GridScore};
use crate::error::Result;
use crate::eval::{ci95, mean, region_aggregate, BoxStats, LayerScore, RegionSummary};
use crate::lattice::RegionLabel;

pub const CI_METHOD: &str = "normal approximation: mean +/- 1.96 * sd / sqrt(n), sd with n - 1";
pub const BOXPLOT_CONVENTION: &str = "Tukey whiskers at 1.5 IQR; quartiles are medians of the halves including the median";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub perturbation: String,
    pub level: String,
    pub value: Option<f64>,
    pub mean_accuracy: f64,
    /// Clean mean minus perturbed mean over the same test layers.
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub clean_mean: f64,
    pub clean_ci95: Option<(f64, f64)>,
    pub clean_mean_by_specimen: BTreeMap<String, f64>,
    pub regions: Vec<RegionSummary>,
    pub perturbations: Vec<PerturbSummary>,
    pub timing_mean_s: Option<f64>,
    pub timing_median_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub manifest_hash: String,
    pub seed: u64,
    pub split: String,
    pub ci_method: String,
    pub boxplot_convention: String,
    pub ac_calibration: GridScore,
    pub ac_grid_evaluations: usize,
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn layer_scores<'a>(rows: impl Iterator<Item = &'a ScoreRow>) -> Vec<LayerScore> {
    rows.map(|r| LayerScore {
        specimen_id: r.specimen.clone(),
        layer_index: r.layer,
        region: r.region,
        accuracy: r.accuracy,
        method: r.method.as_str().to_string(),
        perturbation: None,
    })
    .collect()
}

pub fn summarize(
    cfg: &ExperimentConfig,
    manifest: &Manifest,
    rows: &[ScoreRow],
    calibration: &Calibration,
    timing: &[MethodTiming],
) -> Result<Summary> {
    let mut methods = Vec::new();
    for method in Method::ALL {
        let clean: Vec<&ScoreRow> = rows.iter().filter(|r| r.method == method && r.is_clean()).collect();
        let values: Vec<f64> = clean.iter().map(|r| r.accuracy).collect();
        let clean_mean = mean(&values);
        let mut by_specimen: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &clean {
            by_specimen.entry(r.specimen.clone()).or_default().push(r.accuracy);
        }
        let scores = layer_scores(clean.iter().copied());
        let regions = [RegionLabel::Node, RegionLabel::Strut, RegionLabel::Other]
            .into_iter()
            .filter_map(|region| region_aggregate(&scores, region).ok())
            .collect();
        let mut perturbations: Vec<PerturbSummary> = Vec::new();
        for r in rows.iter().filter(|r| r.method == method && !r.is_clean()) {
            if !perturbations
                .iter()
                .any(|p| p.perturbation == r.perturbation && p.level == r.level && p.value == r.value)
            {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|o| o.method == method && o.perturbation == r.perturbation && o.level == r.level && o.value == r.value)
                    .map(|o| o.accuracy)
                    .collect();
                let m = mean(&vals);
                perturbations.push(PerturbSummary {
                    perturbation: r.perturbation.clone(),
                    level: r.level.clone(),
                    value: r.value,
                    mean_accuracy: m,
                    drop: clean_mean - m,
                });
            }
        }
        let t = timing.iter().find(|t| t.method == method);
        methods.push(MethodSummary {
            method,
            clean_mean,
            clean_ci95: ci95(&values).ok(),
            clean_mean_by_specimen: by_specimen.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
            regions,
            perturbations,
            timing_mean_s: t.map(|t| t.stats.mean_s),
            timing_median_s: t.map(|t| t.stats.median_s),
        });
    }
    Ok(Summary {
        config: cfg.clone(),
        config_hash: cfg.config_hash()?,
        manifest_hash: manifest.hash()?,
        seed: cfg.seed,
        split: cfg.split.to_string(),
        ci_method: CI_METHOD.into(),
        boxplot_convention: BOXPLOT_CONVENTION.into(),
        ac_calibration: calibration.best,
        ac_grid_evaluations: calibration.evaluations,
        methods,
    })
}

pub fn write_report(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    manifest: &Manifest,
    rows: &[ScoreRow],
    calibration: &Calibration,
    timing: &[MethodTiming],
) -> Result<Summary> {
    let summary = summarize(cfg, manifest, rows, calibration, timing)?;
    std::fs::create_dir_all(layout.results())?;
    std::fs::write(layout.summary(), serde_json::to_vec_pretty(&summary)?)?;
    let mut specimens: Vec<&str> = rows.iter().map(|r| r.specimen.as_str()).collect();
    specimens.dedup();
    specimens.sort_unstable();
    specimens.dedup();
    for id in specimens {
        let series: Vec<(String, Vec<(f64, f64)>)> = Method::ALL
            .iter()
            .map(|&m| {
                let pts = rows
                    .iter()
                    .filter(|r| r.method == m && r.is_clean() && r.specimen == id)
                    .map(|r| (r.layer as f64, r.accuracy))
                    .collect();
                (m.as_str().to_string(), pts)
            })
            .collect();
        let svg = line_chart(&format!("Clean test accuracy, specimen {id}"), "layer", "accuracy", &series);
        std::fs::write(layout.results().join(format!("accuracy_vs_layer_{id}.svg")), svg)?;
    }
    let mut boxes = Vec::new();
    for m in &summary.methods {
        for r in &m.regions {
            if r.region != RegionLabel::Other {
                boxes.push((format!("{} {}", m.method.as_str(), r.region), r.boxplot.clone()));
            }
        }
    }
    let svg = box_chart("Clean test accuracy by region", "accuracy", &boxes);
    std::fs::write(layout.results().join("accuracy_boxplot_regions.svg"), svg)?;
    Ok(summary)
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - 2.0 * MARGIN)
    }
    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0).max(1e-12) * (H - 2.0 * MARGIN)
    }
}

fn svg_open(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    s
}

fn axes(s: &mut String, f: &Frame) {
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, l - 4.0, f.py(y) + 4.0);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.01, hi + 0.01)
    } else {
        (lo, hi)
    }
}

/// Polyline chart, one series per entry.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (x0, x1) = value_range(pts.clone().map(|p| p.0));
    let (y0, y1) = value_range(pts.map(|p| p.1));
    let f = Frame { x0, x1, y0, y1 };
    let mut s = svg_open(title, x_label, y_label);
    axes(&mut s, &f);
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="{anchor}">{x}</text>"#, f.px(x), H - MARGIN + 16.0);
    }
    for (i, (name, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - MARGIN - 110.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Box-and-whisker chart from precomputed statistics.
pub fn box_chart(title: &str, y_label: &str, boxes: &[(String, BoxStats)]) -> String {
    let (y0, y1) = value_range(boxes.iter().flat_map(|(_, b)| {
        b.outliers
            .iter()
            .copied()
            .chain([b.whisker_low, b.whisker_high])
            .collect::<Vec<_>>()
    }));
    let f = Frame {
        x0: 0.0,
        x1: boxes.len().max(1) as f64,
        y0,
        y1,
    };
    let mut s = svg_open(title, "", y_label);
    axes(&mut s, &f);
    let half = 0.3 * (W - 2.0 * MARGIN) / boxes.len().max(1) as f64;
    for (i, (name, b)) in boxes.iter().enumerate() {
        let cx = f.px(i as f64 + 0.5);
        let color = COLORS[i % COLORS.len()];
        let (q1, q3, med) = (f.py(b.q1), f.py(b.q3), f.py(b.median));
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{q1:.1}" stroke="black"/><line x1="{cx:.1}" y1="{q3:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            f.py(b.whisker_low),
            f.py(b.whisker_high)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{med:.1}" x2="{:.1}" y2="{med:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half
        );
        for &o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{:.1}" r="2" fill="none" stroke="{color}"/>"#, f.py(o));
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            H - MARGIN + 16.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
