//! Aggregates a directory of run records into median / interquartile
//! curves, one CSV and one SVG line plot per metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::record::{fmt_num, write_atomic, RunRecord};

/// Median and interquartile range at one logged step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub step: u64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCurves {
    /// Label built from the parameters that differ between groups.
    pub label: String,
    pub n_runs: usize,
    pub metrics: BTreeMap<String, Vec<Band>>,
}

/// Linear-interpolated quantile of sorted finite data; NaN when empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn band(step: u64, values: &mut Vec<f64>) -> Band {
    values.sort_by(|a, b| a.total_cmp(b));
    // Divergent runs log +inf; they still count toward the quantiles.
    values.retain(|v| !v.is_nan());
    Band {
        step,
        q25: quantile(values, 0.25),
        median: quantile(values, 0.5),
        q75: quantile(values, 0.75),
    }
}

pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = if dir.join("runs").is_dir() { dir.join("runs") } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::read(p)).collect()
}

/// Groups records by every header entry except the seed and computes
/// per-step bands for each metric.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<GroupCurves>> {
    let mut experiments: Vec<String> = records
        .iter()
        .map(|r| r.header_value("experiment").unwrap_or("").to_string())
        .collect();
    experiments.sort();
    experiments.dedup();
    if experiments.len() > 1 {
        return Err(HarnessError::MixedExperiments(experiments));
    }
    let key_of = |r: &RunRecord| -> Vec<(String, String)> {
        r.header.iter().filter(|(k, _)| k != "seed").cloned().collect()
    };
    let mut groups: BTreeMap<Vec<(String, String)>, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key_of(r)).or_default().push(r);
    }
    let keys: Vec<&Vec<(String, String)>> = groups.keys().collect();
    let varying: Vec<&str> = match keys.first() {
        Some(first) => first
            .iter()
            .filter(|(k, v)| keys.iter().any(|g| g.iter().any(|(k2, v2)| k2 == k && v2 != v)))
            .map(|(k, _)| k.as_str())
            .collect(),
        None => Vec::new(),
    };
    let mut out = Vec::new();
    for (key, runs) in &groups {
        let label = key
            .iter()
            .filter(|(k, _)| varying.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        let mut metrics = BTreeMap::new();
        for name in &runs[0].series.names {
            let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for r in runs {
                let Some(col) = r.series.column(name) else { continue };
                for (step, v) in r.series.steps().into_iter().zip(col) {
                    by_step.entry(step).or_default().push(v);
                }
            }
            let bands = by_step.into_iter().map(|(s, mut v)| band(s, &mut v)).collect();
            metrics.insert(name.clone(), bands);
        }
        out.push(GroupCurves {
            label: if label.is_empty() { "all".into() } else { label },
            n_runs: runs.len(),
            metrics,
        });
    }
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Median line with a shaded interquartile band for each group.
pub fn line_svg(metric: &str, groups: &[GroupCurves]) -> String {
    let (w, h, pad) = (720.0, 420.0, 60.0);
    let bands: Vec<&Band> = groups.iter().flat_map(|g| g.metrics.get(metric).into_iter().flatten()).collect();
    let finite = |x: f64| x.is_finite();
    let xs: Vec<f64> = bands.iter().map(|b| b.step as f64).collect();
    let ys: Vec<f64> = bands.iter().flat_map(|b| [b.q25, b.q75, b.median]).filter(|y| finite(*y)).collect();
    let (x0, x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    if !(y0.is_finite() && y1.is_finite()) {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1.0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{metric}</text>"#, w / 2.0);
    let _ = writeln!(svg, r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - pad, w - pad, h - pad);
    let _ = writeln!(svg, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, h - pad);
    for (v, y) in [(y0, h - pad), (y1, pad)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, pad - 4.0, short(v));
    }
    for (v, x) in [(x0, pad), (x1, w - pad)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, h - pad + 16.0, short(v));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, w / 2.0, h - 16.0);
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let Some(bands) = g.metrics.get(metric) else { continue };
        let pts: Vec<&Band> = bands.iter().filter(|b| finite(b.q25) && finite(b.q75) && finite(b.median)).collect();
        if pts.is_empty() {
            continue;
        }
        let mut area: Vec<String> = pts.iter().map(|b| format!("{:.2},{:.2}", sx(b.step as f64), sy(b.q75))).collect();
        area.extend(pts.iter().rev().map(|b| format!("{:.2},{:.2}", sx(b.step as f64), sy(b.q25))));
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, area.join(" "));
        let line: Vec<String> = pts.iter().map(|b| format!("{:.2},{:.2}", sx(b.step as f64), sy(b.median))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{} (n={})</text>"#,
            pad + 8.0,
            pad + 14.0 * (i as f64 + 1.0),
            escape(&g.label),
            g.n_runs
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn short(v: f64) -> String {
    format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `aggregate.csv`, one `<metric>.svg` per metric and `index.md`
/// into `<dir>/report`, returning the report directory.
pub fn write_report(dir: &Path) -> Result<PathBuf> {
    let records = read_records(dir)?;
    if records.is_empty() {
        return Err(HarnessError::Config(format!("no run records found in {}", dir.display())));
    }
    let groups = aggregate(&records)?;
    let out = dir.join("report");
    fs::create_dir_all(&out)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "metric", "step", "q25", "median", "q75"])?;
    for g in &groups {
        for (metric, bands) in &g.metrics {
            for b in bands {
                w.write_record([
                    g.label.clone(),
                    metric.clone(),
                    b.step.to_string(),
                    fmt_num(b.q25),
                    fmt_num(b.median),
                    fmt_num(b.q75),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    write_atomic(&out.join("aggregate.csv"), &bytes)?;

    let experiment = records[0].header_value("experiment").unwrap_or("").to_string();
    let mut index = format!("# {experiment}\n\n{} runs in {} groups.\n\n", records.len(), groups.len());
    let metrics: Vec<String> = groups[0].metrics.keys().cloned().collect();
    for m in &metrics {
        write_atomic(&out.join(format!("{m}.svg")), line_svg(m, &groups).as_bytes())?;
        let _ = writeln!(index, "## {m}\n\n![{m}]({m}.svg)\n");
    }
    write_atomic(&out.join("index.md"), index.as_bytes())?;
    Ok(out)
}
