//! CSV, JSON, and SVG writers, and the on-disk suite store.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::summary::{summarize, ExperimentSummary, MethodSummary};
use super::suite::{parse_suite, SuiteArtifact};
use super::{ExperimentConfig, ExperimentReport};
use crate::error::{Error, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUITES_DIR: &str = "suites";

pub const CSV_HEADER: [&str; 9] = [
    "method",
    "seed",
    "task_index",
    "T",
    "task_regret",
    "cum_meta_regret",
    "D_i",
    "dist_Mstar_to_meta",
    "suite_hash",
];

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn other(e: impl ToString) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per (method, seed, task) in report order. Failed runs contribute no rows.
pub fn results_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(other)?;
    for run in &report.runs {
        let Ok(rep) = &run.report else { continue };
        let cum = rep.cumulative_meta_regret();
        for (i, o) in rep.outcomes.iter().enumerate() {
            w.write_record([
                run.method.as_str().to_string(),
                run.seed.to_string(),
                o.index.to_string(),
                run.horizon.to_string(),
                format_float(o.regret),
                format_float(cum[i]),
                format_float(rep.d_trace[i]),
                format_float(o.init_gap),
                run.suite_hash.clone(),
            ])
            .map_err(other)?;
        }
    }
    let bytes = w.into_inner().map_err(other)?;
    String::from_utf8(bytes).map_err(other)
}

pub fn suite_file_name(suite: &SuiteArtifact) -> String {
    format!("suite_T{}_seed{}.json", suite.horizon, suite.seed)
}

pub fn write_suites(dir: &Path, suites: &[SuiteArtifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    suites
        .iter()
        .map(|s| {
            let path = dir.join(suite_file_name(s));
            fs::write(&path, s.to_json()?).map_err(|e| io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Loads every `*.json` suite in `dir`, ordered as a run of `cfg` would produce them.
pub fn load_suites(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<SuiteArtifact>> {
    let entries = fs::read_dir(dir).map_err(|e| io(dir, e))?;
    let mut suites = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let suite = parse_suite(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        suites.push(suite);
    }
    let horizons = cfg.horizon_list();
    let position = |s: &SuiteArtifact| -> Result<(usize, usize)> {
        let t = horizons.iter().position(|&t| t == s.horizon);
        let seed = cfg.seeds.iter().position(|&x| x == s.seed);
        match (t, seed) {
            (Some(t), Some(seed)) => Ok((t, seed)),
            _ => Err(Error::InvalidConfiguration(format!(
                "stored suite (T = {}, seed {}) is not part of the configuration",
                s.horizon, s.seed
            ))),
        }
    };
    let mut keyed = suites.into_iter().map(|s| Ok((position(&s)?, s))).collect::<Result<Vec<_>>>()?;
    keyed.sort_by_key(|(k, _)| *k);
    if keyed.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidConfiguration("duplicate stored suite".into()));
    }
    if keyed.is_empty() {
        return Err(Error::InvalidConfiguration(format!("no suites in {}", dir.display())));
    }
    Ok(keyed.into_iter().map(|(_, s)| s).collect())
}

/// Writes `results.csv`, `summary.json`, the charts, and the stored suites under `dir`.
pub fn write_experiment(dir: &Path, report: &ExperimentReport) -> Result<ExperimentSummary> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let csv_path = dir.join(RESULTS_CSV);
    fs::write(&csv_path, results_csv(report)?).map_err(|e| io(&csv_path, e))?;
    write_suites(&dir.join(SUITES_DIR), &report.suites)?;
    let summary = summarize(report);
    let json = serde_json::to_string_pretty(&summary).map_err(other)?;
    let json_path = dir.join(SUMMARY_JSON);
    fs::write(&json_path, json).map_err(|e| io(&json_path, e))?;
    for t in report.config.horizon_list() {
        let rows: Vec<&MethodSummary> = summary.methods.iter().filter(|s| s.horizon == t).collect();
        let series: Vec<Series> = rows
            .iter()
            .map(|s| Series {
                name: s.method.as_str().to_string(),
                points: s.curve_mean.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect(),
                errors: s.curve_se.clone(),
            })
            .collect();
        let path = dir.join(format!("meta_regret_vs_N_T{t}.svg"));
        let svg = line_chart(&format!("Meta-regret vs. number of tasks (T = {t})"), "N", "meta-regret", &series, false);
        fs::write(&path, svg).map_err(|e| io(&path, e))?;
    }
    if !summary.sweeps.is_empty() {
        let series: Vec<Series> = summary
            .sweeps
            .iter()
            .map(|s| Series {
                name: s.method.as_str().to_string(),
                points: s.horizons.iter().zip(&s.mean).map(|(&t, &y)| (t as f64, y)).collect(),
                errors: s.se.clone(),
            })
            .collect();
        let path = dir.join("meta_regret_vs_T.svg");
        let svg = line_chart("Meta-regret vs. horizon", "T", "meta-regret", &series, true);
        fs::write(&path, svg).map_err(|e| io(&path, e))?;
    }
    Ok(summary)
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Half-height of the error bar at each point.
    pub errors: Vec<f64>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line chart with error bars; `log_x` puts the x axis on a log scale.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let fx = |x: f64| if log_x { x.ln() } else { x };
    let finite = |v: &f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| fx(p.0))).filter(finite).collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().zip(&s.errors).flat_map(|(p, e)| [p.1 - e, p.1 + e]))
        .filter(finite)
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let pw = width - left - right;
    let ph = height - top - bottom;
    let px = |x: f64| left + (fx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = y0 + f * (y1 - y0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#, left - 6.0, py(y) + 4.0, y);
        let xv = x0 + f * (x1 - x0);
        let shown = if log_x { xv.exp() } else { xv };
        let sx = left + f * pw;
        let _ = writeln!(svg, r#"<text x="{sx:.1}" y="{}" text-anchor="middle">{shown:.3}</text>"#, top + ph + 16.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, height - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        for (&(x, y), &e) in s.points.iter().zip(&s.errors) {
            if x.is_finite() && y.is_finite() && e.is_finite() && e > 0.0 {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="{color}" stroke-opacity="0.5"/>"#,
                    px(x),
                    py(y - e),
                    py(y + e)
                );
            }
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = width - right + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_float(0.25), "2.5000000000000000e-1");
    }

    #[test]
    fn chart_is_well_formed() {
        let s = Series { name: "a<b".into(), points: vec![(1.0, 2.0), (2.0, 1.0)], errors: vec![0.1, 0.0] };
        let svg = line_chart("t", "x", "y", &[s], true);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }
}
