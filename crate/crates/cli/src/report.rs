//! Output files: JSON reports, the CSV step trace and the SVG convergence plot.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vortex_core::continuation::{SolveReport, TraceRow};
use vortex_core::pair::StabilityReport;

pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const PLOT_FILE: &str = "convergence.svg";

const TRACE_HEADER: [&str; 7] = ["eps", "residual_sup", "sup_log_f", "apriori_margin", "energy_gap", "cauchy_increment", "newton_iters"];

/// What `solve` writes to `report.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub backend: String,
    pub grid: usize,
    pub rank: usize,
    pub seed: u64,
    pub degrees: Vec<f64>,
    /// `‖φ‖²` in the final metric.
    pub phi_norm_sq: f64,
    pub window: Option<StabilityReport>,
    pub trace_file: String,
    pub solve: SolveReport,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            num(r.eps),
            num(r.residual_sup),
            num(r.sup_log_f),
            num(r.apriori_margin),
            num(r.energy_gap),
            r.cauchy_increment.map(num).unwrap_or_default(),
            r.newton_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == TRACE_HEADER, "unexpected trace header {header:?}");
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> { rec[k].parse().with_context(|| format!("column {}", TRACE_HEADER[k])) };
        out.push(TraceRow {
            eps: num(0)?,
            residual_sup: num(1)?,
            sup_log_f: num(2)?,
            apriori_margin: num(3)?,
            energy_gap: num(4)?,
            cauchy_increment: if rec[5].is_empty() { None } else { Some(num(5)?) },
            newton_iters: rec[6].parse()?,
        });
    }
    Ok(out)
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

/// Residual and `sup|log f|` against `ε` on log-log axes. Rows with `ε = 0`
/// (the polish step) or non-positive values have no place on a log axis and
/// are left out.
pub fn render_plot(rows: &[TraceRow], title: &str) -> String {
    let pick = |g: fn(&TraceRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.eps > 0.0 && g(r) > 0.0 && g(r).is_finite())
            .map(|r| (r.eps.log10(), g(r).log10()))
            .collect()
    };
    let series = [
        Series { label: "residual sup", color: "#1f77b4", points: pick(|r| r.residual_sup) },
        Series { label: "sup |log f|", color: "#d62728", points: pick(|r| r.sup_log_f) },
    ];
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 20.0, 40.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 0.0, -1.0, 0.0);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r##"<g stroke="#ccc" stroke-width="1">"##);
    for k in x0 as i32..=x1 as i32 {
        let x = px(k as f64);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{:.1}"/>"#, h - mb);
    }
    for k in y0 as i32..=y1 as i32 {
        let y = py(k as f64);
        let _ = writeln!(s, r#"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}"/>"#, w - mr);
    }
    let _ = writeln!(s, "</g>");
    for k in x0 as i32..=x1 as i32 {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">1e{k}</text>"#, px(k as f64), h - mb + 18.0);
    }
    for k in y0 as i32..=y1 as i32 {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{k}</text>"#, ml - 6.0, py(k as f64) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">eps</text>"#, (ml + w - mr) / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, w - ml - mr, h - mt - mb);
    for (i, ser) in series.iter().enumerate() {
        if !ser.points.is_empty() {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, ser.color, pts.join(" "));
            for &(x, y) in &ser.points {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}"/>"#, px(x), py(y), ser.color);
            }
        }
        let ly = mt + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#, w - mr - 130.0, w - mr - 110.0, ser.color);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - mr - 104.0, ly + 4.0, escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Trace CSV and plot next to `report.json` in `dir`.
pub fn write_trace_files(dir: &Path, rows: &[TraceRow], title: &str) -> Result<(PathBuf, PathBuf)> {
    let trace = dir.join(TRACE_FILE);
    let plot = dir.join(PLOT_FILE);
    write_trace(&trace, rows)?;
    fs::write(&plot, render_plot(rows, title)).with_context(|| format!("writing {}", plot.display()))?;
    Ok((trace, plot))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(eps: f64, res: f64, inc: Option<f64>) -> TraceRow {
        TraceRow { eps, residual_sup: res, sup_log_f: 0.7, apriori_margin: 1.0, energy_gap: 1e-15, cauchy_increment: inc, newton_iters: 3 }
    }

    #[test]
    fn trace_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(1.0, 1e-12, None), row(0.5, 3.25e-11, Some(0.125)), row(0.0, 1e-13, Some(1e-3))];
        let p = dir.path().join("t.csv");
        write_trace(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("eps,residual_sup,sup_log_f,apriori_margin,energy_gap,cauchy_increment,newton_iters\n"));
        assert!(text.contains("\n1.0,1e-12,0.7,1.0,1e-15,,3\n"), "{text}");
        let back = read_trace(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].residual_sup, 3.25e-11);
        assert_eq!(back[1].cauchy_increment, Some(0.125));
        assert_eq!(back[0].cauchy_increment, None);
    }

    #[test]
    fn plot_skips_zero_eps() {
        let svg = render_plot(&[row(1.0, 1e-12, None), row(0.1, 1e-11, None), row(0.0, 1e-13, None)], "a < b");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        // two finite points per series
        assert_eq!(svg.matches("<circle").count(), 4);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn empty_plot_is_valid() {
        let svg = render_plot(&[], "empty");
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("NaN"));
    }
}
