//! Convergence plots as standalone SVG.

use std::fmt::Write as _;

use anyhow::anyhow;
use netalloc::solvers::SolverReport;

const WIDTH: f64 = 640.0;
const PANEL: f64 = 260.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Series<'a> {
    label: String,
    points: Vec<(f64, f64)>,
    color: &'a str,
}

/// Log-log range covering every positive value, padded to whole decades.
fn decades(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    if a == b {
        (a, a + 1.0)
    } else {
        (a, b)
    }
}

fn panel(out: &mut String, top: f64, title: &str, series: &[Series]) {
    let (x0, x1) = decades(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = decades(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = PANEL - 60.0;
    let left = MARGIN;
    let base = top + 30.0;
    let sx = |v: f64| left + (v.log10() - x0) / (x1 - x0) * plot_w;
    let sy = |v: f64| base + plot_h - (v.log10() - y0) / (y1 - y0) * plot_h;

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0,
        top + 18.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.1}" y="{base:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444"/>"##
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{base:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">1e{d}</text>"##,
            base + plot_h,
            base + plot_h + 14.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            out,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">1e{d}</text>"##,
            left + plot_w,
            left - 4.0,
            y + 3.0
        );
    }
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.color,
            pts.join(" ")
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Two panels against the iteration count: |gap| on top, feasibility below.
pub fn convergence_svg(reports: &[SolverReport]) -> anyhow::Result<String> {
    if reports.is_empty() {
        return Err(anyhow!("no reports to plot"));
    }
    if let Some(i) = reports.iter().position(|r| r.history.is_empty()) {
        return Err(anyhow!("report {i} ({}) has an empty history", reports[i].method));
    }
    let series = |value: fn(&netalloc::solvers::HistoryRecord) -> Option<f64>| -> Vec<Series> {
        reports
            .iter()
            .enumerate()
            .map(|(i, r)| Series {
                label: format!("{} (seed {})", r.method, r.config.seed),
                points: r.history.iter().filter_map(|h| value(h).map(|v| ((h.iter + 1) as f64, v))).collect(),
                color: COLORS[i % COLORS.len()],
            })
            .collect()
    };
    let has_gap = reports.iter().any(|r| r.history.iter().any(|h| h.gap.is_some()));
    let gaps = if has_gap { series(|h| h.gap.map(f64::abs)) } else { series(|h| Some(h.phi.abs())) };
    let feas = series(|h| Some(h.feas));

    let legend_h = 18.0 * reports.len() as f64 + 10.0;
    let height = 2.0 * PANEL + legend_h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    panel(&mut out, 0.0, if has_gap { "|gap| vs iteration" } else { "|phi| vs iteration" }, &gaps);
    panel(&mut out, PANEL, "feasibility vs iteration", &feas);
    for (i, s) in gaps.iter().enumerate() {
        let y = 2.0 * PANEL + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            MARGIN + 24.0,
            s.color,
            MARGIN + 30.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
