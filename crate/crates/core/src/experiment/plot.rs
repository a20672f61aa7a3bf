//! Minimal deterministic SVG line plots of sweep CSVs.

use std::fmt::Write as _;
use std::path::Path;

use super::record::CsvTable;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Column whose distinct values become separate lines.
    pub group: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
}

/// One line of the plot: per-`x` means of `y`, sorted by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn sort_labels(labels: &mut [String]) {
    if labels.iter().all(|l| l.parse::<f64>().is_ok()) {
        labels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        labels.sort();
    }
}

/// Groups `table` into series. Failed rows and non-finite values are skipped.
pub fn series(table: &CsvTable, spec: &PlotSpec) -> Result<Vec<Series>> {
    let xs = table.numeric(&spec.x)?;
    let ys = table.numeric(&spec.y)?;
    let group = spec.group.as_deref().map(|g| table.column(g)).transpose()?;
    let status = table.column("status").ok();
    let mut labels: Vec<String> = match group {
        Some(g) => table.rows.iter().map(|r| r[g].clone()).collect(),
        None => vec![spec.y.clone()],
    };
    sort_labels(&mut labels);
    labels.dedup();
    let mut out = Vec::new();
    for label in labels {
        let mut sums: Vec<(f64, f64, usize)> = Vec::new();
        for (i, row) in table.rows.iter().enumerate() {
            if group.is_some_and(|g| row[g] != label)
                || status.is_some_and(|s| row[s].starts_with("failed"))
                || !xs[i].is_finite()
                || !ys[i].is_finite()
            {
                continue;
            }
            match sums.iter_mut().find(|e| e.0 == xs[i]) {
                Some(e) => {
                    e.1 += ys[i];
                    e.2 += 1;
                }
                None => sums.push((xs[i], ys[i], 1)),
            }
        }
        sums.sort_by(|a, b| a.0.total_cmp(&b.0));
        let points = sums.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect();
        out.push(Series { label, points });
    }
    Ok(out)
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, name: &str) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if log && v <= 0.0 {
                return Err(Error::arg(format!("log scale on {name} needs positive values, got {v}")));
            }
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Err(Error::arg("nothing to plot"));
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Ok(Self { lo, hi, log })
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, f: f64) -> String {
        let v = self.lo + f * (self.hi - self.lo);
        let v = if self.log { 10f64.powf(v) } else { v };
        format!("{v:.3}")
    }
}

/// Renders `series` as an SVG document.
pub fn render_svg(series: &[Series], spec: &PlotSpec) -> Result<String> {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let ax = Axis::new(all().map(|p| p.0), spec.log_x, &spec.x)?;
    let ay = Axis::new(all().map(|p| p.1), spec.log_y, &spec.y)?;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + ax.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;

    let mut s = String::new();
    let w = &mut s;
    // Writing into a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = LEFT + f * pw;
        let y = TOP + (1.0 - f) * ph;
        let _ = writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            ax.label(f)
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            ay.label(f)
        );
    }
    let scale = |log: bool| if log { " (log)" } else { "" };
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&spec.x),
        scale(spec.log_x)
    );
    let _ = writeln!(
        w,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y),
        scale(spec.log_y)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
    }
    let _ = writeln!(w, r#"<g class="legend">"#);
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(&legend_label(spec, &ser.label))
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

fn legend_label(spec: &PlotSpec, label: &str) -> String {
    match &spec.group {
        Some(g) => format!("{g}={label}"),
        None => label.to_string(),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Reads `csv`, plots `spec` and writes the SVG to `out`.
pub fn plot(csv: &Path, spec: &PlotSpec, out: &Path) -> Result<()> {
    let table = CsvTable::read(csv)?;
    let ser = series(&table, spec)?;
    let svg = render_svg(&ser, spec)?;
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
