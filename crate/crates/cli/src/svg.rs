//! Plain-text SVG line and bar charts built from `polyline`, `rect`, `line`
//! and `text` elements.
//!
//! Output is a pure function of the input values, so re-rendering the same
//! CSVs yields byte-identical files. The plot area carries its axis bounds as
//! `data-xmin`/`data-xmax`/`data-ymin`/`data-ymax` attributes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dwrl::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 54.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChartOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Horizontal reference line, drawn dashed with its own legend entry.
    pub reference: Option<(String, f64)>,
}

/// Axis bounds of a chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let pad = 0.05 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    }
}

/// Data extent padded by 5% of its span on every side. The reference line,
/// when present, counts as data on the y axis.
pub fn chart_bounds(series: &[Series], reference: Option<f64>) -> Option<Bounds> {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut xmin, mut xmax, mut ymin, mut ymax) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        return None;
    }
    if let Some(r) = reference {
        ymin = ymin.min(r);
        ymax = ymax.max(r);
    }
    let (xmin, xmax) = padded(xmin, xmax);
    let (ymin, ymax) = padded(ymin, ymax);
    Some(Bounds { xmin, xmax, ymin, ymax })
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    }
}

struct Frame {
    b: Bounds,
    w: f64,
    h: f64,
}

impl Frame {
    fn new(b: Bounds) -> Self {
        Frame { b, w: WIDTH - LEFT - RIGHT, h: HEIGHT - TOP - BOTTOM }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.b.xmin) / (self.b.xmax - self.b.xmin) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (self.b.ymax - y) / (self.b.ymax - self.b.ymin) * self.h
    }

    fn open(&self, out: &mut String, opts: &ChartOptions, x_ticks: bool) {
        let b = self.b;
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r##"<rect class="plot" x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#444" data-xmin="{}" data-xmax="{}" data-ymin="{}" data-ymax="{}"/>"##,
            self.w, self.h, b.xmin, b.xmax, b.ymin, b.ymax
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + self.w / 2.0,
            esc(&opts.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + self.w / 2.0,
            HEIGHT - 12.0,
            esc(&opts.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            TOP + self.h / 2.0,
            TOP + self.h / 2.0,
            esc(&opts.y_label)
        );
        for k in 0..=4 {
            let y = b.ymin + (b.ymax - b.ymin) * k as f64 / 4.0;
            let py = self.py(y);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##,
                LEFT + self.w
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                py + 4.0,
                tick(y)
            );
            if x_ticks {
                let x = b.xmin + (b.xmax - b.xmin) * k as f64 / 4.0;
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                    self.px(x),
                    TOP + self.h + 18.0,
                    tick(x)
                );
            }
        }
    }

    fn legend(&self, out: &mut String, k: usize, label: &str, color: &str, dashed: bool) {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let x = LEFT + self.w + 14.0;
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x + 24.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 30.0, y + 4.0, esc(label));
    }
}

/// Multi-series line chart.
pub fn render_curves(series: &[Series], opts: &ChartOptions) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Domain("render_curves needs at least one series".into()));
    }
    let bounds = chart_bounds(series, opts.reference.as_ref().map(|r| r.1))
        .ok_or_else(|| Error::Domain("every series is empty".into()))?;
    let frame = Frame::new(bounds);
    let mut out = String::new();
    frame.open(&mut out, opts, true);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
            pts.join(" ")
        );
        frame.legend(&mut out, k, &s.label, color, false);
    }
    if let Some((label, value)) = &opts.reference {
        let py = frame.py(*value);
        let _ = writeln!(
            out,
            r##"<line class="reference" x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#000" stroke-width="1.4" stroke-dasharray="6 4"/>"##,
            LEFT + frame.w
        );
        frame.legend(&mut out, series.len(), label, "#000", true);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Grouped bar chart: one group per category, one bar per series.
pub fn render_bars(categories: &[String], series: &[(String, Vec<f64>)], opts: &ChartOptions) -> Result<String> {
    if series.is_empty() || categories.is_empty() {
        return Err(Error::Domain("render_bars needs at least one category and one series".into()));
    }
    if let Some((label, v)) = series.iter().find(|(_, v)| v.len() != categories.len()) {
        return Err(Error::Domain(format!(
            "series {label} has {} values for {} categories",
            v.len(),
            categories.len()
        )));
    }
    let values = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (ymin, ymax) = padded(lo, hi);
    let bounds = Bounds { xmin: 0.0, xmax: categories.len() as f64, ymin, ymax };
    let frame = Frame::new(bounds);
    let mut out = String::new();
    frame.open(&mut out, opts, false);
    let group_w = frame.w / categories.len() as f64;
    let bar_w = group_w * 0.8 / series.len() as f64;
    let zero = frame.py(0.0);
    for (c, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * c as f64 + group_w * 0.1;
        for (k, (_, vals)) in series.iter().enumerate() {
            let y = frame.py(vals[c]);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bar_w * k as f64,
                y.min(zero),
                bar_w,
                (y - zero).abs(),
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + group_w * (c as f64 + 0.5),
            TOP + frame.h + 18.0,
            esc(cat)
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#444"/>"##,
        LEFT + frame.w
    );
    for (k, (label, _)) in series.iter().enumerate() {
        frame.legend(&mut out, k, label, PALETTE[k % PALETTE.len()], false);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Reads `(x, y)` pairs from two named columns of a CSV file.
pub fn read_series(path: &Path, x_col: &str, y_col: &str) -> Result<Vec<(f64, f64)>> {
    let parse = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse(1, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse(1, format!("missing column '{name}'")))
    };
    let (xi, yi) = (col(x_col)?, col(y_col)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse().map_err(|_| parse(line, format!("bad number '{s}'")))
        };
        out.push((num(xi)?, num(yi)?));
    }
    Ok(out)
}

/// Renders `mean_episode_return` against `iteration` from each CSV.
pub fn render_csv_files(
    paths: &[PathBuf],
    labels: &[String],
    opts: &ChartOptions,
    out_svg: &Path,
) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::Domain("render needs at least one CSV".into()));
    }
    if !labels.is_empty() && labels.len() != paths.len() {
        return Err(Error::Config(format!("{} labels for {} CSV files", labels.len(), paths.len())));
    }
    let series = paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            Ok(Series {
                label: labels
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()),
                points: read_series(p, "iteration", "mean_episode_return")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let svg = render_curves(&series, opts)?;
    std::fs::write(out_svg, svg).map_err(|e| Error::Io { path: out_svg.to_path_buf(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ChartOptions {
        ChartOptions { title: "t".into(), x_label: "iteration".into(), y_label: "reward".into(), reference: None }
    }

    #[test]
    fn empty_series_list_rejected() {
        assert!(render_curves(&[], &opts()).is_err());
    }

    #[test]
    fn two_point_series_is_one_polyline() {
        let s = Series { label: "a".into(), points: vec![(1.0, 2.0), (3.0, 5.0)] };
        let svg = render_curves(&[s], &opts()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let start = svg.find("points=\"").unwrap() + 8;
        let end = start + svg[start..].find('"').unwrap();
        assert_eq!(svg[start..end].split(' ').count(), 2);
    }

    #[test]
    fn flat_series_still_has_positive_span() {
        let b = chart_bounds(&[Series { label: "a".into(), points: vec![(0.0, 3.0), (0.0, 3.0)] }], None).unwrap();
        assert!(b.xmax > b.xmin && b.ymax > b.ymin);
    }

    #[test]
    fn bars_reject_ragged_series() {
        let cats = vec!["a".to_string(), "b".to_string()];
        assert!(render_bars(&cats, &[("s".into(), vec![1.0])], &opts()).is_err());
        assert!(render_bars(&cats, &[("s".into(), vec![1.0, -2.0])], &opts()).is_ok());
    }

    #[test]
    fn labels_are_escaped() {
        let s = Series { label: "a<b>&c".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] };
        let svg = render_curves(&[s], &opts()).unwrap();
        assert!(svg.contains("a&lt;b&gt;&amp;c"));
    }
}
