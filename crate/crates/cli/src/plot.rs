//! Minimal SVG line charts over metrics CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn read_series(
    path: &Path,
    column: &str,
    expected: Option<&csv::StringRecord>,
) -> Result<(csv::StringRecord, Series)> {
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Runtime(format!("{}: {other:?}", path.display())),
    })?;
    let header = reader.headers().map_err(err)?.clone();
    if let Some(first) = expected {
        if first != &header {
            return Err(CliError::Config(format!(
                "{}: columns differ from the first input file",
                path.display()
            )));
        }
    }
    let x_idx = header
        .iter()
        .position(|h| h == "step")
        .ok_or_else(|| CliError::Config(format!("{}: no `step` column", path.display())))?;
    let y_idx = header.iter().position(|h| h == column).ok_or_else(|| {
        CliError::Config(format!("unknown column `{column}` in {}", path.display()))
    })?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(err)?;
        let (x, y) = (
            record.get(x_idx).unwrap_or(""),
            record.get(y_idx).unwrap_or(""),
        );
        // blank cells (e.g. a difficulty absent from the eval pool) are gaps
        if y.is_empty() {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                CliError::Runtime(format!("{}: `{s}` is not a number", path.display()))
            })
        };
        points.push((parse(x)?, parse(y)?));
    }
    Ok((
        header,
        Series {
            label: path.display().to_string(),
            points,
        },
    ))
}

/// Loads `column` from each CSV. All files must have identical headers.
pub fn load_series(paths: &[PathBuf], column: &str) -> Result<Vec<Series>> {
    if paths.is_empty() {
        return Err(CliError::Config("plot needs at least one CSV file".into()));
    }
    let mut header = None;
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let (h, s) = read_series(path, column, header.as_ref())?;
        header.get_or_insert(h);
        out.push(s);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the series as an SVG document. Output depends only on the inputs.
pub fn render_svg(series: &[Series], column: &str) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = TOP + ph,
        r = LEFT + pw
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}" stroke="black"/>"#,
        b = TOP + ph
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{b5}" stroke="black"/><text x="{px:.2}" y="{bt}" text-anchor="middle">{xv:.4}</text>"#,
            b = TOP + ph,
            b5 = TOP + ph + 5.0,
            bt = TOP + ph + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{l5}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{lt}" y="{pyt:.2}" text-anchor="end">{yv:.4}</text>"#,
            l5 = LEFT - 5.0,
            lt = LEFT - 8.0,
            pyt = py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{cx}" y="{y}" text-anchor="middle">step</text>"#,
        cx = LEFT + pw / 2.0,
        y = HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{cy}" text-anchor="middle" transform="rotate(-90 15 {cy})">{c}</text>"#,
        cy = TOP + ph / 2.0,
        c = escape(column)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{lx2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">{label}</text>"#,
            lx2 = lx + 20.0,
            tx = lx + 25.0,
            ty = ly + 4.0,
            label = escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads the CSVs and writes the chart to `out`.
pub fn plot(paths: &[PathBuf], column: &str, out: &Path) -> Result<()> {
    let series = load_series(paths, column)?;
    let svg = render_svg(&series, column);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(out, svg).map_err(|e| CliError::io(out, e))
}
