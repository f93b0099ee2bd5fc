//! Minimal standalone SVG renderings of CSV tables: line plots (optionally
//! log-scaled) and matrix heatmaps. Presentation only.

use std::fmt::Write;
use std::path::Path;

use crate::output::{CliError, CliResult};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); header.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Input(format!("row {}: column '{}' is not numeric: '{field}'", line + 2, header[k])))?;
                columns[k].push(v);
            }
        }
        if columns.first().is_none_or(|c| c.is_empty()) {
            return Err(CliError::Input(format!("{} has no data rows", path.display())));
        }
        Ok(Table { header, columns })
    }

    fn column(&self, name: &str) -> CliResult<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| CliError::Usage(format!("no column named '{name}'")))
    }
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> CliResult<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Err(CliError::Input("nothing to plot on this axis".into()));
        }
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            // Constant data: open a unit-sized window around it.
            let pad = if log { 0.5 } else { 0.5 * lo.abs().max(1.0) };
            lo -= pad;
            hi += pad;
        }
        Ok(Axis { lo, hi, log })
    }

    fn frac(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    /// Tick positions in data space.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6 + 1).max(1);
            return (a..=b).step_by(step as usize).map(|k| 10f64.powi(k)).collect();
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-9 * step {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        let s = format!("{v:.0e}");
        if (s.parse::<f64>().unwrap_or(f64::NAN) / v - 1.0).abs() < 1e-9 {
            s
        } else {
            format!("{v:.2e}")
        }
    } else {
        format!("{}", (v * 1e4).round() / 1e4)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !title.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + (W - LEFT - RIGHT) / 2.0, escape(title));
    }
    s
}

pub struct LineOptions<'a> {
    pub x: Option<&'a str>,
    pub y: &'a [String],
    pub logx: bool,
    pub logy: bool,
    pub title: &'a str,
}

pub fn line(t: &Table, o: &LineOptions) -> CliResult<String> {
    let index: Vec<f64>;
    let (xs, xname): (&[f64], &str) = match o.x {
        Some(name) => {
            let k = t.column(name)?;
            (&t.columns[k], &t.header[k])
        }
        None if t.header.len() >= 2 => (&t.columns[0], &t.header[0]),
        None => {
            index = (0..t.columns[0].len()).map(|k| k as f64).collect();
            (&index, "row")
        }
    };
    let series: Vec<usize> = if o.y.is_empty() {
        (0..t.header.len()).filter(|&k| t.header[k] != xname).collect()
    } else {
        o.y.iter().map(|n| t.column(n)).collect::<CliResult<_>>()?
    };
    if series.is_empty() {
        return Err(CliError::Usage("no y columns to plot".into()));
    }
    let ax = Axis::fit(xs.iter().copied(), o.logx)?;
    let ay = Axis::fit(series.iter().flat_map(|&k| t.columns[k].iter().copied()), o.logy)?;
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |f: f64| LEFT + f * pw;
    let py = |f: f64| TOP + (1.0 - f) * ph;

    let mut s = frame(o.title);
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for v in ax.ticks() {
        if let Some(f) = ax.frac(v) {
            let x = px(f);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(v));
        }
    }
    for v in ay.ticks() {
        if let Some(f) = ay.frac(v) {
            let y = py(f);
            let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, label(v));
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(0.5), H - 10.0, escape(xname));
    for (c, &k) in series.iter().enumerate() {
        let colour = PALETTE[c % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(&t.columns[k])
            .filter_map(|(&x, &y)| Some(format!("{:.2},{:.2}", px(ax.frac(x)?), py(ay.frac(y)?))))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 14.0 + 16.0 * c as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, W - RIGHT + 10.0, W - RIGHT + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - RIGHT + 35.0, ly + 4.0, escape(&t.header[k]));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Blue–white–red for signed data, scaled by the largest magnitude.
fn diverging(v: f64, scale: f64) -> String {
    let f = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if f >= 0.0 {
        (255.0, 255.0 * (1.0 - f), 255.0 * (1.0 - f))
    } else {
        (255.0 * (1.0 + f), 255.0 * (1.0 + f), 255.0)
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Every column is a matrix column; row `k` of the CSV is matrix row `k`.
pub fn heatmap(t: &Table, title: &str) -> CliResult<String> {
    let (rows, cols) = (t.columns[0].len(), t.columns.len());
    let scale = t.columns.iter().flatten().filter(|v| v.is_finite()).map(|v| v.abs()).fold(0.0, f64::max);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let side = (pw / cols as f64).min(ph / rows as f64);
    let mut s = frame(title);
    for i in 0..rows {
        for j in 0..cols {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="{}"><title>[{i},{j}] {}</title></rect>"#,
                LEFT + j as f64 * side,
                TOP + i as f64 * side,
                diverging(t.columns[j][i], scale),
                t.columns[j][i]
            );
        }
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, side * cols as f64, side * rows as f64);
    let lx = W - RIGHT + 20.0;
    for (k, v) in [scale, 0.0, -scale].iter().enumerate() {
        let y = TOP + 40.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{y}" width="16" height="16" fill="{}" stroke="black"/>"#, diverging(*v, scale));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 22.0, y + 12.0, label(*v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{rows} × {cols}</text>"#, LEFT + side * cols as f64 / 2.0, H - 10.0);
    s.push_str("</svg>\n");
    Ok(s)
}
