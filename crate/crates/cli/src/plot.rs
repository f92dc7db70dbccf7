// SPDX-License-Identifier: MIT OR Apache-2.0

//! Standalone SVG 1.1 charts: categorical scatter, heatmap, line.
//!
//! Output is a pure function of the input, so identical data gives identical
//! bytes. Coordinates are printed with fixed precision.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 52.0;
const LEGEND_WIDTH: f64 = 120.0;
const TICKS: usize = 5;

/// tab10.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Viridis sampled at five stops.
const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("plot data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Style {
    pub title: Option<String>,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
    pub width: u32,
    pub height: u32,
    pub point_radius: f64,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            title: None,
            x_label: None,
            y_label: None,
            width: 640,
            height: 480,
            point_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scatter {
    pub points: Vec<[f64; 2]>,
    /// One category per point.
    pub classes: Option<Vec<usize>>,
    /// Legend text per category id; defaults to the id.
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeatCells {
    /// Mapped through a viridis ramp between the min and max value.
    Scalar(Vec<f64>),
    /// Channels in [0, 1].
    Rgb(Vec<[f64; 3]>),
}

/// Row-major grid; row 0 is drawn at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub cells: HeatCells,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    Scatter(Scatter),
    Heatmap(Heatmap),
    Line(Vec<Series>),
}

impl PlotData {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Scatter(_) => "scatter",
            Self::Heatmap(_) => "heatmap",
            Self::Line(_) => "line",
        }
    }

    fn validate(&self) -> Result<(), PlotError> {
        let finite = |p: &[f64; 2]| p[0].is_finite() && p[1].is_finite();
        match self {
            Self::Scatter(s) => {
                if !s.points.iter().all(finite) {
                    return Err(PlotError::Data("scatter points must be finite".into()));
                }
                if let Some(c) = &s.classes {
                    if c.len() != s.points.len() {
                        return Err(PlotError::Data(format!(
                            "{} classes for {} points",
                            c.len(),
                            s.points.len()
                        )));
                    }
                }
            }
            Self::Heatmap(h) => {
                let n = match &h.cells {
                    HeatCells::Scalar(v) => {
                        if !v.iter().all(|x| x.is_finite()) {
                            return Err(PlotError::Data("heatmap values must be finite".into()));
                        }
                        v.len()
                    }
                    HeatCells::Rgb(v) => {
                        if !v.iter().flatten().all(|x| x.is_finite()) {
                            return Err(PlotError::Data("heatmap colors must be finite".into()));
                        }
                        v.len()
                    }
                };
                if n != h.rows * h.cols {
                    return Err(PlotError::Data(format!(
                        "{n} cells for a {}x{} grid",
                        h.rows, h.cols
                    )));
                }
            }
            Self::Line(series) => {
                if !series.iter().flat_map(|s| &s.points).all(finite) {
                    return Err(PlotError::Data("line points must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Renders `data` and writes it to `out_path`.
pub fn plot_svg(data: &PlotData, style: &Style, out_path: &Path) -> Result<(), PlotError> {
    let svg = render_svg(data, style)?;
    std::fs::write(out_path, svg)?;
    Ok(())
}

pub fn render_svg(data: &PlotData, style: &Style) -> Result<String, PlotError> {
    data.validate()?;
    if style.width < 200 || style.height < 150 {
        return Err(PlotError::Data(format!(
            "canvas {}x{} is too small",
            style.width, style.height
        )));
    }
    let mut canvas = Canvas::new(style, has_legend(data));
    match data {
        PlotData::Scatter(s) => canvas.scatter(s, style),
        PlotData::Heatmap(h) => canvas.heatmap(h),
        PlotData::Line(series) => canvas.lines(series),
    }
    Ok(canvas.finish(style))
}

fn has_legend(data: &PlotData) -> bool {
    match data {
        PlotData::Scatter(s) => s.classes.as_ref().is_some_and(|c| !c.is_empty()),
        PlotData::Heatmap(h) => matches!(h.cells, HeatCells::Scalar(_)),
        PlotData::Line(series) => !series.is_empty(),
    }
}

/// Color for category index `i`: tab10, then golden-angle hues.
pub fn category_color(i: usize) -> String {
    match PALETTE.get(i) {
        Some(c) => (*c).to_string(),
        None => format!("hsl({:.1},65%,45%)", (i as f64 * 137.507_764) % 360.0),
    }
}

fn viridis(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - i as f64;
    let mix = |k: usize| (VIRIDIS[i][k] * (1.0 - f) + VIRIDIS[i + 1][k] * f).round() as u8;
    [mix(0), mix(1), mix(2)]
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Fixed-precision number without a negative zero.
fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(x: f64, step: f64) -> String {
    // fewest decimals that represent the step exactly, e.g. 2 for 0.25
    let decimals = (0..6)
        .find(|&d| {
            let scaled = step * 10f64.powi(d as i32);
            (scaled - scaled.round()).abs() < 1e-6 * scaled.max(1.0)
        })
        .unwrap_or(6);
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Round tick positions covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let span = hi - lo;
    let raw = span / TICKS as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let count = ((end - start) / step).round() as usize;
    let ticks = (0..=count).map(|i| start + i as f64 * step).collect();
    (start, end, ticks)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
    x_ticks: Vec<f64>,
    y_ticks: Vec<f64>,
}

struct Canvas {
    width: f64,
    height: f64,
    plot_right: f64,
    body: String,
}

impl Canvas {
    fn new(style: &Style, legend: bool) -> Self {
        let width = style.width as f64;
        let right = width - MARGIN_RIGHT - if legend { LEGEND_WIDTH } else { 0.0 };
        Self {
            width,
            height: style.height as f64,
            plot_right: right,
            body: String::new(),
        }
    }

    fn plot_bottom(&self) -> f64 {
        self.height - MARGIN_BOTTOM
    }

    fn axes_for(&self, xs: (f64, f64), ys: (f64, f64)) -> Axes {
        let (x0, x1, x_ticks) = nice_ticks(xs.0, xs.1);
        let (y0, y1, y_ticks) = nice_ticks(ys.0, ys.1);
        Axes {
            x: (x0, x1),
            y: (y0, y1),
            x_ticks,
            y_ticks,
        }
    }

    fn sx(&self, a: &Axes, x: f64) -> f64 {
        MARGIN_LEFT + (x - a.x.0) / (a.x.1 - a.x.0) * (self.plot_right - MARGIN_LEFT)
    }

    fn sy(&self, a: &Axes, y: f64) -> f64 {
        self.plot_bottom() - (y - a.y.0) / (a.y.1 - a.y.0) * (self.plot_bottom() - MARGIN_TOP)
    }

    fn draw_axes(&mut self, a: &Axes) {
        let (l, r, t, b) = (MARGIN_LEFT, self.plot_right, MARGIN_TOP, self.plot_bottom());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<g class=\"axes\" stroke=\"#333333\" stroke-width=\"1\" fill=\"none\">"
        );
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>",
            num(l),
            num(t),
            num(r - l),
            num(b - t)
        );
        let x_step = a.x_ticks.get(1).map_or(1.0, |v| v - a.x_ticks[0]);
        let y_step = a.y_ticks.get(1).map_or(1.0, |v| v - a.y_ticks[0]);
        let mut labels = String::new();
        for &tx in &a.x_ticks {
            let px = self.sx(a, tx);
            let _ = writeln!(
                s,
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>",
                num(px),
                num(b),
                num(b + 5.0)
            );
            let _ = writeln!(
                labels,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                num(px),
                num(b + 18.0),
                tick_label(tx, x_step)
            );
        }
        for &ty in &a.y_ticks {
            let py = self.sy(a, ty);
            let _ = writeln!(
                s,
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>",
                num(l - 5.0),
                num(py),
                num(l)
            );
            let _ = writeln!(
                labels,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
                num(l - 8.0),
                num(py + 4.0),
                tick_label(ty, y_step)
            );
        }
        s.push_str("</g>\n<g class=\"tick-labels\" font-size=\"11\" fill=\"#333333\">\n");
        s.push_str(&labels);
        s.push_str("</g>\n");
        self.body.push_str(&s);
    }

    fn scatter(&mut self, data: &Scatter, style: &Style) {
        let xs = padded_range(data.points.iter().map(|p| p[0]));
        let ys = padded_range(data.points.iter().map(|p| p[1]));
        let axes = self.axes_for(xs, ys);
        self.draw_axes(&axes);
        let categories: Vec<usize> = match &data.classes {
            Some(c) => c
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            None => Vec::new(),
        };
        let slot = |class: usize| categories.binary_search(&class).unwrap_or(0);
        let mut s = String::from("<g class=\"points\" stroke=\"none\">\n");
        for (i, p) in data.points.iter().enumerate() {
            let color = match &data.classes {
                Some(c) => category_color(slot(c[i])),
                None => category_color(0),
            };
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
                num(self.sx(&axes, p[0])),
                num(self.sy(&axes, p[1])),
                num(style.point_radius),
                color
            );
        }
        s.push_str("</g>\n");
        self.body.push_str(&s);
        let entries: Vec<(String, String)> = categories
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let name = data
                    .class_names
                    .as_ref()
                    .and_then(|n| n.get(c).cloned())
                    .unwrap_or_else(|| c.to_string());
                (name, category_color(k))
            })
            .collect();
        self.legend(&entries);
    }

    fn heatmap(&mut self, data: &Heatmap) {
        let axes = Axes {
            x: (0.0, data.cols.max(1) as f64),
            y: (0.0, data.rows.max(1) as f64),
            x_ticks: Vec::new(),
            y_ticks: Vec::new(),
        };
        let cell_w = (self.plot_right - MARGIN_LEFT) / data.cols.max(1) as f64;
        let cell_h = (self.plot_bottom() - MARGIN_TOP) / data.rows.max(1) as f64;
        let mut s = String::from("<g class=\"cells\" stroke=\"none\">\n");
        let (lo, hi) = match &data.cells {
            HeatCells::Scalar(v) => padded_range(v.iter().copied()),
            HeatCells::Rgb(_) => (0.0, 1.0),
        };
        for r in 0..data.rows {
            for c in 0..data.cols {
                let i = r * data.cols + c;
                let rgb = match &data.cells {
                    HeatCells::Scalar(v) => viridis((v[i] - lo) / (hi - lo)),
                    HeatCells::Rgb(v) => v[i].map(|ch| (ch.clamp(0.0, 1.0) * 255.0).round() as u8),
                };
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                    num(MARGIN_LEFT + c as f64 * cell_w),
                    num(MARGIN_TOP + r as f64 * cell_h),
                    num(cell_w),
                    num(cell_h),
                    hex(rgb)
                );
            }
        }
        s.push_str("</g>\n");
        self.body.push_str(&s);
        self.draw_axes(&axes);
        let mut labels =
            String::from("<g class=\"tick-labels\" font-size=\"11\" fill=\"#333333\">\n");
        let every = data.cols.max(data.rows).div_ceil(12).max(1);
        for c in (0..data.cols).step_by(every) {
            let _ = writeln!(
                labels,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{c}</text>",
                num(MARGIN_LEFT + (c as f64 + 0.5) * cell_w),
                num(self.plot_bottom() + 18.0)
            );
        }
        for r in (0..data.rows).step_by(every) {
            let _ = writeln!(
                labels,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{r}</text>",
                num(MARGIN_LEFT - 8.0),
                num(MARGIN_TOP + (r as f64 + 0.5) * cell_h + 4.0)
            );
        }
        labels.push_str("</g>\n");
        self.body.push_str(&labels);
        if let HeatCells::Scalar(v) = &data.cells {
            if !v.is_empty() {
                let entries = [
                    (tick_label(lo, (hi - lo) / 100.0), hex(viridis(0.0))),
                    (tick_label(hi, (hi - lo) / 100.0), hex(viridis(1.0))),
                ];
                self.legend(&entries);
            }
        }
    }

    fn lines(&mut self, series: &[Series]) {
        let all = || series.iter().flat_map(|s| s.points.iter());
        let axes = self.axes_for(
            padded_range(all().map(|p| p[0])),
            padded_range(all().map(|p| p[1])),
        );
        self.draw_axes(&axes);
        let mut s = String::from("<g class=\"series\" fill=\"none\" stroke-width=\"1.5\">\n");
        for (k, line) in series.iter().enumerate() {
            if line.points.is_empty() {
                continue;
            }
            let path: Vec<String> = line
                .points
                .iter()
                .map(|p| {
                    format!(
                        "{},{}",
                        num(self.sx(&axes, p[0])),
                        num(self.sy(&axes, p[1]))
                    )
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline stroke=\"{}\" points=\"{}\"/>",
                category_color(k),
                path.join(" ")
            );
        }
        s.push_str("</g>\n");
        self.body.push_str(&s);
        let entries: Vec<(String, String)> = series
            .iter()
            .enumerate()
            .map(|(k, l)| (l.name.clone(), category_color(k)))
            .collect();
        self.legend(&entries);
    }

    fn legend(&mut self, entries: &[(String, String)]) {
        if entries.is_empty() {
            return;
        }
        let x = self.plot_right + 16.0;
        let mut s = String::from("<g class=\"legend\" font-size=\"11\" fill=\"#333333\">\n");
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = MARGIN_TOP + 8.0 + i as f64 * 16.0;
            let _ = writeln!(
                s,
                "<g class=\"legend-entry\"><rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text></g>",
                num(x),
                num(y - 9.0),
                color,
                num(x + 16.0),
                num(y),
                escape(name)
            );
        }
        s.push_str("</g>\n");
        self.body.push_str(&s);
    }

    fn finish(self, style: &Style) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>"
        );
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\">",
            self.width, self.height
        );
        let _ = writeln!(
            out,
            "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>"
        );
        if let Some(t) = &style.title {
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
                num(self.width / 2.0),
                escape(t)
            );
        }
        out.push_str(&self.body);
        let mid_x = (MARGIN_LEFT + self.plot_right) / 2.0;
        let mid_y = (MARGIN_TOP + self.plot_bottom()) / 2.0;
        if let Some(x) = &style.x_label {
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
                num(mid_x),
                num(self.height - 12.0),
                escape(x)
            );
        }
        if let Some(y) = &style.y_label {
            let _ = writeln!(
                out,
                "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {0})\">{1}</text>",
                num(mid_y),
                escape(y)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
