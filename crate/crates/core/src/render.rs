//! Deterministic bar-chart layout with SVG output.
//!
//! All lengths are proportional to the base height, so uniformly scaling the
//! base height scales every coordinate. The aspect ratio fixes the plot
//! rectangle (`width = base_height × aspect_ratio`, `height = base_height`);
//! the canvas adds padding plus whatever room the tick labels need, so that
//! every box lies on the canvas.
//!
//! Text is measured with a fixed-width approximation: font size is
//! `base_height × FONT_FRACTION` and each character advances
//! `CHAR_ADVANCE × font_size`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Experiment, LayoutParams, Orientation};

pub const FONT_FRACTION: f64 = 1.0 / 25.0;
pub const CHAR_ADVANCE: f64 = 0.6;
/// Distance between the band axis and the label anchor, in font sizes.
pub const TICK_GAP: f64 = 0.3;
/// Canvas padding around plot and labels, in font sizes.
pub const PADDING: f64 = 0.5;

const BAR_FILL: &str = "#4c78a8";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartData {
    pub categories: Vec<String>,
    pub values: Vec<f64>,
}

impl ChartData {
    pub fn new(categories: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let data = ChartData { categories, values };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.len() != self.values.len() {
            return Err(Error::InvalidData(format!(
                "{} categories but {} values",
                self.categories.len(),
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidData(format!(
                "values must be finite and nonnegative, got {v}"
            )));
        }
        Ok(())
    }

    /// Truncates or cycles the entries to exactly `n` bars.
    pub fn fitted(&self, n: usize) -> ChartData {
        if self.is_empty() || self.len() == n {
            return self.clone();
        }
        let idx = (0..n).map(|i| i % self.len());
        ChartData {
            categories: idx.clone().map(|i| self.categories[i].clone()).collect(),
            values: idx.map(|i| self.values[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// True when the two rectangles share a region of positive area.
    pub fn overlaps(&self, other: &Rect) -> bool {
        let dx = self.right().min(other.right()) - self.x.max(other.x);
        let dy = self.bottom().min(other.bottom()) - self.y.max(other.y);
        dx > 0.0 && dy > 0.0
    }

    fn translate(&mut self, dx: f64, dy: f64) {
        self.x += dx;
        self.y += dy;
    }

    fn from_points(points: &[(f64, f64)]) -> Rect {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Rect {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextAnchor {
    Middle,
    End,
}

/// A tick label with its axis-aligned bounding box after rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBox {
    pub text: String,
    pub anchor_x: f64,
    pub anchor_y: f64,
    pub rotation: u32,
    pub text_anchor: TextAnchor,
    /// True when the text hangs below the anchor instead of being centred on it.
    pub hanging: bool,
    pub bbox: Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedChart {
    pub width: f64,
    pub height: f64,
    pub font_size: f64,
    pub orientation: Orientation,
    pub plot: Rect,
    pub bars: Vec<Rect>,
    pub labels: Vec<LabelBox>,
    pub axes: Vec<Segment>,
}

impl RenderedChart {
    pub fn band_step(&self) -> f64 {
        let n = self.bars.len() as f64;
        match self.orientation {
            Orientation::Vertical => self.plot.w / n,
            Orientation::Horizontal => self.plot.h / n,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("chart geometry serializes")
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let (w, h) = (self.width, self.height);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            num(w),
            num(h),
            num(w),
            num(h)
        );
        let _ = writeln!(
            s,
            r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
            num(w),
            num(h)
        );
        let _ = writeln!(s, r#"<g fill="{BAR_FILL}">"#);
        for b in &self.bars {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
                num(b.x),
                num(b.y),
                num(b.w),
                num(b.h)
            );
        }
        s.push_str("</g>\n");
        s.push_str("<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n");
        for a in &self.axes {
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                num(a.x1),
                num(a.y1),
                num(a.x2),
                num(a.y2)
            );
        }
        s.push_str("</g>\n");
        let _ = writeln!(
            s,
            r#"<g font-family="monospace" font-size="{}" fill="black">"#,
            num(self.font_size)
        );
        for l in &self.labels {
            let anchor = match l.text_anchor {
                TextAnchor::Middle => "middle",
                TextAnchor::End => "end",
            };
            let baseline = if l.hanging { "hanging" } else { "central" };
            let rotate = if l.rotation == 0 {
                String::new()
            } else {
                format!(" rotate(-{})", l.rotation)
            };
            let _ = writeln!(
                s,
                r#"<text transform="translate({},{}){}" text-anchor="{}" dominant-baseline="{}">{}</text>"#,
                num(l.anchor_x),
                num(l.anchor_y),
                rotate,
                anchor,
                baseline,
                escape(&l.text)
            );
        }
        s.push_str("</g>\n</svg>\n");
        s
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Label text after truncation to the layout's maximum length.
pub fn truncate_label(label: &str, max_len: u32) -> String {
    label.chars().take(max_len as usize).collect()
}

/// Computes chart geometry without producing SVG.
pub fn layout(data: &ChartData, params: &LayoutParams, base_height: u32) -> Result<RenderedChart> {
    params.validate()?;
    data.validate()?;
    if data.len() != params.num_bars as usize {
        return Err(Error::InvalidData(format!(
            "data has {} entries but the layout asks for {} bars",
            data.len(),
            params.num_bars
        )));
    }
    if base_height == 0 {
        return Err(Error::Render("zero-size canvas".into()));
    }
    let base = f64::from(base_height);
    let plot_w = base * params.aspect_ratio;
    let plot_h = base;
    if !(plot_w.is_finite() && plot_w > 0.0) {
        return Err(Error::Render(format!("non-finite plot width {plot_w}")));
    }
    let font = base * FONT_FRACTION;
    let gap = TICK_GAP * font;
    let pad = PADDING * font;
    let n = data.len();
    let vmax = data.values.iter().cloned().fold(0.0, f64::max);
    let frac = |v: f64| if vmax > 0.0 { v / vmax } else { 0.0 };
    let mut bars = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match params.orientation {
        Orientation::Vertical => {
            let step = plot_w / n as f64;
            let thick = params.bandwidth * step;
            for (i, (&v, cat)) in data.values.iter().zip(&data.categories).enumerate() {
                let x0 = i as f64 * step + (step - thick) / 2.0;
                let len = frac(v) * plot_h;
                bars.push(Rect {
                    x: x0,
                    y: plot_h - len,
                    w: thick,
                    h: len,
                });
                let center = (i as f64 + 0.5) * step;
                labels.push(label_box(cat, params, font, center, plot_h + gap, true));
            }
        }
        Orientation::Horizontal => {
            let step = plot_h / n as f64;
            let thick = params.bandwidth * step;
            for (i, (&v, cat)) in data.values.iter().zip(&data.categories).enumerate() {
                let y0 = i as f64 * step + (step - thick) / 2.0;
                bars.push(Rect {
                    x: 0.0,
                    y: y0,
                    w: frac(v) * plot_w,
                    h: thick,
                });
                let center = (i as f64 + 0.5) * step;
                labels.push(label_box(cat, params, font, -gap, center, false));
            }
        }
    }

    let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, plot_w, plot_h);
    for l in &labels {
        x0 = x0.min(l.bbox.x);
        y0 = y0.min(l.bbox.y);
        x1 = x1.max(l.bbox.right());
        y1 = y1.max(l.bbox.bottom());
    }
    let (dx, dy) = (pad - x0, pad - y0);
    let mut plot = Rect {
        x: 0.0,
        y: 0.0,
        w: plot_w,
        h: plot_h,
    };
    plot.translate(dx, dy);
    for b in &mut bars {
        b.translate(dx, dy);
    }
    for l in &mut labels {
        l.bbox.translate(dx, dy);
        l.anchor_x += dx;
        l.anchor_y += dy;
    }
    let axes = vec![
        // band axis
        match params.orientation {
            Orientation::Vertical => Segment {
                x1: plot.x,
                y1: plot.bottom(),
                x2: plot.right(),
                y2: plot.bottom(),
            },
            Orientation::Horizontal => Segment {
                x1: plot.x,
                y1: plot.y,
                x2: plot.x,
                y2: plot.bottom(),
            },
        },
        // value axis
        match params.orientation {
            Orientation::Vertical => Segment {
                x1: plot.x,
                y1: plot.y,
                x2: plot.x,
                y2: plot.bottom(),
            },
            Orientation::Horizontal => Segment {
                x1: plot.x,
                y1: plot.bottom(),
                x2: plot.right(),
                y2: plot.bottom(),
            },
        },
    ];
    Ok(RenderedChart {
        width: (x1 - x0) + 2.0 * pad,
        height: (y1 - y0) + 2.0 * pad,
        font_size: font,
        orientation: params.orientation,
        plot,
        bars,
        labels,
        axes,
    })
}

/// Computes geometry and its SVG serialization.
pub fn render(
    data: &ChartData,
    params: &LayoutParams,
    base_height: u32,
) -> Result<(RenderedChart, String)> {
    let chart = layout(data, params, base_height)?;
    let svg = chart.to_svg();
    Ok((chart, svg))
}

fn label_box(
    raw: &str,
    params: &LayoutParams,
    font: f64,
    anchor_x: f64,
    anchor_y: f64,
    below_axis: bool,
) -> LabelBox {
    let text = truncate_label(raw, params.max_label_length);
    let tw = text.chars().count() as f64 * CHAR_ADVANCE * font;
    let th = font;
    let rot = params.label_rotation.degrees();
    let hanging = below_axis && rot == 0;
    // Local rectangle before rotation, with the anchor at the origin.
    let (lx0, lx1, ly0, ly1, text_anchor) = if hanging {
        (-tw / 2.0, tw / 2.0, 0.0, th, TextAnchor::Middle)
    } else {
        (-tw, 0.0, -th / 2.0, th / 2.0, TextAnchor::End)
    };
    // Screen rotation by -rot degrees (counter-clockwise on screen).
    let (cos, sin) = match rot {
        0 => (1.0, 0.0),
        45 => (std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
        90 => (0.0, -1.0),
        _ => unreachable!("rotation is validated"),
    };
    let corners = [(lx0, ly0), (lx1, ly0), (lx0, ly1), (lx1, ly1)]
        .map(|(x, y)| (anchor_x + x * cos - y * sin, anchor_y + x * sin + y * cos));
    LabelBox {
        text,
        anchor_x,
        anchor_y,
        rotation: rot,
        text_anchor,
        hanging,
        bbox: Rect::from_points(&corners),
    }
}

/// Which hard layout rules a desk reject applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeskRules {
    pub label_overlap: bool,
    pub rotated_horizontal: bool,
}

impl DeskRules {
    pub const NONE: DeskRules = DeskRules {
        label_overlap: false,
        rotated_horizontal: false,
    };
    pub const ALL: DeskRules = DeskRules {
        label_overlap: true,
        rotated_horizontal: true,
    };

    /// Both rules apply to Experiment 2; Experiment 1 has none.
    pub fn for_experiment(experiment: Experiment) -> DeskRules {
        match experiment {
            Experiment::Exp1 => DeskRules::NONE,
            Experiment::Exp2 => DeskRules::ALL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Overlap,
    RotatedInHorizontal,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::Overlap => "overlap",
            RejectReason::RotatedInHorizontal => "rotated-in-horizontal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(RejectReason),
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

pub fn desk_reject(chart: &RenderedChart, params: &LayoutParams, rules: DeskRules) -> Verdict {
    if rules.rotated_horizontal
        && params.orientation == Orientation::Horizontal
        && params.label_rotation.degrees() != 0
    {
        return Verdict::Fail(RejectReason::RotatedInHorizontal);
    }
    if rules.label_overlap && labels_overlap(chart) {
        return Verdict::Fail(RejectReason::Overlap);
    }
    Verdict::Pass
}

/// Sweep over label boxes sorted by left edge; only boxes whose x-ranges
/// still intersect are compared.
pub fn labels_overlap(chart: &RenderedChart) -> bool {
    let mut boxes: Vec<&Rect> = chart.labels.iter().map(|l| &l.bbox).collect();
    boxes.sort_by(|a, b| a.x.total_cmp(&b.x));
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            if b.x >= a.right() {
                break;
            }
            if a.overlaps(b) {
                return true;
            }
        }
    }
    false
}
