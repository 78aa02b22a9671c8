//! Minimal SVG line and bar charts for evaluation artifacts.
//!
//! These are write-only report figures, not an interactive UI; everything is
//! emitted as a self-contained SVG string with a fixed layout.

use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 64.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// One named line on a chart; x positions are category indices.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Line chart over categorical x positions (one tick label per category).
#[derive(Clone, Debug)]
pub struct LinePlot {
    pub title: String,
    pub y_label: String,
    pub x_ticks: Vec<String>,
    pub series: Vec<Series>,
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let n = self.x_ticks.len().max(1);

        let (mut y_min, mut y_max) = (f64::MAX, f64::MIN);
        for s in &self.series {
            for &v in &s.values {
                y_min = y_min.min(v);
                y_max = y_max.max(v);
            }
        }
        if y_min > y_max {
            (y_min, y_max) = (0.0, 1.0);
        }
        let pad = ((y_max - y_min) * 0.1).max(0.02);
        let (y_min, y_max) = ((y_min - pad).max(0.0), y_max + pad);

        let x_pos = |i: usize| {
            if n == 1 {
                MARGIN_L + plot_w / 2.0
            } else {
                MARGIN_L + plot_w * i as f64 / (n - 1) as f64
            }
        };
        let y_pos = |v: f64| MARGIN_T + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

        let mut svg = svg_header(&self.title);
        axes(&mut svg, y_min, y_max, y_pos, &self.y_label);

        for (i, tick) in self.x_ticks.iter().enumerate() {
            let x = x_pos(i);
            svg.push_str(&format!(
                "<line x1='{x:.1}' y1='{}' x2='{x:.1}' y2='{}' stroke='#ccc'/>\n",
                MARGIN_T,
                MARGIN_T + plot_h
            ));
            svg.push_str(&format!(
                "<text x='{x:.1}' y='{:.1}' font-size='11' text-anchor='middle'>{}</text>\n",
                MARGIN_T + plot_h + 18.0,
                escape(tick)
            ));
        }

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let pts: Vec<String> = s
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| format!("{:.1},{:.1}", x_pos(i), y_pos(v)))
                .collect();
            svg.push_str(&format!(
                "<polyline points='{}' fill='none' stroke='{color}' stroke-width='2'/>\n",
                pts.join(" ")
            ));
            for (i, &v) in s.values.iter().enumerate() {
                svg.push_str(&format!(
                    "<circle cx='{:.1}' cy='{:.1}' r='3' fill='{color}'/>\n",
                    x_pos(i),
                    y_pos(v)
                ));
            }
            legend_entry(&mut svg, si, color, &s.label);
        }

        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_svg())?;
        Ok(())
    }
}

/// Grouped bar chart: one bar group per category, one bar per series.
#[derive(Clone, Debug)]
pub struct BarPlot {
    pub title: String,
    pub y_label: String,
    pub x_ticks: Vec<String>,
    pub series: Vec<Series>,
}

impl BarPlot {
    pub fn to_svg(&self) -> String {
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let n = self.x_ticks.len().max(1);
        let groups = self.series.len().max(1);

        let y_max = self
            .series
            .iter()
            .flat_map(|s| s.values.iter().cloned())
            .fold(f64::MIN, f64::max)
            .max(1e-9);
        let y_max = y_max * 1.1;
        let y_pos = |v: f64| MARGIN_T + plot_h * (1.0 - v / y_max);

        let group_w = plot_w / n as f64;
        let bar_w = (group_w * 0.8) / groups as f64;

        let mut svg = svg_header(&self.title);
        axes(&mut svg, 0.0, y_max, y_pos, &self.y_label);

        for (i, tick) in self.x_ticks.iter().enumerate() {
            let cx = MARGIN_L + group_w * (i as f64 + 0.5);
            svg.push_str(&format!(
                "<text x='{cx:.1}' y='{:.1}' font-size='11' text-anchor='middle'>{}</text>\n",
                MARGIN_T + plot_h + 18.0,
                escape(tick)
            ));
        }

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            for (i, &v) in s.values.iter().enumerate() {
                let x = MARGIN_L + group_w * i as f64 + group_w * 0.1 + bar_w * si as f64;
                let y = y_pos(v.max(0.0));
                let h = MARGIN_T + plot_h - y;
                svg.push_str(&format!(
                    "<rect x='{x:.1}' y='{y:.1}' width='{bar_w:.1}' height='{h:.1}' fill='{color}'/>\n"
                ));
            }
            legend_entry(&mut svg, si, color, &s.label);
        }

        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_svg())?;
        Ok(())
    }
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}' \
         viewBox='0 0 {WIDTH} {HEIGHT}'>\n\
         <rect width='{WIDTH}' height='{HEIGHT}' fill='white'/>\n\
         <text x='{:.1}' y='28' font-size='16' text-anchor='middle' font-weight='bold'>{}</text>\n",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        escape(title)
    )
}

fn axes(svg: &mut String, y_min: f64, y_max: f64, y_pos: impl Fn(f64) -> f64, y_label: &str) {
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_right = WIDTH - MARGIN_R;
    svg.push_str(&format!(
        "<line x1='{MARGIN_L}' y1='{MARGIN_T}' x2='{MARGIN_L}' y2='{}' stroke='black'/>\n\
         <line x1='{MARGIN_L}' y1='{}' x2='{x_right}' y2='{}' stroke='black'/>\n",
        MARGIN_T + plot_h,
        MARGIN_T + plot_h,
        MARGIN_T + plot_h
    ));
    for i in 0..=5 {
        let v = y_min + (y_max - y_min) * i as f64 / 5.0;
        let y = y_pos(v);
        svg.push_str(&format!(
            "<line x1='{:.1}' y1='{y:.1}' x2='{MARGIN_L}' y2='{y:.1}' stroke='black'/>\n\
             <text x='{:.1}' y='{:.1}' font-size='11' text-anchor='end'>{v:.3}</text>\n",
            MARGIN_L - 4.0,
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x='16' y='{:.1}' font-size='12' transform='rotate(-90 16 {:.1})' \
         text-anchor='middle'>{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    ));
}

fn legend_entry(svg: &mut String, index: usize, color: &str, label: &str) {
    let x = WIDTH - MARGIN_R + 12.0;
    let y = MARGIN_T + 10.0 + index as f64 * 20.0;
    svg.push_str(&format!(
        "<rect x='{x:.1}' y='{:.1}' width='12' height='12' fill='{color}'/>\n\
         <text x='{:.1}' y='{:.1}' font-size='12'>{}</text>\n",
        y - 10.0,
        x + 18.0,
        y,
        escape(label)
    ));
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
