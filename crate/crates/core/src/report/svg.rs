//! Line charts on a fixed 640×480 canvas.
//!
//! Both axes span `[0, 1]` in data space. Coordinates are written with the
//! shortest round-trip float formatting, so identical inputs give identical
//! bytes.

use std::fmt::Write as _;

use crate::alignment::AlignmentReport;
use crate::calibration::CalibrationReport;

pub const CANVAS_WIDTH: f64 = 640.0;
pub const CANVAS_HEIGHT: f64 = 480.0;

const LEFT: f64 = 70.0;
const PLOT_W: f64 = 420.0;
const BOTTOM: f64 = 420.0;
const PLOT_H: f64 = 380.0;
const LEGEND_X: f64 = 505.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn plot_x(v: f64) -> f64 {
    LEFT + PLOT_W * v
}

pub fn plot_y(v: f64) -> f64 {
    BOTTOM - PLOT_H * v
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

struct Chart<'a> {
    title: String,
    x_label: &'a str,
    y_label: &'a str,
    x_ticks: Vec<(f64, String)>,
    diagonal: bool,
    series: Vec<Series>,
}

impl Chart<'_> {
    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" viewBox="0 0 {CANVAS_WIDTH} {CANVAS_HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let title = xml_escape(&self.title);
        let _ = writeln!(s, "<title>{title}</title>");
        let _ = writeln!(
            s,
            r#"<rect x="0" y="0" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#,
            plot_x(0.5)
        );

        s.push_str("<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n");
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{PLOT_W}" height="{PLOT_H}" fill="none"/>"#,
            plot_x(0.0),
            plot_y(1.0)
        );
        for i in 0..=5 {
            let v = i as f64 / 5.0;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                plot_x(0.0) - 5.0,
                plot_y(v),
                plot_x(0.0),
                plot_y(v)
            );
        }
        for (v, _) in &self.x_ticks {
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                plot_x(*v),
                plot_y(0.0),
                plot_x(*v),
                plot_y(0.0) + 5.0
            );
        }
        s.push_str("</g>\n<g class=\"tick-labels\" fill=\"#333\">\n");
        for i in 0..=5 {
            let v = i as f64 / 5.0;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#,
                plot_x(0.0) - 8.0,
                plot_y(v) + 4.0
            );
        }
        for (v, label) in &self.x_ticks {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                plot_x(*v),
                plot_y(0.0) + 18.0,
                xml_escape(label)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            plot_x(0.5),
            plot_y(0.0) + 40.0,
            xml_escape(self.x_label)
        );
        let (yx, yy) = (plot_x(0.0) - 45.0, plot_y(0.5));
        let _ = writeln!(
            s,
            r#"<text x="{yx}" y="{yy}" text-anchor="middle" transform="rotate(-90 {yx} {yy})">{}</text>"#,
            xml_escape(self.y_label)
        );
        s.push_str("</g>\n");

        if self.diagonal {
            let _ = writeln!(
                s,
                "<line class=\"diagonal\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>",
                plot_x(0.0),
                plot_y(0.0),
                plot_x(1.0),
                plot_y(1.0)
            );
        }

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let points: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", plot_x(x), plot_y(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-name="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                xml_escape(&series.name),
                points.join(" ")
            );
            for &(x, y) in &series.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                    plot_x(x),
                    plot_y(y)
                );
            }
        }

        s.push_str("<g class=\"legend\">\n");
        for (i, series) in self.series.iter().enumerate() {
            let y = plot_y(1.0) + 18.0 * i as f64;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<line x1="{LEGEND_X}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
                LEGEND_X + 18.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                LEGEND_X + 24.0,
                y + 4.0,
                xml_escape(&series.name)
            );
        }
        s.push_str("</g>\n</svg>\n");
        s
    }
}

/// Reliability diagram: one line per model through its non-empty bins.
pub fn render_reliability_svg(dataset: &str, calibrations: &[CalibrationReport]) -> String {
    Chart {
        title: format!("Reliability diagram: {dataset}"),
        x_label: "mean confidence",
        y_label: "accuracy",
        x_ticks: (0..=5)
            .map(|i| (i as f64 / 5.0, format!("{:.1}", i as f64 / 5.0)))
            .collect(),
        diagonal: true,
        series: calibrations
            .iter()
            .map(|c| Series {
                name: c.model.clone(),
                points: c
                    .reliability
                    .iter()
                    .map(|p| (p.confidence, p.accuracy))
                    .collect(),
            })
            .collect(),
    }
    .render()
}

/// Mean Jaccard against K, one line per labelled alignment.
pub fn render_ksweep_svg(title: &str, series: &[(String, &AlignmentReport)]) -> String {
    let k_max = series
        .iter()
        .flat_map(|(_, a)| a.sweep.keys().copied())
        .max()
        .unwrap_or(1);
    let x_of = |k: usize| {
        if k_max > 1 {
            (k - 1) as f64 / (k_max - 1) as f64
        } else {
            0.5
        }
    };
    Chart {
        title: title.to_string(),
        x_label: "K",
        y_label: "mean Jaccard",
        x_ticks: (1..=k_max).map(|k| (x_of(k), k.to_string())).collect(),
        diagonal: false,
        series: series
            .iter()
            .map(|(name, a)| Series {
                name: name.clone(),
                points: a.sweep.iter().map(|(&k, &v)| (x_of(k), v)).collect(),
            })
            .collect(),
    }
    .render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_map_to_plot_frame() {
        assert_eq!((plot_x(0.0), plot_y(0.0)), (70.0, 420.0));
        assert_eq!((plot_x(1.0), plot_y(1.0)), (490.0, 40.0));
    }

    #[test]
    fn names_are_escaped() {
        assert_eq!(xml_escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }
}
