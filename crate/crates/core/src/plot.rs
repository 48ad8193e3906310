//! Minimal SVG charts of horizon against release date.

use std::fmt::Write;

use chrono::{Datelike, NaiveDate};

use crate::dataset::TimeScale;
use crate::forecast::ForecastSeries;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 30.0, 40.0, 60.0); // left, right, top, bottom
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPoint {
    pub label: String,
    pub date: NaiveDate,
    pub h_minutes: f64,
    pub k_thinking: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub label: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub log_scale: bool,
    pub observed: Vec<ObservedPoint>,
    pub series: Vec<ForecastSeries>,
    pub markers: Vec<Marker>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log: bool,
}

impl Axes {
    fn y_value(&self, h: f64) -> f64 {
        if self.log {
            h.max(1e-6).log10()
        } else {
            h
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN.0 + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN.0 - MARGIN.1)
    }

    fn py(&self, h: f64) -> f64 {
        let y = self.y_value(h);
        HEIGHT - MARGIN.3 - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN.2 - MARGIN.3)
    }
}

impl Chart {
    pub fn new(title: impl Into<String>, log_scale: bool) -> Self {
        Chart { title: title.into(), log_scale, observed: Vec::new(), series: Vec::new(), markers: Vec::new() }
    }

    fn axes(&self, scale: &TimeScale) -> Axes {
        let dates = self.observed.iter().map(|p| p.date).chain(self.series.iter().flat_map(|s| s.dates()));
        let hs = self.observed.iter().map(|p| p.h_minutes).chain(self.series.iter().flat_map(|s| s.values()));
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        for d in dates {
            let x = scale.encode(d);
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        let log = self.log_scale;
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for h in hs {
            let y = if log { h.max(1e-6).log10() } else { h };
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if log {
            (y0, y1) = (y0.floor(), y1.ceil());
        } else {
            y0 = 0.0;
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        Axes { x0, x1, y0, y1, log }
    }

    /// Renders the chart. Output is a pure function of the chart contents.
    pub fn to_svg(&self, scale: &TimeScale) -> String {
        let ax = self.axes(scale);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (left, bottom) = (MARGIN.0, HEIGHT - MARGIN.3);
        let _ = writeln!(s, r#"<path d="M{left} {} V{bottom} H{}" stroke="black" fill="none"/>"#, MARGIN.2, WIDTH - MARGIN.1);

        // Year ticks.
        let first = scale.decode(ax.x0).year();
        let last = scale.decode(ax.x1).year();
        for year in first..=last + 1 {
            let Some(d) = NaiveDate::from_ymd_opt(year, 1, 1) else { continue };
            let x = scale.encode(d);
            if x < ax.x0 || x > ax.x1 {
                continue;
            }
            let px = ax.px(x);
            let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, MARGIN.2);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{year}</text>"#, bottom + 18.0);
        }

        // Value ticks.
        let ticks: Vec<f64> = if ax.log {
            (ax.y0 as i32..=ax.y1 as i32).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5).map(|i| ax.y0 + (ax.y1 - ax.y0) * i as f64 / 5.0).collect()
        };
        for h in ticks {
            let py = ax.py(h);
            let _ = writeln!(s, r##"<line x1="{left}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#eee"/>"##, WIDTH - MARGIN.1);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, py + 4.0, format_minutes(h));
        }
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">50% horizon (minutes{})</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            if ax.log { ", log scale" } else { "" }
        );

        for m in &self.markers {
            let px = ax.px(scale.encode(m.date));
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{bottom}" stroke="#666" stroke-dasharray="4 4"/><text x="{:.2}" y="{}">{}</text>"##,
                MARGIN.2,
                px + 3.0,
                MARGIN.2 + 12.0,
                escape(&m.label)
            );
        }

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut path = String::new();
            for (j, (d, h)) in series.points.iter().enumerate() {
                let _ = write!(path, "{}{:.2} {:.2}", if j == 0 { "M" } else { " L" }, ax.px(scale.encode(*d)), ax.py(*h));
            }
            let _ = writeln!(s, r#"<path d="{path}" stroke="{color}" stroke-width="2" fill="none"/>"#);
            let ly = MARGIN.2 + 20.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                left + 10.0,
                left + 30.0,
                left + 36.0,
                ly + 4.0,
                escape(&series.label)
            );
        }

        for p in &self.observed {
            let (px, py) = (ax.px(scale.encode(p.date)), ax.py(p.h_minutes));
            let fill = if p.k_thinking { "#d62728" } else { "#1f77b4" };
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="{fill}"><title>{}</title></circle>"#, escape(&p.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn format_minutes(h: f64) -> String {
    if h >= 1.0 {
        format!("{}", (h * 100.0).round() / 100.0)
    } else {
        format!("{h:.2e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let mut c = Chart::new("A <b> & c", true);
        c.observed.push(ObservedPoint { label: "m".into(), date: d("2020-01-01"), h_minutes: 0.5, k_thinking: false });
        c.series.push(ForecastSeries {
            label: "fit".into(),
            fit_kind: "X".into(),
            points: vec![(d("2019-01-01"), 0.1), (d("2024-01-01"), 100.0)],
        });
        c.markers.push(Marker { label: "inflection".into(), date: d("2022-06-01") });
        let scale = TimeScale::default();
        let a = c.to_svg(&scale);
        assert_eq!(a, c.to_svg(&scale));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("A &lt;b&gt; &amp; c"));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn empty_chart_renders() {
        let svg = Chart::new("empty", false).to_svg(&TimeScale::default());
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
