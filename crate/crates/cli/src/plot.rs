//! Hand-written SVG: map overlays and line charts.

use std::fmt::Write;

use stlplan::sdf::OccupancyMask;
use stlplan::sim::RobotState;
use stlplan::stl::CircleRegion;

/// Pixels per meter in map overlays.
const SCALE: f64 = 200.0;

/// A map overlay. Geometry is in world meters with y up.
#[derive(Debug, Clone, Default)]
pub struct PlotSpec<'a> {
    pub extent: [f64; 2],
    pub mask: Option<&'a OccupancyMask>,
    pub regions: Vec<(String, CircleRegion)>,
    pub waypoints: Vec<[f64; 2]>,
    pub trace: Vec<RobotState>,
    pub title: String,
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (x, y) in points {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    s.trim_end().to_string()
}

impl PlotSpec<'_> {
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (p[0] * SCALE, (self.extent[1] - p[1]) * SCALE)
    }

    pub fn to_svg(&self) -> String {
        let w = self.extent[0] * SCALE;
        let h = self.extent[1] * SCALE;
        let title_h = 24.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{:.0}" viewBox="0 {} {w:.2} {:.2}">"#,
            h + title_h,
            -title_h,
            h + title_h
        );
        let _ = writeln!(s, r#"<title>{}</title>"#, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<text x="4" y="-7" font-family="sans-serif" font-size="14">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff" stroke="#000000"/>"##
        );
        if let Some(m) = self.mask {
            // One rect per horizontal run of obstacle cells.
            let cw = w / m.width() as f64;
            let ch = h / m.height() as f64;
            let _ = writeln!(s, r##"<g fill="#404040" shape-rendering="crispEdges">"##);
            for j in 0..m.height() {
                let y = h - (j + 1) as f64 * ch;
                let mut i = 0;
                while i < m.width() {
                    if !m.get(i, j) {
                        i += 1;
                        continue;
                    }
                    let i0 = i;
                    while i < m.width() && m.get(i, j) {
                        i += 1;
                    }
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{ch:.2}"/>"#,
                        i0 as f64 * cw,
                        (i - i0) as f64 * cw
                    );
                }
            }
            let _ = writeln!(s, "</g>");
        }
        for (name, r) in &self.regions {
            let (cx, cy) = self.px(r.center);
            let _ = writeln!(
                s,
                r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#4a90d9" fill-opacity="0.25" stroke="#4a90d9"/>"##,
                r.radius * SCALE
            );
            let _ = writeln!(
                s,
                r#"<text x="{cx:.2}" y="{cy:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
                escape(name)
            );
        }
        if self.trace.len() > 1 {
            let pts = polyline(self.trace.iter().map(|st| self.px(st.position())));
            let _ = writeln!(
                s,
                r##"<polyline points="{pts}" fill="none" stroke="#2ca02c" stroke-width="2"/>"##
            );
        }
        if !self.waypoints.is_empty() {
            let pts = polyline(self.waypoints.iter().map(|p| self.px(*p)));
            let _ = writeln!(
                s,
                r##"<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="4 3"/>"##
            );
            for p in &self.waypoints {
                let (x, y) = self.px(*p);
                let _ = writeln!(
                    s,
                    r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#d62728"/>"##
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// A line chart of one or more named series.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 45.0);
    let pts = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<path d="M{left},{top} V{} H{}" fill="none" stroke="#000000"/>"##,
        h - bottom,
        w - right
    );
    for (v, anchor) in [(y0, h - bottom), (y1, top)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#,
            left - 4.0
        );
    }
    for (v, x) in [(x0, left), (x1, w - right)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{v:.4e}</text>"#,
            h - bottom + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (k, (name, v)) in series.iter().enumerate() {
        let c = colours[k % colours.len()];
        let pts = polyline(
            v.iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (sx(*x), sy(*y))),
        );
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>"#
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{c}">{}</text>"#,
            left + 8.0,
            top + 14.0 * (k + 1) as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed svg")
    }

    #[test]
    fn overlay_is_valid_and_flips_y() {
        let m =
            OccupancyMask::from_fn(4, 4, [2.0, 2.0], |i, j| i >= 1 && i <= 2 && j == 0).unwrap();
        let spec = PlotSpec {
            extent: [2.0, 2.0],
            mask: Some(&m),
            regions: vec![("A<1>".into(), CircleRegion::new([0.5, 1.5], 0.2))],
            waypoints: vec![[0.0, 0.0], [1.0, 1.0]],
            trace: vec![
                RobotState::new(0.0, 0.0, 0.0),
                RobotState::new(0.5, 0.5, 0.0),
            ],
            title: "run & \"test\"".into(),
        };
        let svg = spec.to_svg();
        let doc = parse(&svg);
        // The bottom obstacle row becomes a single run at the bottom of the image.
        let runs: Vec<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("rect") && n.parent().is_some_and(|p| p.has_tag_name("g")))
            .collect();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].attribute("x"), Some("100.00"));
        assert_eq!(runs[0].attribute("y"), Some("300.00"));
        assert_eq!(runs[0].attribute("width"), Some("200.00"));
        let c = doc
            .descendants()
            .find(|n| n.has_tag_name("circle"))
            .unwrap();
        assert_eq!(c.attribute("cy"), Some("100.00"));
        assert!(svg.contains("A&lt;1&gt;"));
    }

    #[test]
    fn chart_is_valid_with_degenerate_series() {
        parse(&line_chart(
            "t",
            "x",
            "y",
            &[("a", vec![]), ("b", vec![(1.0, 2.0)])],
        ));
        parse(&line_chart(
            "t",
            "x",
            "y",
            &[("a", vec![(0.0, f64::NAN), (1.0, 0.5), (2.0, 0.7)])],
        ));
    }
}
