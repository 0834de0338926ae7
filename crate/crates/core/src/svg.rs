//! Minimal standalone SVG charts. The CSV next to each chart holds the
//! data; the chart embeds a provenance comment naming it and the run
//! parameters.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: [f64; 4] = [50.0, 20.0, 40.0, 60.0]; // top, right, bottom, left
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Join the points with a polyline; markers only otherwise.
    pub line: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, line: true }
    }

    pub fn scatter(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, line: false }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// XML comments may not contain `--`.
fn comment(s: &str) -> String {
    let mut c = s.replace("--", "- -");
    if c.ends_with('-') {
        c.push(' ');
    }
    c
}

fn header(out: &mut String, title: &str, provenance: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, "<!-- provenance: {} -->", comment(provenance));
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line or scatter chart with linear axes.
pub fn xy_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], provenance: &str) -> String {
    let mut out = String::new();
    header(&mut out, title, provenance);
    let (x0, x1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (top, right, bottom, left) = (MARGIN[0], W - MARGIN[1], H - MARGIN[2], MARGIN[3]);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let py = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let _ = writeln!(out, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, right - left, bottom - top);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(xv), bottom + 16.0, tick(xv));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 4.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + right) / 2.0, H - 6.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        (top + bottom) / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| (px(x), py(y))).collect();
        if s.line && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        let r = if s.line { 3.0 } else { 1.5 };
        for (x, y) in &pts {
            let _ = writeln!(out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="{r}" fill="{color}"/>"#);
        }
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, right - 150.0, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, right - 135.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Blue-to-yellow ramp for `t` in `[0, 1]`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = (68.0 + t * (253.0 - 68.0), 1.0 + t * (231.0 - 1.0), 84.0 + t * (37.0 - 84.0));
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Side-by-side heatmaps sharing one colour scale. Each grid is indexed
/// `[row][col]`; `row_labels` and `col_labels` annotate the axes.
pub fn heatmaps(title: &str, panels: &[(&str, &[Vec<f64>])], row_labels: &[String], col_labels: &[String], provenance: &str) -> String {
    let mut out = String::new();
    header(&mut out, title, provenance);
    let (lo, hi) = extent(panels.iter().flat_map(|(_, g)| g.iter().flatten().copied()));
    let n = panels.len().max(1) as f64;
    let panel_h = (H - MARGIN[0] - MARGIN[2]) / n;
    for (p, (name, grid)) in panels.iter().enumerate() {
        let rows = grid.len().max(1);
        let cols = grid.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let top = MARGIN[0] + p as f64 * panel_h + 16.0;
        let cw = (W - MARGIN[1] - MARGIN[3]) / cols as f64;
        let ch = (panel_h - 36.0) / rows as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, MARGIN[3], top - 4.0, escape(name));
        for (r, row) in grid.iter().enumerate() {
            if let Some(l) = row_labels.get(r) {
                let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN[3] - 4.0, top + ch * (r as f64 + 0.6), escape(l));
            }
            for (c, &v) in row.iter().enumerate() {
                let fill = if v.is_finite() { ramp((v - lo) / (hi - lo)) } else { "#cccccc".into() };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{fill}"><title>{v:.2}</title></rect>"#,
                    MARGIN[3] + c as f64 * cw,
                    top + r as f64 * ch,
                    cw,
                    ch
                );
            }
        }
        for (c, l) in col_labels.iter().enumerate().step_by(4) {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, MARGIN[3] + cw * (c as f64 + 0.5), top + ch * rows as f64 + 14.0, escape(l));
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">scale {lo:.1} .. {hi:.1}</text>"#, W - MARGIN[1], H - 8.0);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_deterministic_and_well_formed() {
        let s = [Series::line("a", vec![(1.0, 2.0), (2.0, 3.0)]), Series::scatter("b<c", vec![(0.5, f64::NAN)])];
        let a = xy_plot("t", "x", "y", &s, "source=x.csv -- seed=1");
        assert_eq!(a, xy_plot("t", "x", "y", &s, "source=x.csv -- seed=1"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("<!-- provenance: source=x.csv - - seed=1 -->"));
        assert!(a.contains("b&lt;c") && a.contains("<polyline"));
    }

    #[test]
    fn heatmap_cell_count() {
        let g = vec![vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0]];
        let svg = heatmaps("h", &[("true", &g), ("pred", &g)], &["r0".into(), "r1".into()], &["c0".into()], "p");
        assert_eq!(svg.matches("<title>").count(), 12);
    }

    #[test]
    fn degenerate_extent() {
        assert_eq!(extent([2.0, 2.0].into_iter()), (1.5, 2.5));
        assert_eq!(extent(std::iter::empty()), (0.0, 1.0));
    }
}
