//! Minimal deterministic SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        (lo, hi)
    } else {
        let pad = 0.5 * (1.0 + lo.abs());
        (lo - pad, hi + pad)
    }
}

fn label(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Renders `chart`. Non-finite points are dropped; every series must keep at least one point.
pub fn render(chart: &Chart) -> Result<String, CliError> {
    if chart.series.is_empty() {
        return Err(frg_flow::Error::Precondition("chart has no series".into()).into());
    }
    let series: Vec<(&str, Vec<(f64, f64)>)> = chart
        .series
        .iter()
        .map(|s| (s.label.as_str(), s.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect()))
        .collect();
    if let Some((name, _)) = series.iter().find(|(_, p)| p.is_empty()) {
        return Err(frg_flow::Error::Precondition(format!("series {name:?} has no finite points")).into());
    }
    let all = || series.iter().flat_map(|(_, p)| p.iter());
    let (x0, x1) = range(all().map(|p| p.0));
    let (y0, y1) = range(all().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&chart.title));
    let (bx, by) = (LEFT, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{bx:.2}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}" stroke="black"/>"#, LEFT + pw);
    let _ = writeln!(s, r#"<line x1="{bx:.2}" y1="{TOP:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="black"/>"#);
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{by:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, by + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, by + 16.0, label(xv));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{bx:.2}" y2="{py:.2}" stroke="black"/>"#, bx - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, bx - 6.0, py + 4.0, label(yv));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let ly = TOP + 12.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_to(chart: &Chart, path: &Path) -> Result<(), CliError> {
    let text = render(chart)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, text).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(series: Vec<Series>) -> Chart {
        Chart { title: "t".into(), x_label: "k".into(), y_label: "Γ".into(), series }
    }

    #[test]
    fn two_points_give_one_polyline() {
        let s = render(&chart(vec![Series::new("a", vec![(0.0, 1.0), (1.0, 2.0)])])).unwrap();
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
    }

    #[test]
    fn output_is_deterministic() {
        let c = chart(vec![Series::new("a", vec![(0.0, 1.0), (0.5, -3.0)]), Series::new("b <x>", vec![(0.2, 0.2)])]);
        let a = render(&c).unwrap();
        assert_eq!(a, render(&c).unwrap());
        assert!(a.contains("b &lt;x&gt;"));
    }

    #[test]
    fn empty_series_is_a_precondition_error() {
        assert!(matches!(render(&chart(vec![])), Err(CliError::Library(frg_flow::Error::Precondition(_)))));
        let bad = chart(vec![Series::new("a", vec![(f64::NAN, 1.0)])]);
        assert!(matches!(render(&bad), Err(CliError::Library(frg_flow::Error::Precondition(_)))));
    }

    #[test]
    fn constant_series_still_renders() {
        let s = render(&chart(vec![Series::new("flat", vec![(1.0, 2.0), (1.0, 2.0)])])).unwrap();
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}
