//! Minimal static SVG line charts, one panel per plot stacked vertically.

use std::fmt::Write;

use crate::experiments::Plot;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 360.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn transform(v: f64, log: bool) -> Option<f64> {
    if !v.is_finite() {
        return None;
    }
    if log {
        (v > 0.0).then(|| v.log10())
    } else {
        Some(v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else {
        format!("{v:.3}")
    }
}

fn panel(out: &mut String, plot: &Plot, top: f64) {
    let series: Vec<(String, Vec<(f64, f64)>)> = plot
        .series
        .iter()
        .map(|s| {
            let pts = s
                .points
                .iter()
                .filter_map(|(x, y)| Some((transform(*x, plot.log_x)?, transform(*y, plot.log_y)?)))
                .collect();
            (s.label.clone(), pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    let (w, h) = (WIDTH - MARGIN_L - MARGIN_R, PANEL - MARGIN_T - MARGIN_B);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_L + w / 2.0,
        top + 24.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##,
        top + MARGIN_T
    );
    if all.is_empty() {
        return;
    }
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-300 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * w;
    let py = |y: f64| top + MARGIN_T + h - (y - y0) / (y1 - y0) * h;
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            px(fx),
            top + MARGIN_T + h + 14.0,
            tick_label(fx, plot.log_x)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN_L - 4.0,
            py(fy) + 3.0,
            tick_label(fy, plot.log_y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        MARGIN_L + w / 2.0,
        top + PANEL - 12.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{y}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(&plot.y_label),
        y = top + MARGIN_T + h / 2.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ =
            writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, d.join(" "));
        let ly = top + MARGIN_T + 12.0 + 14.0 * i as f64;
        let lx = MARGIN_L + w + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="10">{}</text>"#,
            lx + 16.0,
            lx + 20.0,
            ly + 3.0,
            escape(label)
        );
    }
}

pub fn render(plots: &[Plot]) -> String {
    let height = PANEL * plots.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    out.push('\n');
    for (i, p) in plots.iter().enumerate() {
        panel(&mut out, p, PANEL * i as f64);
    }
    out += "</svg>\n";
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Series;

    #[test]
    fn renders_log_panel_and_skips_nonpositive_points() {
        let p = Plot {
            title: "a<b".into(),
            x_label: "n".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series { label: "s".into(), points: vec![(250.0, 1e-3), (500.0, 0.0), (1000.0, 1e-5)] }],
        };
        let s = render(&[p]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
        let pts = s.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }
}
