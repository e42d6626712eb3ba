//! Static log-log chart of `|estimate|` against `n`.

use std::fmt::Write as _;

use saa_lab_core::estimators::{ErrorSeries, RateFit};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const PAD: f64 = 60.0;

fn colour(i: usize) -> &'static str {
    ["#1f77b4", "#d62728", "#2ca02c"][i % 3]
}

/// One polyline per series through its positive estimates, plus a dashed
/// line for each available fit.
pub fn render(series: &[(&ErrorSeries, Option<&RateFit>)]) -> String {
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(s, _)| {
            s.checkpoints
                .iter()
                .zip(&s.estimates)
                .filter(|(&n, e)| n > 0 && e.abs() > 0.0)
                .map(|(&n, e)| ((n as f64).log10(), e.abs().log10()))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * PAD);
    let py = |y: f64| HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = HEIGHT - PAD,
        r = WIDTH - PAD
    );
    for k in x0.ceil() as i64..=x1.floor() as i64 {
        let x = px(k as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{k}</text>"#,
            HEIGHT - PAD + 18.0
        );
    }
    for k in y0.ceil() as i64..=y1.floor() as i64 {
        let y = py(k as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">1e{k}</text>"#,
            PAD - 6.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );

    for (i, ((s, fit), pts)) in series.iter().zip(&points).enumerate() {
        let c = colour(i);
        if !pts.is_empty() {
            let coords: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
        }
        if let Some(f) = fit {
            let ln10 = std::f64::consts::LN_10;
            let (a, b) = (
                (f.window.0.max(1) as f64).log10().max(x0),
                (f.window.1 as f64).log10().min(x1),
            );
            let line = |x: f64| (f.intercept + f.slope * x * ln10) / ln10;
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="6 4"/>"#,
                px(a),
                py(line(a)),
                px(b),
                py(line(b))
            );
        }
        let label = match fit {
            Some(f) => format!("{} (slope {:.3})", s.kind.as_str(), f.slope),
            None => s.kind.as_str().to_string(),
        };
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{c}">{label}</text>"#,
            WIDTH - PAD - 150.0,
            PAD + 16.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
