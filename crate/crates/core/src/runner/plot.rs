//! Static SVG line plots of log columns against time.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::runner::log::SimulationLog;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Renders the named columns (see [`SimulationLog::column`]) against `t`.
pub fn render_svg(log: &SimulationLog, columns: &[&str]) -> Result<String> {
    if log.rows.is_empty() {
        return Err(Error::InvalidParameter("cannot plot an empty log".into()));
    }
    if columns.is_empty() {
        return Err(Error::InvalidParameter("no columns selected".into()));
    }
    let t = log.column("t")?;
    let series: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| log.column(c))
        .collect::<Result<_>>()?;
    let (t0, t1) = (t[0], *t.last().unwrap());
    let (mut lo, mut hi) = series
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("plotted values".into()));
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let sx = |v: f64| MARGIN + (v - t0) / span_t * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{m}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#bbbbbb" stroke-dasharray="4 4"/>"##,
            m = MARGIN,
            r = WIDTH - MARGIN,
            y = sy(0.0)
        );
    }
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="12">"#);
    for k in 0..=4 {
        let tv = t0 + span_t * k as f64 / 4.0;
        let yv = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(tv),
            HEIGHT - MARGIN + 18.0,
            tick(tv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    for (i, name) in columns.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
            WIDTH - MARGIN + 8.0,
            MARGIN + 16.0 * i as f64,
            COLORS[i % COLORS.len()],
            name
        );
    }
    let _ = writeln!(svg, "</g>");
    for (i, ys) in series.iter().enumerate() {
        let mut points = String::new();
        for (tv, yv) in t.iter().zip(ys) {
            let _ = write!(points, "{:.2},{:.2} ", sx(*tv), sy(*yv));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            points.trim_end()
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

pub fn emit_plot(log: &SimulationLog, columns: &[&str], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(log, columns)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::log::{EventFlags, LogRow};

    fn log(values: &[f64]) -> SimulationLog {
        SimulationLog {
            n: 1,
            rows: values
                .iter()
                .enumerate()
                .map(|(i, v)| LogRow {
                    t: i as f64,
                    x: vec![*v],
                    z: vec![0.0],
                    w: 0.0,
                    u: 0.0,
                    d: vec![0.0],
                    xi: 0.0,
                    event: EventFlags::default(),
                    x_delayed: vec![0.0],
                    u_observer: 0.0,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn flat_log_gives_flat_line() {
        let svg = render_svg(&log(&[0.0, 0.0, 0.0]), &["x1"]).unwrap();
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        let ys: Vec<&str> = pts
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(ys.len(), 3);
        assert!(ys.iter().all(|y| *y == ys[0]));
    }

    #[test]
    fn plot_writes_file_and_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        emit_plot(&log(&[1.0, -1.0, 0.5]), &["x1", "u"], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(render_svg(&SimulationLog::default(), &["x1"]).is_err());
        assert!(render_svg(&log(&[1.0]), &["x9"]).is_err());
    }
}
